"""Reverse-mode automatic differentiation over float64 numpy arrays.

The graph is rebuilt on every forward pass: opening a Tape makes it the
active recorder, every op executed while it is open appends one node, and
backward() walks the node list in reverse.  Tensors created outside a tape
(parameters, constants) are registered lazily the first time an op touches
them, so the same parameter tensors can be reused across many tapes.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor", "Tape", "ShapeError", "backward", "grad_check", "GradCheckReport",
    "add", "sub", "neg", "scale", "elementwise_mul", "matmul", "maximum",
    "relu", "sigmoid", "tanh", "concat", "reshape", "softmax_rows",
    "log_sum_exp", "reduce_sum",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


_state = threading.local()


def _active() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    """A float64 array plus the id of the tape node that produced it."""

    __slots__ = ("data", "node_id", "_tape")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.node_id = None
        self._tape = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise_mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, node_id={self.node_id})"


@dataclass
class _Node:
    kind: str
    inputs: tuple
    # maps the output gradient to one gradient per input; None for leaves
    backward: Callable | None
    shape: tuple


class Tape:
    """Append-only record of one forward pass.

    Nodes are stored in execution order, so every node's inputs appear
    earlier in the list; backward() relies on that.  Only one tape may be
    active per thread at a time.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.gradients: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        if _active() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False

    def _leaf_id(self, t: Tensor) -> int:
        if t._tape is self and t.node_id is not None:
            return t.node_id
        nid = len(self.nodes)
        self.nodes.append(_Node("leaf", (), None, t.data.shape))
        t._tape = self
        t.node_id = nid
        return nid

    def _record(self, kind: str, out: np.ndarray, inputs: tuple, bwd: Callable) -> Tensor:
        ids = tuple(self._leaf_id(t) for t in inputs)
        res = Tensor(out)
        res.node_id = len(self.nodes)
        res._tape = self
        self.nodes.append(_Node(kind, ids, bwd, out.shape))
        return res

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Accumulate d(loss)/d(node) for every node reachable from loss."""
        if loss._tape is not self or loss.node_id is None:
            raise ValueError("loss tensor was not produced on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar-shaped, got {loss.data.shape}")
        partial: list[np.ndarray | None] = [None] * len(self.nodes)
        partial[loss.node_id] = np.ones_like(loss.data)
        for nid in range(loss.node_id, -1, -1):
            g = partial[nid]
            node = self.nodes[nid]
            if g is None or node.backward is None:
                continue
            for iid, gi in zip(node.inputs, node.backward(g)):
                if gi is None:
                    continue
                if partial[iid] is None:
                    partial[iid] = np.zeros(self.nodes[iid].shape)
                partial[iid] += gi
        self.gradients = {i: g for i, g in enumerate(partial) if g is not None}
        return self.gradients

    def grad(self, t: Tensor) -> np.ndarray:
        """Gradient for t, zeros if t never influenced the loss."""
        if t._tape is self and t.node_id is not None and t.node_id in self.gradients:
            return self.gradients[t.node_id]
        return np.zeros_like(t.data)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    return tape.backward(loss)


def _emit(kind, out, inputs, bwd) -> Tensor:
    tape = _active()
    if tape is None:
        return Tensor(out)
    return tape._record(kind, out, inputs, bwd)


# --- reductions ------------------------------------------------------------
#
# Matrix products accumulate with a strict left-to-right running sum
# (cumsum) instead of BLAS.  Sequential accumulation is what makes two of
# the library's guarantees hold at the bit level: summands that are exactly
# zero never perturb the result, so a weight matrix padded with zero blocks
# computes bit-identical outputs to its unpadded form regardless of how the
# platform BLAS would regroup the terms.


def _seqsum_last(prod: np.ndarray) -> np.ndarray:
    if prod.shape[-1] == 0:
        return np.zeros(prod.shape[:-1])
    return np.cumsum(prod, axis=-1)[..., -1]


def _mm2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # (m,k) @ (k,n) with sequential accumulation over k
    return _seqsum_last(a[:, None, :] * b.T[None, :, :])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D/2-D operands, 1-D treated as vector."""
    A, B = a.data, b.data
    if A.ndim not in (1, 2) or B.ndim not in (1, 2):
        raise ShapeError(f"matmul expects 1-D or 2-D operands, got {A.shape} and {B.shape}")
    ka = A.shape[-1]
    kb = B.shape[0]
    if ka != kb:
        raise ShapeError(f"matmul inner dimensions differ: {A.shape} vs {B.shape}")
    A2 = A if A.ndim == 2 else A[None, :]
    B2 = B if B.ndim == 2 else B[:, None]
    out2 = _mm2(A2, B2)
    if A.ndim == 1 and B.ndim == 1:
        out = out2[0, 0]
    elif A.ndim == 1:
        out = out2[0]
    elif B.ndim == 1:
        out = out2[:, 0]
    else:
        out = out2

    def bwd(g):
        g2 = np.asarray(g).reshape(A2.shape[0], B2.shape[1])
        ga = _mm2(g2, B2.T).reshape(A.shape)
        gb = _mm2(A2.T, g2).reshape(B.shape)
        return ga, gb

    return _emit("matmul", out, (a, b), bwd)


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} operands differ in shape: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "elementwise_mul")
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient flows to the first operand."""
    _same_shape(a, b, "maximum")
    take_a = a.data >= b.data
    out = np.where(take_a, a.data, b.data)
    return _emit("maximum", out, (a, b), lambda g: (g * take_a, g * ~take_a))


def relu(a: Tensor) -> Tensor:
    # subgradient at exactly 0 is defined as 0
    mask = a.data > 0
    return _emit("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if len(parts) == 0:
        raise ShapeError("concat of zero tensors")
    datas = [p.data for p in parts]
    nd = datas[0].ndim
    if any(d.ndim != nd for d in datas):
        raise ShapeError("concat operands differ in rank")
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]

    def bwd(g):
        grads, at = [], 0
        for s in sizes:
            idx = [slice(None)] * nd
            idx[axis] = slice(at, at + s)
            grads.append(g[tuple(idx)])
            at += s
        return tuple(grads)

    return _emit("concat", out, tuple(parts), bwd)


def slice_(a: Tensor, key) -> Tensor:
    """Basic indexing (ints and slices, no steps); gradients scatter back."""
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if isinstance(k, slice):
            if k.step not in (None, 1):
                raise ShapeError("sliced steps are not supported")
        elif not isinstance(k, (int, np.integer)):
            raise ShapeError(f"unsupported index component: {k!r}")
    out = a.data[key]
    in_shape = a.data.shape

    def bwd(g):
        full = np.zeros(in_shape)
        full[key] = g
        return (full,)

    return _emit("slice", out, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.data.shape
    out = a.data.reshape(shape)
    return _emit("reshape", out, (a,), lambda g: (np.asarray(g).reshape(orig),))


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis (a 1-D input is one row)."""
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _emit("softmax_rows", out, (a,), bwd)


def log_sum_exp(a: Tensor) -> Tensor:
    """log(sum(exp(v))) of a 1-D tensor, computed shift-stably; returns a scalar."""
    v = a.data
    if v.ndim != 1:
        raise ShapeError(f"log_sum_exp expects a vector, got shape {v.shape}")
    m = v.max()
    e = np.exp(v - m)
    s = e.sum()
    out = np.asarray(m + math.log(s))
    soft = e / s
    return _emit("log_sum_exp", out, (a,), lambda g: (np.asarray(g) * soft,))


def reduce_sum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())
    in_shape = a.data.shape
    return _emit("sum", out, (a,), lambda g: (np.broadcast_to(np.asarray(g), in_shape).copy(),))


# --- finite-difference verification ---------------------------------------


@dataclass
class GradCheckReport:
    """Per-parameter worst relative error between tape and finite differences."""

    errors: dict[str, float]
    tolerance: float
    step: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> list[str]:
        width = max((len(n) for n in self.errors), default=4)
        rows = []
        for name, err in sorted(self.errors.items()):
            mark = "ok" if err < self.tolerance else "FAIL"
            rows.append(f"{name:<{width}}  {err:12.3e}  {mark}")
        return rows


def grad_check(f: Callable[[], Tensor], params: dict[str, Tensor],
               step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare tape gradients of loss f() against central finite differences.

    f must be deterministic and is re-evaluated many times with individual
    parameter entries perturbed by ±step.  The caller is responsible for
    sampling a point away from relu/max kinks; at a kink the two estimates
    legitimately disagree.
    """
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = {name: tape.grad(p).copy() for name, p in params.items()}

    errors: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = float(f().data)
            flat[i] = keep - step
            dn = float(f().data)
            flat[i] = keep
            num[i] = (up - dn) / (2.0 * step)
        ana = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
        rel = np.abs(ana - num) / denom
        errors[name] = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(errors=errors, tolerance=tolerance, step=step)
