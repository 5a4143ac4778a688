"""Exact parameter counting and hidden-size solving.

Counts cover trainable parameters only: cell weights and biases, combiner
weights and biases, head projection and biases, and CRF transitions.  The
frozen embedding table is excluded.  Counting walks the same shape rules
the model builder uses, so counts and instantiated models cannot drift
apart.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nor import (NorTopology, gate_topology, ma2_topology,
                  ma_topology, ms_topology, ss_topology)

__all__ = [
    "LayerSpec", "HeadSpec", "ModelConfig", "BudgetError",
    "layer_topology", "count_params", "solve_hidden_size", "emit_sizing_table",
]

CELL_KINDS = ("simple", "gru", "lstm")
COMPOSITE_KINDS = ("parallel", "parallel2", "mixed", "shared", "gated")

_GATES = {"simple": 1, "gate": 1, "gru": 3, "lstm": 4}

# default subnetwork counts for the composite layer kinds
_DEFAULT_N = {"parallel": 3, "parallel2": 3, "mixed": (2, 2), "shared": 3, "gated": 3}


class BudgetError(ValueError):
    """Raised when a parameter budget cannot be met."""


@dataclass(frozen=True)
class LayerSpec:
    """One recurrent layer: a plain cell or a composite topology.

    n is the subnetwork count (a pair (one_tier, two_tier) for "mixed",
    the pair count for "gated"); None picks the kind's default.  wiring
    only matters for "parallel2".
    """

    kind: str
    n: int | tuple[int, int] | None = None
    wiring: str = "tier1_own"

    def __post_init__(self):
        if self.kind not in CELL_KINDS + COMPOSITE_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in CELL_KINDS and self.n is not None:
            raise ValueError(f"layer kind {self.kind!r} takes no subnetwork count")

    def resolved_n(self):
        if self.kind in CELL_KINDS:
            return None
        return self.n if self.n is not None else _DEFAULT_N[self.kind]


@dataclass(frozen=True)
class HeadSpec:
    kind: str       # "softmax" | "crf"
    classes: int

    def __post_init__(self):
        if self.kind not in ("softmax", "crf"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.classes < 1:
            raise ValueError("head needs at least one class")


@dataclass(frozen=True)
class ModelConfig:
    """Full architecture minus the embedding table.

    hidden may stay None when the config exists only to be sized by
    solve_hidden_size.
    """

    input_dim: int
    layers: tuple[LayerSpec, ...]
    head: HeadSpec
    bidirectional: bool = False
    hidden: int | None = None

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.layers:
            raise ValueError("need at least one recurrent layer")
        if self.hidden is not None and self.hidden < 1:
            raise ValueError("hidden must be positive when set")

    def with_hidden(self, hidden: int) -> "ModelConfig":
        return ModelConfig(self.input_dim, self.layers, self.head,
                           self.bidirectional, hidden)


def layer_topology(spec: LayerSpec, hidden: int) -> NorTopology | None:
    """Topology object for a composite layer spec; None for plain cells."""
    if spec.kind in CELL_KINDS:
        return None
    n = spec.resolved_n()
    if spec.kind == "parallel":
        return ma_topology(n, hidden)
    if spec.kind == "parallel2":
        return ma2_topology(n, hidden, wiring=spec.wiring)
    if spec.kind == "mixed":
        if not (isinstance(n, tuple) and len(n) == 2):
            raise ValueError("mixed layers take n as a (one_tier, two_tier) pair")
        return ms_topology(n[0], n[1], hidden)
    if spec.kind == "shared":
        return ss_topology(n, hidden)
    return gate_topology(n, hidden)


def _cell_cost(kind: str, input_dim: int, hidden: int) -> int:
    return _GATES[kind] * (input_dim * hidden + hidden * hidden + hidden)


def _topology_cost(topo: NorTopology, input_dim: int) -> int:
    total = 0
    for spec in topo.subnetworks:
        kind1, h1 = spec.tiers[0]
        total += _cell_cost(kind1, input_dim, h1)
        if len(spec.tiers) == 2:
            kind2, h2 = spec.tiers[1]
            if spec.wiring == "tier1_own":
                d2 = h1
            elif spec.wiring == "layer_input":
                d2 = input_dim
            else:
                d2 = sum(s.tiers[0][1] for s in topo.subnetworks)
            total += _cell_cost(kind2, d2, h2)
    if topo.kind == "gated":
        concat_dim = sum(s.tiers[-1][1] for s in topo.subnetworks[0::2])
    else:
        concat_dim = sum(s.tiers[-1][1] for s in topo.subnetworks)
    total += topo.combiner_out_dim * concat_dim + topo.combiner_out_dim
    return total


def _layer_cost(spec: LayerSpec, input_dim: int, hidden: int) -> int:
    if spec.kind in CELL_KINDS:
        return _cell_cost(spec.kind, input_dim, hidden)
    return _topology_cost(layer_topology(spec, hidden), input_dim)


def count_params(config: ModelConfig, hidden: int | None = None) -> int:
    """Exact trainable-parameter count for the architecture at a hidden size."""
    h = config.hidden if hidden is None else hidden
    if h is None:
        raise ValueError("no hidden size: set config.hidden or pass hidden=")
    if h < 0:
        raise ValueError("hidden size cannot be negative")
    total = 0
    d = config.input_dim
    for spec in config.layers:
        if h == 0:
            # degenerate but well-defined: a zero-width layer holds nothing
            d = 0
            continue
        per_direction = _layer_cost(spec, d, h)
        if config.bidirectional:
            total += 2 * per_direction
            d = 2 * h
        else:
            total += per_direction
            d = h
    k = config.head.classes
    total += k * d + k
    if config.head.kind == "crf":
        total += (k + 2) * (k + 2)
    return total


def solve_hidden_size(config: ModelConfig, budget: int, tolerance: int | None = None) -> int:
    """Hidden size whose exact count lands nearest the budget.

    The count is strictly increasing in h, so the solver bisects for the
    first h at or above the budget and compares it with its predecessor;
    exact ties prefer the smaller h.  A budget below the h=1 count is an
    error.  When tolerance is given, the winning count must land within
    it or a BudgetError is raised.
    """
    if budget < count_params(config, 1):
        raise BudgetError(f"budget {budget} below minimum {count_params(config, 1)} (h=1)")
    lo, hi = 1, 2
    while count_params(config, hi) < budget:
        lo, hi = hi, hi * 2
    while lo < hi:
        mid = (lo + hi) // 2
        if count_params(config, mid) < budget:
            lo = mid + 1
        else:
            hi = mid
    above = lo
    candidates = [above] if above == 1 else [above - 1, above]
    best = min(candidates, key=lambda h: (abs(count_params(config, h) - budget), h))
    if tolerance is not None and abs(count_params(config, best) - budget) > tolerance:
        raise BudgetError(
            f"no hidden size lands within {tolerance} of {budget}; "
            f"closest is h={best} with {count_params(config, best)}")
    return best


def emit_sizing_table(tasks=None, topologies=None, reference=None, csv_format: bool = False) -> str:
    """Solve the standard sizing grid and render it for comparison.

    Any solved size that disagrees with the reference grid is flagged in
    place, never replaced.  csv_format=True emits one delimited row per
    (task, budget, topology) cell instead of the aligned table.
    """
    from . import presets

    tasks = tuple(tasks) if tasks is not None else tuple(presets.TASKS)
    topologies = tuple(topologies) if topologies is not None else presets.STANDARD_TOPOLOGIES
    if reference is None:
        reference = presets.REFERENCE_SIZES

    rows = []
    for task in tasks:
        for budget in presets.default_budgets(task):
            cells = []
            for topo in topologies:
                config = presets.model_config(task, topo)
                h = solve_hidden_size(config, budget)
                ref = reference.get((task, topo, budget))
                cells.append((topo, h, count_params(config, h), ref))
            rows.append((task, budget, cells))

    if csv_format:
        import csv
        import io
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["task", "budget", "topology", "hidden", "param_count",
                         "delta", "reference", "match"])
        for task, budget, cells in rows:
            for topo, h, count, ref in cells:
                writer.writerow([task, budget, topo, h, count, count - budget,
                                 "" if ref is None else ref,
                                 "" if ref is None else ("yes" if h == ref else "no")])
        return buf.getvalue()

    def fmt(h, ref):
        if ref is None or h == ref:
            return str(h)
        return f"{h}(!{ref})"

    width = 10
    header = f"{'task':<8}{'budget':>9}  " + "".join(f"{t:>{width}}" for t in topologies)
    lines = [header]
    for task, budget, cells in rows:
        line = f"{task:<8}{budget:>9}  " + "".join(
            f"{fmt(h, ref):>{width}}" for _, h, _, ref in cells)
        lines.append(line)
    return "\n".join(lines)
