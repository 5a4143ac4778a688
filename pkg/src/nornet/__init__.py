"""nornet: networks of recurrent networks, built on a small float64 autodiff tape.

The library provides four things: an autodiff substrate (`nornet.tensor`),
recurrent cells and composite recurrent layers (`nornet.cells`, `nornet.nor`),
task heads and training machinery (`nornet.heads`, `nornet.training`), and an
exact parameter-budget solver (`nornet.budget`) that sizes hidden dimensions
to hit a target parameter count.
"""

from .tensor import Tensor, Tape, ShapeError, grad_check

__version__ = "0.1.0"

__all__ = ["Tensor", "Tape", "ShapeError", "grad_check", "__version__"]
