"""Multi-field video deinterlacer: deformable feature alignment plus
(efficient) self-attention over a small numpy autograd, with separate
even/odd field reconstruction."""

from .autograd import Tensor, backward, gradcheck, no_grad, track_allocations
from .backend import active_backend
from . import ops

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "gradcheck", "no_grad", "track_allocations",
    "active_backend", "ops", "__version__",
]
