"""
Numeric substrate: float64 tensors, reverse-mode autodiff, Adam,
finite-difference checks and the binary parameter container.
"""

from dar_rerank.autograd.tensor import Tensor, Function, parameter, zero_grads, set_debug_checks, no_grad
from dar_rerank.autograd.optim import AdamState, adam_step
from dar_rerank.autograd.gradcheck import check_gradients, GradCheckResult
from dar_rerank.autograd.checkpoint import save_container, load_container, Container
from dar_rerank.autograd import ops

__all__ = [
    "Tensor",
    "Function",
    "parameter",
    "zero_grads",
    "set_debug_checks",
    "no_grad",
    "AdamState",
    "adam_step",
    "check_gradients",
    "GradCheckResult",
    "save_container",
    "load_container",
    "Container",
    "ops",
]
