"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation is a `Function` subclass with a `forward`
on raw numpy arrays and a `backward` returning one gradient per input.
`Function.apply` wires the result into the graph; `Tensor.backward`
walks the graph in reverse topological order and accumulates gradients
additively, so a tensor consumed twice receives the sum of both paths.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from dar_rerank.errors import GraphError, NumericError

logger = logging.getLogger(__name__)

_DEBUG_CHECKS = False
_GRAD_ENABLED = True


def set_debug_checks(enabled: bool) -> None:
    """Enable the finite-output check performed after every forward op."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block; results never require grad."""
    global _GRAD_ENABLED
    previous, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Function:
    """Base class for differentiable operations."""

    name = "function"
    # set on ops whose output may hold -inf by construction
    allows_inf = False

    def __init__(self, *inputs: "Tensor", **kwargs: Any):
        self.inputs = inputs
        self.kwargs = kwargs
        self.saved: dict[str, Any] = {}

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        """Return dL/d(input) for every input, given dL/d(output)."""
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        fn = cls(*inputs, **kwargs)
        out = fn.forward(*(t.data for t in inputs))
        out = np.asarray(out, dtype=np.float64)

        if _DEBUG_CHECKS and not fn.allows_inf and not np.all(np.isfinite(out)):
            if all(np.all(np.isfinite(t.data)) for t in inputs):
                raise NumericError(
                    f"{fn.name} produced non-finite output from finite inputs "
                    f"(shapes {[t.shape for t in inputs]})"
                )

        requires_grad = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)


class Tensor:
    """A float64 array that may participate in a gradient graph."""

    __array_priority__ = 100

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        creator: Function | None = None,
        name: str = "",
    ):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        self.requires_grad = requires_grad
        self.creator = creator
        self.grad: np.ndarray | None = None
        self.name = name
        self._released = False

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # ── Properties ───────────────────────────────────────────────────────

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    # ── Operators ────────────────────────────────────────────────────────

    def __add__(self, other):
        from dar_rerank.autograd import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from dar_rerank.autograd import ops
        return ops.add(self, ops.scale(ops.as_tensor(other), -1.0))

    def __rsub__(self, other):
        from dar_rerank.autograd import ops
        return ops.add(ops.scale(self, -1.0), other)

    def __neg__(self):
        from dar_rerank.autograd import ops
        return ops.scale(self, -1.0)

    def __mul__(self, other):
        from dar_rerank.autograd import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from dar_rerank.autograd import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from dar_rerank.autograd import ops
        return ops.index(self, index)

    # ── Backward pass ────────────────────────────────────────────────────

    def backward(self) -> None:
        """
        Populate `.grad` on every leaf tensor with requires_grad on the path.

        The loss must hold a single value. The graph is released afterwards;
        calling backward again on the same loss, or on a new loss built on
        top of any of its intermediate tensors, raises GraphError.
        """
        if self._released:
            raise GraphError("backward called twice on the same graph; rebuild the loss first")
        if self.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")

        order = _topological_order(self)
        for node in order:
            if node._released:
                name = f" {node.name!r}" if node.name else ""
                raise GraphError(f"backward reached an intermediate tensor{name} whose graph was already "
                                 "released; rebuild it before differentiating again")
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                if node.requires_grad:
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            input_grads = node.creator.backward(grad)
            for inp, g in zip(node.creator.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                grads[key] = g if key not in grads else grads[key] + g

        for node in order:
            if node.creator is not None:
                node.creator = None
                node._released = True
        self._released = True


def _topological_order(root: Tensor) -> list[Tensor]:
    """Inputs before consumers; iterative to survive deep graphs."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for inp in node.creator.inputs:
                if inp.requires_grad and id(inp) not in visited:
                    stack.append((inp, False))
    return order


def parameter(data: Any, name: str = "") -> Tensor:
    """Leaf tensor that takes gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
