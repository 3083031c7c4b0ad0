"""Adam optimizer over named parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dar_rerank.autograd.tensor import Tensor
from dar_rerank.errors import DimensionError, NumericError


@dataclass
class AdamState:
    """Moment buffers and step counter for a fixed set of named parameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def to_entries(self) -> dict[str, np.ndarray]:
        entries = {f"adam.m.{k}": a for k, a in self.m.items()}
        entries.update({f"adam.v.{k}": a for k, a in self.v.items()})
        return entries


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """
    Apply one bias-corrected Adam update in place.

    Parameters whose `.grad` is None are treated as having zero gradient.
    A NaN or Inf anywhere in the gradients aborts the whole step before
    any parameter or moment buffer is touched.
    """
    grads = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if g.shape != p.shape:
            raise DimensionError(f"adam_step: grad {g.shape} does not match parameter {name} {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adam_step: non-finite gradient in parameter {name!r}; step aborted")
        grads[name] = g

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        state.m[name], state.v[name] = m, v
