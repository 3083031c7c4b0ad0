"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from dar_rerank.autograd.tensor import Tensor


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    checked: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    max_entries: int | None = 12,
    seed: int = 0,
) -> GradCheckResult:
    """
    Compare analytic gradients of `loss_fn()` against central differences.

    `loss_fn` must rebuild the graph on every call. At most `max_entries`
    randomly chosen coordinates per parameter are perturbed. The relative
    error per coordinate is |a - n| / max(|a| + |n|, 1e-6).
    """
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    rng = np.random.default_rng(seed)
    worst, worst_name, checked = 0.0, "", 0
    for name, p in params.items():
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            coords = rng.choice(flat.size, size=max_entries, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{i}]"
    return GradCheckResult(max_rel_error=float(worst), worst_param=worst_name, checked=checked)
