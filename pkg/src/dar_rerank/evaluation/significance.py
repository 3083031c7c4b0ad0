"""
Paired randomization test over per-question binary outcomes.

Each trial swaps every aligned pair (a_i, b_i) with probability ½, which
is the same as flipping the sign of d_i = a_i − b_i. Pairs with d_i = 0
never change the statistic, so only the nonzero differences are
simulated. The p-value is add-one smoothed: (r + 1) / (R + 1).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats

from dar_rerank.errors import ConfigError, DataError
from dar_rerank.rankers.base import RankedList

logger = logging.getLogger(__name__)

# Sums of ±1 differences are integers; the tolerance only guards float noise.
TIE_TOLERANCE = 1e-12
EXACT_LIMIT = 20
_CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class OutcomeVector:
    """1 where the model's top-ranked answer is correct, per question id."""

    ids: tuple[str, ...]
    outcomes: np.ndarray

    def __post_init__(self):
        if len(self.ids) != len(self.outcomes):
            raise DataError(f"{len(self.ids)} ids but {len(self.outcomes)} outcomes")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.outcomes)) if len(self) else 0.0

    @classmethod
    def from_rankings(cls, rankings: Mapping[str, RankedList]) -> "OutcomeVector":
        ids = tuple(sorted(rankings))
        outcomes = np.array([1 if rankings[q].ranked_labels[0] == 1 else 0 for q in ids], dtype=np.int64)
        return cls(ids=ids, outcomes=outcomes)


def align(a: OutcomeVector, b: OutcomeVector) -> None:
    if a.ids == b.ids:
        return
    for i, (x, y) in enumerate(zip(a.ids, b.ids)):
        if x != y:
            raise DataError(f"outcome vectors misaligned at position {i}: {x!r} vs {y!r}")
    raise DataError(f"outcome vectors differ in length: {len(a)} vs {len(b)}")


@dataclass
class SignificanceResult:
    observed: float
    p_value: float
    trials: int
    exceedances: int
    n: int
    exact: bool = False
    ci_low: float = 0.0
    ci_high: float = 1.0
    p_at_1_a: float = 0.0
    p_at_1_b: float = 0.0
    labels: tuple[str, str] = field(default=("A", "B"))

    def summary(self) -> str:
        how = "exact enumeration" if self.exact else f"{self.trials:,} randomization trials"
        lines = [
            f"Paired randomization test: {self.labels[0]} vs {self.labels[1]} ({self.n} questions)",
            "",
            f"  P@1 {self.labels[0]:<12} {self.p_at_1_a:.4f}",
            f"  P@1 {self.labels[1]:<12} {self.p_at_1_b:.4f}",
            f"  observed diff    {self.observed:+.4f}",
            f"  p-value          {self.p_value:.5f}  ({how})",
        ]
        if not self.exact:
            lines.append(f"  exceedance 95% CI [{self.ci_low:.5f}, {self.ci_high:.5f}]")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "n": self.n,
            "p_at_1": [round(self.p_at_1_a, 6), round(self.p_at_1_b, 6)],
            "observed": self.observed,
            "p_value": self.p_value,
            "trials": self.trials,
            "exceedances": self.exceedances,
            "exact": self.exact,
            "exceedance_ci": [self.ci_low, self.ci_high],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def _differences(a: OutcomeVector, b: OutcomeVector) -> tuple[np.ndarray, float]:
    align(a, b)
    if len(a) == 0:
        raise DataError("randomization test over zero questions")
    d = a.outcomes.astype(np.float64) - b.outcomes.astype(np.float64)
    return d[d != 0], float(d.sum())


def randomization_test(a: OutcomeVector, b: OutcomeVector, trials: int = 100_000,
                       seed: int = 0, labels: tuple[str, str] = ("A", "B")) -> SignificanceResult:
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    d, observed_sum = _differences(a, b)
    threshold = abs(observed_sum) - TIE_TOLERANCE
    rng = np.random.default_rng(seed)

    exceed = 0
    if d.size == 0:
        exceed = trials
    else:
        chunk = max(1, _CHUNK_CELLS // d.size)
        done = 0
        while done < trials:
            size = min(chunk, trials - done)
            signs = rng.integers(0, 2, size=(size, d.size), dtype=np.int8) * 2 - 1
            exceed += int(np.count_nonzero(np.abs(signs @ d) >= threshold))
            done += size

    ci = stats.binomtest(exceed, trials).proportion_ci(confidence_level=0.95, method="exact")
    return SignificanceResult(
        observed=observed_sum / len(a),
        p_value=(exceed + 1) / (trials + 1),
        trials=trials,
        exceedances=exceed,
        n=len(a),
        ci_low=float(ci.low),
        ci_high=float(ci.high),
        p_at_1_a=a.accuracy,
        p_at_1_b=b.accuracy,
        labels=labels,
    )


def exact_randomization_test(a: OutcomeVector, b: OutcomeVector,
                             labels: tuple[str, str] = ("A", "B")) -> SignificanceResult:
    """Enumerate every sign pattern of the nonzero differences; no smoothing."""
    d, observed_sum = _differences(a, b)
    if d.size > EXACT_LIMIT:
        raise ConfigError(f"exact enumeration supports at most {EXACT_LIMIT} differing pairs, got {d.size}")
    threshold = abs(observed_sum) - TIE_TOLERANCE
    total = 1 << d.size
    bits = np.arange(d.size)
    exceed = 0
    for start in range(0, total, 1 << 16):
        patterns = np.arange(start, min(total, start + (1 << 16)))
        signs = ((patterns[:, None] >> bits) & 1) * 2 - 1
        exceed += int(np.count_nonzero(np.abs(signs @ d) >= threshold))
    return SignificanceResult(
        observed=observed_sum / len(a),
        p_value=exceed / total,
        trials=total,
        exceedances=exceed,
        n=len(a),
        exact=True,
        ci_low=exceed / total,
        ci_high=exceed / total,
        p_at_1_a=a.accuracy,
        p_at_1_b=b.accuracy,
        labels=labels,
    )
