"""
Ranking metrics over labeled RankedLists.

P@1 counts every question (an all-negative question is simply wrong at
the top). MAP and MRR are defined only for questions with at least one
positive candidate; the others are excluded and the exclusion is logged.
"""

from __future__ import annotations

import logging
from typing import Iterable, Sequence

import numpy as np

from dar_rerank.errors import DataError, DomainError
from dar_rerank.rankers.base import RankedList

logger = logging.getLogger(__name__)


def _labels(ranked: RankedList | Sequence[int]) -> list[int]:
    return ranked.ranked_labels if isinstance(ranked, RankedList) else list(ranked)


def average_precision(ranked_labels: Sequence[int]) -> float | None:
    """Mean of precision@i over the positive positions i; None without positives."""
    hits, total = 0, 0.0
    for i, label in enumerate(ranked_labels, start=1):
        if label == 1:
            hits += 1
            total += hits / i
    return total / hits if hits else None


def reciprocal_rank(ranked_labels: Sequence[int]) -> float | None:
    for i, label in enumerate(ranked_labels, start=1):
        if label == 1:
            return 1.0 / i
    return None


def precision_at_1(rankings: Iterable[RankedList | Sequence[int]]) -> float:
    tops = [1.0 if _labels(r)[0] == 1 else 0.0 for r in rankings]
    if not tops:
        raise DataError("precision_at_1 over zero questions")
    return float(np.mean(tops))


def _mean_defined(values: list[float | None], name: str) -> float:
    defined = [v for v in values if v is not None]
    skipped = len(values) - len(defined)
    if skipped:
        logger.warning("%s: %d question(s) without a positive candidate excluded", name, skipped)
    if not defined:
        raise DataError(f"{name}: no question has a positive candidate")
    return float(np.mean(defined))


def mean_average_precision(rankings: Iterable[RankedList | Sequence[int]]) -> float:
    return _mean_defined([average_precision(_labels(r)) for r in rankings], "MAP")


def mean_reciprocal_rank(rankings: Iterable[RankedList | Sequence[int]]) -> float:
    return _mean_defined([reciprocal_rank(_labels(r)) for r in rankings], "MRR")


def relative_error_reduction(p_base: float, p_new: float) -> float:
    """100 · (p_new − p_base) / (1 − p_base), in percent; negative when p_new is worse."""
    if p_base >= 1.0:
        raise DomainError(f"relative error reduction is undefined for a perfect baseline (P@1={p_base})")
    return 100.0 * (p_new - p_base) / (1.0 - p_base)
