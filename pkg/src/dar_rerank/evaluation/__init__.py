"""Ranking metrics, relative error reduction, and the paired randomization test."""

from dar_rerank.evaluation.metrics import (
    average_precision,
    mean_average_precision,
    mean_reciprocal_rank,
    precision_at_1,
    reciprocal_rank,
    relative_error_reduction,
)
from dar_rerank.evaluation.report import MetricsReport, evaluate_rankings, format_table
from dar_rerank.evaluation.significance import (
    OutcomeVector,
    SignificanceResult,
    align,
    exact_randomization_test,
    randomization_test,
)

__all__ = [
    "average_precision",
    "mean_average_precision",
    "mean_reciprocal_rank",
    "precision_at_1",
    "reciprocal_rank",
    "relative_error_reduction",
    "MetricsReport",
    "evaluate_rankings",
    "format_table",
    "OutcomeVector",
    "SignificanceResult",
    "align",
    "exact_randomization_test",
    "randomization_test",
]
