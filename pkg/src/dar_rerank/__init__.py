"""
dar-rerank: answer-verification rerankers for answer sentence selection.

Rank a question's answer candidates with pointwise, pairwise, joint and
support-verifying transformer models, optionally backed by a dense
secondary retrieval step, and evaluate them with P@1/MAP/MRR and a
paired randomization test.
"""

from dar_rerank.config import ExperimentConfig
from dar_rerank.corpus import Candidate, QAExample, filter_mode, load_dataset, load_jsonl, load_tsv
from dar_rerank.evaluation import (
    MetricsReport,
    OutcomeVector,
    mean_average_precision,
    mean_reciprocal_rank,
    precision_at_1,
    randomization_test,
    relative_error_reduction,
)
from dar_rerank.rankers import RankedList, build_model, load_model, rerank
from dar_rerank.retrieval import DualEncoder, RetrievalIndex, build_index
from dar_rerank.synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "Candidate",
    "QAExample",
    "filter_mode",
    "load_dataset",
    "load_jsonl",
    "load_tsv",
    "MetricsReport",
    "OutcomeVector",
    "mean_average_precision",
    "mean_reciprocal_rank",
    "precision_at_1",
    "randomization_test",
    "relative_error_reduction",
    "RankedList",
    "build_model",
    "load_model",
    "rerank",
    "DualEncoder",
    "RetrievalIndex",
    "build_index",
    "SyntheticSpec",
    "generate_synthetic",
]
