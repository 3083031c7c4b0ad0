"""
Metrics report for one evaluated model.

Columns follow the usual reranking table: P@1, RER against a baseline
report, MAP and MRR. `save()` writes JSON, `save_kv()` the flat
key=value form meant for scripts and diffing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from dar_rerank.errors import DataError
from dar_rerank.evaluation.metrics import (
    average_precision,
    mean_average_precision,
    mean_reciprocal_rank,
    precision_at_1,
    reciprocal_rank,
    relative_error_reduction,
)
from dar_rerank.rankers.base import RankedList


@dataclass
class MetricsReport:
    """P@1 / MAP / MRR over one evaluation set."""

    model: str
    p_at_1: float
    map: float
    mrr: float
    n_questions: int
    mode: str = "clean"
    ap: dict[str, float] = field(default_factory=dict)
    rr: dict[str, float] = field(default_factory=dict)
    baseline_model: str | None = None
    baseline_p_at_1: float | None = None
    config: dict = field(default_factory=dict)

    @property
    def rer(self) -> float | None:
        if self.baseline_p_at_1 is None:
            return None
        return relative_error_reduction(self.baseline_p_at_1, self.p_at_1)

    def with_baseline(self, baseline: "MetricsReport") -> "MetricsReport":
        self.baseline_model = baseline.model
        self.baseline_p_at_1 = baseline.p_at_1
        return self

    def row(self) -> str:
        rer = self.rer
        rer_str = "-" if rer is None else f"{rer:+.2f}%"
        return f"{self.model:<12} {self.p_at_1:<8.4f} {rer_str:<9} {self.map:<8.4f} {self.mrr:<8.4f}"

    def summary(self) -> str:
        """Human-readable one-model table."""
        against = f" (RER vs {self.baseline_model})" if self.baseline_model else ""
        return "\n".join([
            f"Evaluation: {self.model}, {self.n_questions} questions, mode={self.mode}{against}",
            "",
            _HEADER,
            "-" * len(_HEADER),
            self.row(),
        ])

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "mode": self.mode,
            "n_questions": self.n_questions,
            "p_at_1": self.p_at_1,
            "map": self.map,
            "mrr": self.mrr,
            "rer": self.rer,
            "baseline": {"model": self.baseline_model, "p_at_1": self.baseline_p_at_1},
            "per_question": {"ap": self.ap, "rr": self.rr},
            "config": self.config,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    def save_kv(self, path: str | Path) -> None:
        rer = self.rer
        pairs = [
            ("model", self.model),
            ("mode", self.mode),
            ("n_questions", self.n_questions),
            ("p_at_1", f"{self.p_at_1:.6f}"),
            ("map", f"{self.map:.6f}"),
            ("mrr", f"{self.mrr:.6f}"),
            ("rer", "" if rer is None else f"{rer:.4f}"),
            ("baseline", self.baseline_model or ""),
        ]
        Path(path).write_text("".join(f"{k}={v}\n" for k, v in pairs))

    @classmethod
    def load(cls, path: str | Path) -> "MetricsReport":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read metrics report {path}: {exc}") from None
        baseline = data.get("baseline") or {}
        per_q = data.get("per_question") or {}
        return cls(
            model=data["model"],
            p_at_1=data["p_at_1"],
            map=data["map"],
            mrr=data["mrr"],
            n_questions=data["n_questions"],
            mode=data.get("mode", "clean"),
            ap=per_q.get("ap", {}),
            rr=per_q.get("rr", {}),
            baseline_model=baseline.get("model"),
            baseline_p_at_1=baseline.get("p_at_1"),
            config=data.get("config", {}),
        )


_HEADER = f"{'Model':<12} {'P@1':<8} {'RER':<9} {'MAP':<8} {'MRR':<8}"


def format_table(reports: Sequence[MetricsReport]) -> str:
    lines = [_HEADER, "-" * len(_HEADER)]
    lines.extend(r.row() for r in reports)
    return "\n".join(lines)


def evaluate_rankings(rankings: Mapping[str, RankedList], model: str, mode: str = "clean",
                      config: dict | None = None, baseline: MetricsReport | None = None) -> MetricsReport:
    """Score labeled rankings keyed by question id."""
    if not rankings:
        raise DataError("nothing to evaluate: zero questions")
    lists = list(rankings.values())
    ap, rr = {}, {}
    for qid, ranked in rankings.items():
        labels = ranked.ranked_labels
        a, r = average_precision(labels), reciprocal_rank(labels)
        if a is not None:
            ap[qid], rr[qid] = a, r
    report = MetricsReport(
        model=model,
        p_at_1=precision_at_1(lists),
        map=mean_average_precision(lists),
        mrr=mean_reciprocal_rank(lists),
        n_questions=len(lists),
        mode=mode,
        ap=ap,
        rr=rr,
        config=dict(config or {}),
    )
    return report.with_baseline(baseline) if baseline is not None else report
