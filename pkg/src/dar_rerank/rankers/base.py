"""
Shared pieces of every reranker: linear heads, ranked lists, the
prediction dump, and the `Reranker` base class that owns vocabulary,
token caching, persistence and the optional frozen SBC ordering.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from dar_rerank.autograd import ops
from dar_rerank.autograd.checkpoint import save_container
from dar_rerank.autograd.optim import AdamState
from dar_rerank.autograd.tensor import Tensor, no_grad, parameter
from dar_rerank.corpus import Candidate, QAExample
from dar_rerank.encoder.transformer import EncoderConfig, EncoderParams
from dar_rerank.encoder.vocab import Vocabulary, tokenize
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.training import train_step

logger = logging.getLogger(__name__)

# Row 0 of every binary head is the "correct answer" class.
POSITIVE = 0

Supports = dict[str, list[Candidate]]


@dataclass
class ClassifierHead:
    """A fully connected layer W[out×d_in], B[out]."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, out: int, d_in: int, rng: np.random.Generator, zero: bool = False,
             name: str = "head") -> "ClassifierHead":
        w = np.zeros((out, d_in)) if zero else rng.normal(0.0, 0.02, size=(out, d_in))
        return cls(weight=parameter(w, name=f"{name}.weight"), bias=parameter(np.zeros(out), name=f"{name}.bias"))

    @property
    def out(self) -> int:
        return self.weight.shape[0]

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        """Logits for one input [d_in] -> [out], or a batch [n×d_in] -> [n×out]."""
        if x.shape[-1] != self.d_in:
            raise ConfigError(f"head expects inputs of width {self.d_in}, got {x.shape}")
        if x.ndim == 1:
            return ops.index(ops.linear(ops.reshape(x, (1, self.d_in)), self.weight, self.bias), 0)
        return ops.linear(x, self.weight, self.bias)

    def named_parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


# ── Ranked lists ─────────────────────────────────────────────────────────────

@dataclass
class RankedList:
    """Candidates ordered by descending score; ties keep original order."""

    order: list[int]
    scores: list[float]
    labels: list[int] | None = None
    ids: list[str] | None = None

    @property
    def ranked_labels(self) -> list[int]:
        if self.labels is None:
            raise DataError("ranked list carries no labels")
        return [self.labels[i] for i in self.order]

    @property
    def ranked_scores(self) -> list[float]:
        return [self.scores[i] for i in self.order]

    @property
    def top(self) -> int:
        return self.order[0]


def rerank(scores: Sequence[float], labels: Sequence[int] | None = None,
           ids: Sequence[str] | None = None) -> RankedList:
    """Stable descending sort of candidate scores."""
    if len(scores) == 0:
        raise DataError("rerank needs at least one score")
    scores = [float(s) for s in scores]
    for i, s in enumerate(scores):
        if math.isnan(s):
            who = ids[i] if ids is not None else str(i)
            raise DataError(f"NaN score for candidate {who}")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return RankedList(
        order=order,
        scores=scores,
        labels=list(labels) if labels is not None else None,
        ids=list(ids) if ids is not None else None,
    )


# ── Prediction dump ──────────────────────────────────────────────────────────

def write_predictions(rows: Iterable[tuple[str, RankedList]], path: str | Path) -> None:
    """One tab-separated line per (question id, candidate id, score, label)."""
    lines = []
    for qid, ranked in rows:
        ids = ranked.ids or [str(i) for i in range(len(ranked.scores))]
        for i, (cid, score) in enumerate(zip(ids, ranked.scores)):
            label = "" if ranked.labels is None else str(ranked.labels[i])
            lines.append(f"{qid}\t{cid}\t{score!r}\t{label}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_predictions(path: str | Path) -> dict[str, RankedList]:
    """Question id -> RankedList, questions in file order."""
    grouped: dict[str, list[tuple[str, float, int | None]]] = defaultdict(list)
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise DataError(f"{path}:{line_no}: expected 4 columns, got {len(cols)}")
        qid, cid, score, label = cols
        try:
            grouped[qid].append((cid, float(score), int(label) if label else None))
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from None
    out = {}
    for qid, rows in grouped.items():
        labels = [r[2] for r in rows]
        out[qid] = rerank([r[1] for r in rows],
                          labels=None if any(l is None for l in labels) else labels,
                          ids=[r[0] for r in rows])
    return out


# ── Reranker base ────────────────────────────────────────────────────────────

@dataclass
class ModelOptions:
    """Model-kind specific knobs persisted in the checkpoint header."""

    k: int = 3
    asc_weight: float = 1.0
    variant: str = "all"
    support_mode: str = "sbc"

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelOptions":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


class Reranker(ABC):
    """Common state and persistence for all model kinds."""

    kind = "base"

    def __init__(self, vocab: Vocabulary, encoder_config: EncoderConfig,
                 options: ModelOptions | None = None, seed: int = 0):
        encoder_config = EncoderConfig.from_dict({**encoder_config.to_dict(), "vocab_size": len(vocab)})
        encoder_config.validate()
        self.vocab = vocab
        self.encoder_config = encoder_config
        self.options = options or ModelOptions()
        self.seed = seed
        self.support_ranker: "Reranker | None" = None
        self._ids_cache: dict[str, list[int]] = {}
        self._warned_order = False

    # ── subclass contract ──

    @abstractmethod
    def parameters(self) -> dict[str, Tensor]:
        """Trainable parameters by checkpoint name."""

    @abstractmethod
    def question_loss(self, example: QAExample, supports: Supports | None = None) -> Tensor | None:
        """Training loss for one question, or None when it carries no training signal."""

    @abstractmethod
    def score(self, example: QAExample, supports: Supports | None = None) -> np.ndarray:
        """One score per candidate of `example`, higher is better."""

    # ── shared behaviour ──

    @property
    def max_len(self) -> int:
        return self.encoder_config.max_len

    def token_ids(self, text: str) -> list[int]:
        ids = self._ids_cache.get(text)
        if ids is None:
            ids = tokenize(text, self.vocab)
            self._ids_cache[text] = ids
        return ids

    def new_encoder(self, offset: int = 0) -> EncoderParams:
        return EncoderParams.init(self.encoder_config, seed=self.seed + offset)

    def rng(self, offset: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.seed * 7919 + 104729 + offset)

    def batch_loss(self, examples: Sequence[QAExample],
                   supports: Mapping[str, Supports] | None = None) -> Tensor | None:
        """Mean question loss over the questions of a batch that carry a training signal."""
        losses = [self.question_loss(ex, (supports or {}).get(ex.qid)) for ex in examples]
        losses = [loss for loss in losses if loss is not None]
        if not losses:
            return None
        return ops.mean_all(ops.stack(losses))

    def train_step(self, examples: Sequence[QAExample], state: AdamState,
                   supports: Mapping[str, Supports] | None = None,
                   params: dict[str, Tensor] | None = None) -> float | None:
        """Zero grads, backpropagate the batch loss and take one Adam step."""
        return train_step(self, examples, state, supports=supports, params=params)

    def rank(self, example: QAExample, supports: Supports | None = None) -> RankedList:
        with no_grad():
            scores = self.score(example, supports)
        return rerank(scores, labels=example.labels, ids=[c.id for c in example.candidates])

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def check_dataset(self, dataset: Sequence[QAExample]) -> None:
        """Raise ConfigError when `dataset` does not fit this model's heads."""

    def attach_support_ranker(self, ranker: "Reranker") -> None:
        """Freeze an SBC model used to order candidates for support selection."""
        self.support_ranker = ranker

    def support_order(self, example: QAExample) -> list[int]:
        """Candidate indices by descending frozen-SBC score, or dataset order."""
        if self.support_ranker is None:
            if not self._warned_order:
                logger.warning("%s: no SBC ranker attached; supports follow dataset order", self.kind)
                self._warned_order = True
            return list(range(example.k))
        with no_grad():
            scores = self.support_ranker.score(example)
        return rerank(scores).order

    # ── persistence ──

    def header(self, config_echo: dict | None = None) -> dict:
        header = {
            "model_kind": self.kind,
            "config": config_echo or {},
            "encoder": self.encoder_config.to_dict(),
            "options": self.options.to_dict(),
            "seed": self.seed,
            "vocab": self.vocab.tokens,
        }
        if self.support_ranker is not None:
            header["support_ranker"] = {
                "kind": self.support_ranker.kind,
                "encoder": self.support_ranker.encoder_config.to_dict(),
            }
        return header

    def state_entries(self) -> dict[str, np.ndarray]:
        entries = {name: p.data for name, p in self.parameters().items()}
        if self.support_ranker is not None:
            entries.update({f"sbc.{k}": v for k, v in self.support_ranker.state_entries().items()})
        return entries

    def load_state(self, entries: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            if name not in entries:
                raise ConfigError(f"{self.kind} checkpoint lacks tensor {name!r}")
            if entries[name].shape != p.shape:
                raise ConfigError(f"{self.kind} tensor {name}: checkpoint {entries[name].shape} vs model {p.shape}")
            p.data = np.array(entries[name], dtype=np.float64)

    def save(self, path: str | Path, config_echo: dict | None = None) -> None:
        save_container(path, self.header(config_echo), self.state_entries())


def signed_argmax(values: Sequence[float], sign: int = 1) -> int:
    """Index of the maximum of sign·values; ties go to the lowest index."""
    best, best_val = 0, sign * values[0]
    for i in range(1, len(values)):
        v = sign * values[i]
        if v > best_val:
            best, best_val = i, v
    return best
