"""
Double Answer Reranker.

One encoder reads triplets [CLS] q [SEP] t [SEP] c [EOS]. Two heads share
its [CLS] embedding:

    SR   Support Ranker, 1×d linear: a raw score used to pick the support
    AR   Answer Ranker, 2×d linear + softmax: is t correct given c?

Training picks, for every labeled target t, the support
s_t = argmax over the pool of l_t · AR(q, t, c) from the current weights,
then sums (per target) the AR cross-entropy and the listwise SR loss
-log softmax(SR over the pool)[s_t]. Inference picks s_t by SR and ranks
targets by AR(q, t, s_t).

The pool for t is every other candidate of the question plus the
retrieved supports for t (deduplicated by normalized text and put in a
canonical order, so the input order of the supports never matters).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.special import softmax as np_softmax

from dar_rerank.autograd import ops
from dar_rerank.autograd.optim import AdamState
from dar_rerank.autograd.tensor import Tensor, no_grad
from dar_rerank.corpus import LABELED, RETRIEVED, Candidate, QAExample
from dar_rerank.encoder.packing import pack_triplet
from dar_rerank.encoder.transformer import encode_batch
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.rankers.base import POSITIVE, ClassifierHead, RankedList, Reranker, Supports, signed_argmax
from dar_rerank.rankers.pointwise import binary_target
from dar_rerank.segmentation import normalize_text

logger = logging.getLogger(__name__)

NO_SUPPORT = "none"


class TrainVariant(str, Enum):
    ALL_TRIPLETS = "all"
    BEST_SUPPORT_ONLY = "best"

    @classmethod
    def parse(cls, value: "str | TrainVariant") -> "TrainVariant":
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown DAR variant {value!r}; expected 'all' or 'best'") from None


@dataclass(frozen=True)
class SupportSelection:
    target: int
    support: int
    support_id: str | None
    sr_score: float
    ar_score: float
    source: str = LABELED


@dataclass
class QuestionPass:
    """Everything one training pass over a question produced."""

    ar_loss: Tensor
    sr_loss: Tensor
    selections: list[SupportSelection] = field(default_factory=list)
    ar_terms: list[tuple[str, str | None]] = field(default_factory=list)

    @property
    def total(self) -> Tensor:
        return ops.add(self.ar_loss, self.sr_loss)


def canonical_supports(supports: Sequence[Candidate]) -> list[Candidate]:
    """Unique by normalized text, sorted by (normalized text, id)."""
    seen: dict[str, Candidate] = {}
    for cand in sorted(supports, key=lambda c: (normalize_text(c.text), c.id)):
        seen.setdefault(normalize_text(cand.text), cand)
    return list(seen.values())


def sr_ranking_loss(scores: Tensor, positive: int) -> Tensor:
    """-log(e^{s_pos} / Σ_i e^{s_i}) over the pool's SR logits."""
    scores = ops.as_tensor(scores)
    if scores.ndim != 1 or not 0 <= positive < scores.shape[0]:
        raise DataError(f"positive index {positive} is not in a pool of shape {scores.shape}")
    return ops.nll_from_logits(scores, positive)


class DarModel(Reranker):
    kind = "dar"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.variant = TrainVariant.parse(self.options.variant)
        d = self.encoder_config.d
        self.encoder = self.new_encoder()
        self.sr_head = ClassifierHead.init(1, d, self.rng(0), name="sr_head")
        self.ar_head = ClassifierHead.init(2, d, self.rng(1), name="ar_head")

    def parameters(self) -> dict[str, Tensor]:
        return {
            **self.encoder.named_parameters("encoder."),
            **self.sr_head.named_parameters("sr_head"),
            **self.ar_head.named_parameters("ar_head"),
        }

    # ── pools and encoding ──

    def targets(self, example: QAExample) -> list[int]:
        return [i for i, c in enumerate(example.candidates) if c.source == LABELED]

    def pools(self, example: QAExample, supports: Supports | None) -> dict[int, list[Candidate]]:
        """Target index -> ordered support pool (may be empty)."""
        supports = supports or {}
        inline = [c for c in example.candidates if c.source == RETRIEVED]
        out = {}
        for t in self.targets(example):
            target = example.candidates[t]
            others = [c for i, c in enumerate(example.candidates) if i != t and c.source == LABELED]
            out[t] = others + canonical_supports(inline + list(supports.get(target.id, [])))
        return out

    def encode_triplets(self, question: str, rows: Sequence[tuple[str, str | None]]) -> Tensor:
        """[CLS] embeddings of (q, t, c) rows; c=None packs the empty-support sentinel."""
        q = self.token_ids(question)
        seqs = [pack_triplet(q, self.token_ids(t), self.token_ids(c) if c is not None else [],
                             self.vocab, self.max_len) for t, c in rows]
        return encode_batch(seqs, self.encoder)

    def heads(self, emb: Tensor) -> tuple[Tensor, Tensor]:
        """SR scores [n] and AR logits [n×2] of an embedding batch."""
        sr = ops.reshape(self.sr_head(emb), (emb.shape[0],))
        return sr, self.ar_head(emb)

    def _layout(self, example: QAExample, pools: dict[int, list[Candidate]]):
        rows, spans = [], {}
        for t, pool in pools.items():
            start = len(rows)
            text = example.candidates[t].text
            rows.extend([(text, c.text) for c in pool] if pool else [(text, None)])
            spans[t] = (start, len(rows))
        return rows, spans

    # ── training ──

    def forward_question(self, example: QAExample, supports: Supports | None = None,
                         variant: TrainVariant | None = None) -> QuestionPass:
        variant = self.variant if variant is None else TrainVariant.parse(variant)
        pools = self.pools(example, supports)
        rows, spans = self._layout(example, pools)
        sr, ar_logits = self.heads(self.encode_triplets(example.question, rows))
        ar_pos = np_softmax(ar_logits.data, axis=-1)[:, POSITIVE]

        ar_terms, sr_terms, selections, used = [], [], [], []
        for t, pool in pools.items():
            start, stop = spans[t]
            target = example.candidates[t]
            label = binary_target(target.label)
            if pool:
                j = signed_argmax(ar_pos[start:stop], sign=target.label)
                sr_terms.append(sr_ranking_loss(ops.index(sr, slice(start, stop)), j))
                selections.append(SupportSelection(t, j, pool[j].id, float(sr.data[start + j]),
                                                   float(ar_pos[start + j]), pool[j].source))
                rows_used = range(start, stop) if variant is TrainVariant.ALL_TRIPLETS else [start + j]
            else:
                selections.append(SupportSelection(t, -1, None, float(sr.data[start]),
                                                   float(ar_pos[start]), NO_SUPPORT))
                rows_used = [start]
            for r in rows_used:
                used.append((target.id, pool[r - start].id if pool else None))
            ar_terms.append(ops.mean_all(ops.stack(
                [ops.nll_from_logits(ops.index(ar_logits, r), label) for r in rows_used])))

        ar_loss = ops.sum_all(ops.stack(ar_terms))
        sr_loss = ops.sum_all(ops.stack(sr_terms)) if sr_terms else Tensor(0.0)
        return QuestionPass(ar_loss=ar_loss, sr_loss=sr_loss, selections=selections, ar_terms=used)

    def question_loss(self, example: QAExample, supports: Supports | None = None) -> Tensor:
        return self.forward_question(example, supports).total

    # ── inference ──

    def infer(self, example: QAExample, supports: Supports | None = None) -> tuple[np.ndarray, list[SupportSelection]]:
        pools = self.pools(example, supports)
        rows, spans = self._layout(example, pools)
        with no_grad():
            sr, ar_logits = self.heads(self.encode_triplets(example.question, rows))
        sr_np = sr.data
        ar_pos = np_softmax(ar_logits.data, axis=-1)[:, POSITIVE]

        scores = np.full(example.k, -np.inf)
        selections = []
        for t, pool in pools.items():
            start, stop = spans[t]
            j = signed_argmax(sr_np[start:stop]) if pool else -1
            row = start + max(j, 0)
            scores[t] = ar_pos[row]
            selections.append(SupportSelection(
                t, j, pool[j].id if pool else None, float(sr_np[row]), float(ar_pos[row]),
                pool[j].source if pool else NO_SUPPORT,
            ))
        return scores, selections

    def score(self, example: QAExample, supports: Supports | None = None) -> np.ndarray:
        return self.infer(example, supports)[0]


# ── Functional surface ───────────────────────────────────────────────────────

def dar_forward(model: DarModel, question: str, target: Candidate, support: Candidate | None) -> tuple[Tensor, Tensor]:
    """(SR score, AR positive probability) of one triplet; `support=None` is the empty-support sentinel."""
    if support is not None and support.id == target.id:
        raise DataError(f"target and support are the same candidate {target.id}")
    emb = model.encode_triplets(question, [(target.text, support.text if support is not None else None)])
    sr, ar_logits = model.heads(emb)
    return ops.index(sr, 0), ops.index(ops.softmax(ar_logits), (0, POSITIVE))


def select_support_train(model: DarModel, question: str, target: Candidate,
                         pool: Sequence[Candidate]) -> SupportSelection:
    """Signed-AR support choice: the AR maximizer for a correct t, the minimizer otherwise."""
    if target.label not in (1, -1):
        raise DataError(f"target {target.id} needs a +1/-1 label to select a training support")
    pool = [c for c in pool if c.id != target.id]
    if not pool:
        raise DataError(f"target {target.id} has an empty support pool")
    with no_grad():
        sr, ar_logits = model.heads(model.encode_triplets(question, [(target.text, c.text) for c in pool]))
    ar_pos = np_softmax(ar_logits.data, axis=-1)[:, POSITIVE]
    j = signed_argmax(ar_pos, sign=target.label)
    return SupportSelection(-1, j, pool[j].id, float(sr.data[j]), float(ar_pos[j]), pool[j].source)


def ar_loss(model: DarModel, examples: Sequence[QAExample], variant: TrainVariant | str | None = None,
            supports: Mapping[str, Supports] | None = None) -> Tensor:
    """Mean over questions of the summed per-target AR cross-entropy."""
    supports = supports or {}
    terms = [model.forward_question(ex, supports.get(ex.qid), variant).ar_loss for ex in examples]
    return ops.mean_all(ops.stack(terms))


def dar_train_step(model: DarModel, examples: Sequence[QAExample], state: AdamState,
                   supports: Mapping[str, Supports] | None = None,
                   params: dict[str, Tensor] | None = None) -> float:
    """One Adam step on the batch; `params` restricts which tensors move."""
    return model.train_step(examples, state, supports=supports, params=params)


def dar_infer(model: DarModel, example: QAExample,
              supports: Sequence[Candidate] | Supports | None = None) -> RankedList:
    """
    Rank the labeled candidates of `example`. `supports` is either one
    list shared by every target or a mapping target id -> list.
    """
    if supports is not None and not isinstance(supports, Mapping):
        shared = list(supports)
        supports = {c.id: shared for c in example.candidates}
    return model.rank(example, supports)
