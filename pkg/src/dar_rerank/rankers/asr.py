"""
Answer Support-based Reranker.

For a target t the (q, t) pair goes through the qa encoder (E_t) and each
support pair (t, c_j) through a second, independent pair encoder (Ê_j).
The final classifier reads V = [E_t : maxpool(Ê_1..Ê_m)], so the score
does not depend on the order or multiplicity of the supports. A 4-class
Answer Support Classifier over every Ê_j is trained alongside.

Supports default to the top-k other candidates by a frozen SBC ranker.
With `support_mode="asc"` (ASR-Rank) inference instead keeps the top-k
by ASC class-0 probability.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from dar_rerank.autograd import ops
from dar_rerank.autograd.tensor import Tensor, no_grad
from dar_rerank.corpus import QAExample
from dar_rerank.encoder.packing import pack_pair
from dar_rerank.encoder.transformer import encode_batch
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.rankers.base import POSITIVE, ClassifierHead, Reranker, Supports, rerank
from dar_rerank.rankers.pointwise import binary_target

logger = logging.getLogger(__name__)

ASC_CLASSES = 4
SUPPORT_MODES = ("sbc", "asc")


def asc_label(l_t: int, l_c: int) -> int:
    """0 both correct, 1 only t, 2 only c, 3 neither."""
    for label in (l_t, l_c):
        if label not in (1, -1):
            raise DataError(f"ASC labels must be +1 or -1, got {label!r}")
    if l_t == 1:
        return 0 if l_c == 1 else 1
    return 2 if l_c == 1 else 3


class AsrModel(Reranker):
    kind = "asr"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.options.support_mode not in SUPPORT_MODES:
            raise ConfigError(f"ASR support_mode must be one of {SUPPORT_MODES}, got {self.options.support_mode!r}")
        d = self.encoder_config.d
        self.qa_encoder = self.new_encoder(0)
        self.pair_encoder = self.new_encoder(1)
        self.head = ClassifierHead.init(2, 2 * d, self.rng(0), name="head")
        self.asc_head = ClassifierHead.init(ASC_CLASSES, d, self.rng(1), name="asc_head")

    def parameters(self) -> dict[str, Tensor]:
        return {
            **self.qa_encoder.named_parameters("qa_encoder."),
            **self.pair_encoder.named_parameters("pair_encoder."),
            **self.head.named_parameters("head"),
            **self.asc_head.named_parameters("asc_head"),
        }

    # ── embeddings ──

    def qa_embeddings(self, example: QAExample) -> Tensor:
        q = self.token_ids(example.question)
        return encode_batch([pack_pair(q, self.token_ids(c.text), self.vocab, self.max_len)
                             for c in example.candidates], self.qa_encoder)

    def pair_embeddings(self, target: str, supports: Sequence[str]) -> Tensor:
        t = self.token_ids(target)
        return encode_batch([pack_pair(t, self.token_ids(s), self.vocab, self.max_len)
                             for s in supports], self.pair_encoder)

    def fuse(self, e_t: Tensor, pair_emb: Tensor) -> Tensor:
        """softmax(W·[E_t : maxpool(Ê)] + B)."""
        return ops.softmax(self.head(ops.concat(e_t, ops.maxpool_rows(pair_emb))))

    # ── supports ──

    def sbc_supports(self, example: QAExample, target: int, order: Sequence[int] | None = None) -> list[int]:
        order = self.support_order(example) if order is None else order
        return [i for i in order if i != target][:self.options.k]

    def asc_supports(self, example: QAExample, target: int, m: int) -> list[int]:
        """Other candidates by descending ASC class-0 probability, top m."""
        others = [i for i in range(example.k) if i != target]
        if not others or m <= 0:
            return []
        with no_grad():
            emb = self.pair_embeddings(example.candidates[target].text,
                                       [example.candidates[i].text for i in others])
            both_correct = ops.softmax(self.asc_head(emb)).numpy()[:, 0]
        return [others[j] for j in rerank(both_correct).order[:m]]

    # ── Reranker contract ──

    def question_loss(self, example: QAExample, supports: Supports | None = None) -> Tensor | None:
        if example.k < 2:
            logger.debug("ASR: question %s has a single candidate; no training signal", example.qid)
            return None
        qa = self.qa_embeddings(example)
        order = self.support_order(example)
        terms = []
        for t, cand in enumerate(example.candidates):
            sup = self.sbc_supports(example, t, order)
            pair_emb = self.pair_embeddings(cand.text, [example.candidates[j].text for j in sup])
            logits = self.head(ops.concat(ops.index(qa, t), ops.maxpool_rows(pair_emb)))
            final = ops.nll_from_logits(logits, binary_target(cand.label))
            asc_logits = self.asc_head(pair_emb)
            asc = ops.mean_all(ops.stack([
                ops.nll_from_logits(ops.index(asc_logits, n), asc_label(cand.label, example.candidates[j].label))
                for n, j in enumerate(sup)
            ]))
            terms.append(ops.add(final, ops.scale(asc, self.options.asc_weight)))
        return ops.mean_all(ops.stack(terms))

    def score(self, example: QAExample, supports: Supports | None = None) -> np.ndarray:
        if example.k < 2:
            if self.support_ranker is None:
                raise DataError(f"ASR cannot score question {example.qid}: it has no support candidates")
            logger.warning("ASR: question %s has a single candidate; using the SBC score", example.qid)
            return self.support_ranker.score(example)
        qa = self.qa_embeddings(example)
        order = self.support_order(example) if self.options.support_mode == "sbc" else None
        scores = np.empty(example.k)
        for t, cand in enumerate(example.candidates):
            if self.options.support_mode == "asc":
                sup = self.asc_supports(example, t, self.options.k)
            else:
                sup = self.sbc_supports(example, t, order)
            pair_emb = self.pair_embeddings(cand.text, [example.candidates[j].text for j in sup])
            scores[t] = self.fuse(ops.index(qa, t), pair_emb).data[POSITIVE]
        return scores


# ── Functional surface ───────────────────────────────────────────────────────

def asr_forward(model: AsrModel, question: str, target: str, supports: Sequence[str]) -> tuple[Tensor, Tensor]:
    """
    Returns the final two-class distribution for `target` and the ASC
    distributions [m×4], one row per support.
    """
    if not supports:
        raise DataError("ASR needs at least one support candidate")
    q = model.token_ids(question)
    e_t = encode_batch([pack_pair(q, model.token_ids(target), model.vocab, model.max_len)], model.qa_encoder)
    pair_emb = model.pair_embeddings(target, supports)
    return model.fuse(ops.index(e_t, 0), pair_emb), ops.softmax(model.asc_head(pair_emb))


def asr_loss(model: AsrModel, examples: Sequence[QAExample]) -> Tensor:
    """Mean over questions of binary CE + λ · mean ASC CE."""
    return model.batch_loss(examples)


def asr_rank_supports(model: AsrModel, example: QAExample, target: int, m: int) -> list[int]:
    return model.asc_supports(example, target, m)
