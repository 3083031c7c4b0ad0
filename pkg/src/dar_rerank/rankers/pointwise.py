"""
The non-support baselines.

SBC   pointwise binary classifier over (q, c): softmax(W·tanh(E(q,c)) + B)
PC    binary classifier over the concatenation [E(q,t) : E(q,c_1) : ...]
      with (q, t) always first and the others in SBC order
ACM   one pack of q with k+1 candidates, softmax over the candidate slots
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from dar_rerank.autograd import ops
from dar_rerank.autograd.tensor import Tensor, no_grad
from dar_rerank.corpus import QAExample
from dar_rerank.encoder.packing import pack_multi, pack_pair
from dar_rerank.encoder.transformer import encode, encode_batch
from dar_rerank.errors import ConfigError
from dar_rerank.rankers.base import POSITIVE, ClassifierHead, Reranker, Supports

logger = logging.getLogger(__name__)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def sbc_probabilities(embeddings: Tensor, head: ClassifierHead) -> Tensor:
    """Positive-class probability for each row of an [n×d] embedding batch."""
    probs = ops.softmax(head(ops.tanh(embeddings)))
    return ops.index(probs, (slice(None), POSITIVE))


def sbc_score(embedding: Tensor, head: ClassifierHead) -> Tensor:
    """p(q,c) = softmax(W × tanh(E(q,c)) + B)[positive] for one embedding."""
    if head.out != 2:
        raise ConfigError(f"SBC head must have 2 outputs, has {head.out}")
    return ops.index(ops.softmax(head(ops.tanh(_as_tensor(embedding)))), POSITIVE)


def sbc_loss(prob, label: int) -> Tensor:
    """-log(prob) for a correct candidate, -log(1 - prob) otherwise."""
    prob = ops.reshape(_as_tensor(prob), (1,))
    dist = ops.concat(prob, ops.add(ops.scale(prob, -1.0), 1.0))
    return ops.cross_entropy(dist, 0 if label == 1 else 1)


def binary_target(label: int | None) -> int:
    return POSITIVE if label == 1 else 1 - POSITIVE


class SbcModel(Reranker):
    kind = "sbc"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.encoder = self.new_encoder()
        self.head = ClassifierHead.init(2, self.encoder_config.d, self.rng(), name="head")

    def parameters(self) -> dict[str, Tensor]:
        return {**self.encoder.named_parameters("encoder."), **self.head.named_parameters("head")}

    def embed(self, example: QAExample) -> Tensor:
        q = self.token_ids(example.question)
        seqs = [pack_pair(q, self.token_ids(c.text), self.vocab, self.max_len) for c in example.candidates]
        return encode_batch(seqs, self.encoder)

    def question_loss(self, example: QAExample, supports: Supports | None = None) -> Tensor:
        logits = self.head(ops.tanh(self.embed(example)))
        terms = [ops.nll_from_logits(ops.index(logits, i), binary_target(c.label))
                 for i, c in enumerate(example.candidates)]
        return ops.mean_all(ops.stack(terms))

    def score(self, example: QAExample, supports: Supports | None = None) -> np.ndarray:
        return sbc_probabilities(self.embed(example), self.head).numpy()


class PcModel(Reranker):
    """
    Pairwise classifier over k slots: (q, t) then up to k-1 other
    candidates in SBC order; empty slots hold zero vectors.
    """

    kind = "pc"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.options.k < 2:
            raise ConfigError(f"PC needs k >= 2 slots, got {self.options.k}")
        self.encoder = self.new_encoder()
        self.head = ClassifierHead.init(2, self.options.k * self.encoder_config.d, self.rng(), name="head")
        self._warned_fallback = False

    def parameters(self) -> dict[str, Tensor]:
        return {**self.encoder.named_parameters("encoder."), **self.head.named_parameters("head")}

    def embed(self, example: QAExample) -> Tensor:
        q = self.token_ids(example.question)
        seqs = [pack_pair(q, self.token_ids(c.text), self.vocab, self.max_len) for c in example.candidates]
        return encode_batch(seqs, self.encoder)

    def head_input(self, embeddings: Tensor, target: int, order: Sequence[int]) -> Tensor:
        """[E(q,t) : E(q,c_i) for c_i ≠ t in `order` : zero padding], length k·d."""
        d, slots = self.encoder_config.d, self.options.k
        others = [i for i in order if i != target][:slots - 1]
        parts = [ops.index(embeddings, target)] + [ops.index(embeddings, i) for i in others]
        parts += [Tensor(np.zeros(d))] * (slots - 1 - len(others))
        return ops.concat(*parts)

    def _logits(self, example: QAExample) -> Tensor:
        emb = self.embed(example)
        order = self.support_order(example)
        return self.head(ops.stack([self.head_input(emb, t, order) for t in range(example.k)]))

    def pc_score(self, example: QAExample, target: int) -> float:
        """Positive probability of candidate `target` given the others."""
        return float(self.score(example)[target])

    def question_loss(self, example: QAExample, supports: Supports | None = None) -> Tensor:
        logits = self._logits(example)
        terms = [ops.nll_from_logits(ops.index(logits, i), binary_target(c.label))
                 for i, c in enumerate(example.candidates)]
        return ops.mean_all(ops.stack(terms))

    def score(self, example: QAExample, supports: Supports | None = None) -> np.ndarray:
        if example.k < 2:
            if not self._warned_fallback:
                how = "the SBC score" if self.support_ranker is not None else "zero-padded slots"
                logger.warning("PC: question %s has a single candidate; scoring with %s", example.qid, how)
                self._warned_fallback = True
            if self.support_ranker is not None:
                return self.support_ranker.score(example)
        probs = ops.softmax(self._logits(example))
        return probs.numpy()[:, POSITIVE]


def acm_distribution(embedding: Tensor, head: ClassifierHead, n_present: int) -> Tensor:
    """softmax(E·Wᵀ + B) over the first `n_present` slots; the rest are masked."""
    if n_present > head.out or n_present < 1:
        raise ConfigError(f"ACM head has {head.out} slots but {n_present} candidates were packed")
    mask = np.arange(head.out) < n_present
    return ops.softmax(head(_as_tensor(embedding)), mask=mask)


class AcmModel(Reranker):
    """
    All-candidate model with k+1 slots, filled in SBC order. Smaller
    candidate sets leave the trailing slots masked out of the softmax;
    larger ones do not fit the head and raise ConfigError.
    """

    kind = "acm"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.encoder = self.new_encoder()
        self.head = ClassifierHead.init(self.n_slots, self.encoder_config.d, self.rng(), name="head")

    def parameters(self) -> dict[str, Tensor]:
        return {**self.encoder.named_parameters("encoder."), **self.head.named_parameters("head")}

    @property
    def n_slots(self) -> int:
        return self.options.k + 1

    def check_dataset(self, dataset: Sequence[QAExample]) -> None:
        for ex in dataset:
            self._check_fits(ex)

    def _check_fits(self, example: QAExample) -> None:
        if example.k > self.n_slots:
            raise ConfigError(
                f"ACM head has {self.n_slots} slots (k={self.options.k}) but question {example.qid} "
                f"has {example.k} candidates"
            )

    def slots(self, example: QAExample) -> list[int]:
        self._check_fits(example)
        return self.support_order(example)

    def embed(self, example: QAExample, slots: list[int]) -> Tensor:
        seq = pack_multi(self.token_ids(example.question),
                         [self.token_ids(example.candidates[i].text) for i in slots],
                         self.vocab, self.max_len)
        return encode(seq, self.encoder)

    def acm_score(self, example: QAExample) -> np.ndarray:
        """Distribution over the slots of `example`; padded slots carry probability 0."""
        slots = self.slots(example)
        with no_grad():
            return acm_distribution(self.embed(example, slots), self.head, len(slots)).numpy()

    def question_loss(self, example: QAExample, supports: Supports | None = None) -> Tensor | None:
        slots = self.slots(example)
        target = next((j for j, i in enumerate(slots) if example.candidates[i].is_positive), None)
        if target is None:
            logger.debug("ACM: question %s has no positive candidate; skipped", example.qid)
            return None
        mask = np.arange(self.n_slots) < len(slots)
        return ops.nll_from_logits(self.head(self.embed(example, slots)), target, mask=mask)

    def score(self, example: QAExample, supports: Supports | None = None) -> np.ndarray:
        slots = self.slots(example)
        probs = acm_distribution(self.embed(example, slots), self.head, len(slots)).numpy()
        scores = np.empty(example.k)
        for j, i in enumerate(slots):
            scores[i] = probs[j]
        return scores
