"""
From retrieved passages to support sentences.

A passage is positive for a question when it contains one of the
question's correct answers (normalized text containment). At retrieval
time the top-M passages for each (q, t) query are split into sentences,
every sentence is embedded with the passage encoder, and the top n_s by
inner product with E_Q(q, t) become the supports of t.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from dar_rerank.corpus import QAExample, RETRIEVED
from dar_rerank.errors import ConfigError
from dar_rerank.retrieval.encoder import DualEncoder, QueryPassagePair
from dar_rerank.retrieval.index import Passage, RetrievalIndex
from dar_rerank.segmentation import normalize_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupportSentence:
    text: str
    score: float
    passage_id: str


def positive_passages(example: QAExample, passages: Sequence[Passage],
                      normalized: Sequence[str] | None = None) -> dict[str, list[Passage]]:
    """
    Positive candidate id -> passages containing that candidate.
    `normalized` may carry the precomputed normalized passage texts.
    """
    normalized = [normalize_text(p.text) for p in passages] if normalized is None else normalized
    out = {}
    for cand in example.candidates:
        needle = normalize_text(cand.text) if cand.is_positive else ""
        if not needle:
            continue
        hits = [p for p, text in zip(passages, normalized) if needle in text]
        if hits:
            out[cand.id] = hits
    return out


def dpr_training_pairs(dataset: Iterable[QAExample], passages: Sequence[Passage]) -> list[QueryPassagePair]:
    """(q, t) -> positive passage pairs for every correct t found in the corpus."""
    normalized = [normalize_text(p.text) for p in passages]
    pairs = []
    for ex in dataset:
        texts = {c.id: c.text for c in ex.candidates}
        for cid, hits in positive_passages(ex, passages, normalized).items():
            pairs.extend(QueryPassagePair(ex.qid, ex.question, texts[cid], p.id, p.text) for p in hits)
    return pairs


def select_support_sentences(question: str, target: str, hits: Sequence[Passage], encoder: DualEncoder,
                             n_s: int = 10, query_vec: np.ndarray | None = None,
                             cache: dict[str, np.ndarray] | None = None) -> list[SupportSentence]:
    """
    Rank the sentences of `hits` by E_Q(q, t) · E_P(s) and keep the top
    n_s. Sentences are deduplicated by normalized text (first occurrence
    wins); ties keep first-occurrence order. `cache` maps sentence text to
    its passage-side embedding and is filled on the way.
    """
    if n_s < 1:
        raise ConfigError(f"n_s must be >= 1, got {n_s}")
    seen = set()
    sentences: list[tuple[str, str]] = []
    target_norm = normalize_text(target)
    for passage in hits:
        for sentence in passage.sentences:
            key = normalize_text(sentence)
            # the target itself is never its own support
            if not key or key in seen or key == target_norm:
                continue
            seen.add(key)
            sentences.append((sentence, passage.id))
    if not sentences:
        return []
    q = encoder.encode_query(question, target) if query_vec is None else query_vec
    cache = {} if cache is None else cache
    missing = [s for s, _ in sentences if s not in cache]
    if missing:
        cache.update(zip(missing, encoder.encode_passages(missing)))
    scores = np.stack([cache[s] for s, _ in sentences]) @ q
    order = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))[:n_s]
    return [SupportSentence(sentences[i][0], float(scores[i]), sentences[i][1]) for i in order]


def retrieve_supports(dataset: Iterable[QAExample], index: RetrievalIndex, encoder: DualEncoder,
                      m: int = 100, n_s: int = 10) -> list[dict]:
    """Support records {qid, target_id, sentence, score} for every labeled target."""
    records = []
    cache: dict[str, np.ndarray] = {}
    for ex in dataset:
        for cand in ex.candidates:
            if cand.source == RETRIEVED:
                continue
            q = encoder.encode_query(ex.question, cand.text)
            hits = [h.passage for h in index.search(q, m)]
            for s in select_support_sentences(ex.question, cand.text, hits, encoder, n_s, query_vec=q, cache=cache):
                records.append({"qid": ex.qid, "target_id": cand.id, "sentence": s.text, "score": s.score})
    logger.info("retrieved %d support sentences", len(records))
    return records
