"""
Passage corpus and the exact inner-product index.

The index is immutable once built: `build_index` returns a new value and
`search` only reads it. Ranking is exact (full sort of n scores) with ties
broken by passage id ascending.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from dar_rerank.autograd.checkpoint import load_container, save_container
from dar_rerank.errors import ConfigError, DataError, DimensionError
from dar_rerank.segmentation import split_sentences

logger = logging.getLogger(__name__)

INDEX_KIND = "index"


@dataclass(frozen=True)
class Passage:
    id: str
    text: str
    sentences: tuple[str, ...] = field(default=())

    @classmethod
    def from_text(cls, id: str, text: str) -> "Passage":
        return cls(id=id, text=text, sentences=tuple(split_sentences(text)))


def load_passages(path: str | Path) -> list[Passage]:
    """One JSON object {"id", "text"} per line."""
    passages = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            passages.append(Passage.from_text(str(rec["id"]), rec["text"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{line_no}: malformed passage ({exc})") from None
    return passages


def dump_passages(passages: Iterable[Passage], path: str | Path) -> None:
    lines = [json.dumps({"id": p.id, "text": p.text}, sort_keys=True) for p in passages]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@dataclass(frozen=True)
class SearchHit:
    passage: Passage
    score: float


class RetrievalIndex:
    """Passage ids, texts and an [n×d] embedding matrix."""

    def __init__(self, passages: Sequence[Passage], embeddings: np.ndarray, header: dict | None = None):
        embeddings = np.array(embeddings, dtype=np.float64)
        embeddings.setflags(write=False)
        if embeddings.ndim != 2 or embeddings.shape[0] != len(passages):
            raise DimensionError(f"{len(passages)} passages but an embedding matrix of shape {embeddings.shape}")
        self._passages = tuple(passages)
        self._embeddings = embeddings
        by_id = sorted(range(len(passages)), key=lambda i: passages[i].id)
        self._id_rank = np.empty(len(passages), dtype=np.int64)
        self._id_rank[by_id] = np.arange(len(passages))
        self.header = dict(header or {})

    def __len__(self) -> int:
        return len(self._passages)

    @property
    def passages(self) -> tuple[Passage, ...]:
        return self._passages

    @property
    def embeddings(self) -> np.ndarray:
        return self._embeddings

    @property
    def dim(self) -> int:
        return self._embeddings.shape[1]

    def scores(self, query_vec: np.ndarray) -> np.ndarray:
        query_vec = np.asarray(query_vec, dtype=np.float64)
        if query_vec.shape != (self.dim,):
            raise DimensionError(f"query of shape {query_vec.shape} against an index of width {self.dim}")
        return self._embeddings @ query_vec

    def search(self, query_vec: np.ndarray, m: int) -> list[SearchHit]:
        """Exact top-m passages by inner product, descending; ties by id."""
        if m < 1:
            raise ConfigError(f"search needs m >= 1, got {m}")
        if m > len(self):
            logger.warning("search: m=%d exceeds the %d indexed passages; returning all", m, len(self))
            m = len(self)
        scores = self.scores(query_vec)
        order = np.lexsort((self._id_rank, -scores))[:m]
        return [SearchHit(self._passages[i], float(scores[i])) for i in order]

    def save(self, path: str | Path) -> None:
        header = {
            **self.header,
            "model_kind": INDEX_KIND,
            "ids": [p.id for p in self._passages],
            "texts": [p.text for p in self._passages],
        }
        save_container(path, header, {"embeddings": self._embeddings})

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalIndex":
        if not Path(path).exists():
            raise DataError(f"index file {path} does not exist; build it with `dar-rerank index`")
        container = load_container(path)
        if container.model_kind != INDEX_KIND:
            raise ConfigError(f"{path}: not a retrieval index (kind {container.model_kind!r})")
        header = dict(container.header)
        ids, texts = header.pop("ids"), header.pop("texts")
        passages = [Passage.from_text(i, t) for i, t in zip(ids, texts)]
        return cls(passages, container.entries["embeddings"], header=header)


def build_index(passages: Sequence[Passage], encoder, batch_size: int = 64,
                header: dict | None = None) -> RetrievalIndex:
    """Embed every passage with the passage-side encoder."""
    if not passages:
        raise DataError("cannot build an index over an empty passage corpus")
    seen = set()
    for p in passages:
        if p.id in seen:
            raise DataError(f"duplicate passage id {p.id}")
        seen.add(p.id)
    embeddings = encoder.encode_passages([p.text for p in passages], batch_size=batch_size)
    logger.info("indexed %d passages (d=%d)", len(passages), embeddings.shape[1])
    return RetrievalIndex(passages, embeddings, header=header)
