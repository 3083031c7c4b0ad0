"""
Dual encoder for the secondary retrieval step.

The query side encodes the packed pair (q, t), the passage side a single
packed passage; similarity is the inner product of the two [CLS]
embeddings. Training uses in-batch negatives: every other distinct
passage of the batch is a negative for a query.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from dar_rerank.autograd import ops
from dar_rerank.autograd.checkpoint import load_container, save_container
from dar_rerank.autograd.optim import AdamState
from dar_rerank.autograd.tensor import Tensor, no_grad
from dar_rerank.encoder.packing import pack_pair, pack_single
from dar_rerank.encoder.transformer import EncoderConfig, EncoderParams, encode_batch
from dar_rerank.encoder.vocab import Vocabulary, tokenize
from dar_rerank.errors import ConfigError, DataError
from dar_rerank.training import train_step

logger = logging.getLogger(__name__)

KIND = "dpr"


@dataclass(frozen=True)
class QueryPassagePair:
    """One training item: the (q, t) query and a passage that contains t."""

    qid: str
    question: str
    target: str
    passage_id: str
    passage: str


def dpr_ranking_loss(query_vec: Tensor, passage_vecs: Tensor, positive: int) -> Tensor:
    """-log softmax(P·q)[positive] over the passages of a batch."""
    query_vec, passage_vecs = ops.as_tensor(query_vec), ops.as_tensor(passage_vecs)
    if passage_vecs.ndim != 2 or not 0 <= positive < passage_vecs.shape[0]:
        raise DataError(f"positive index {positive} outside {passage_vecs.shape[0]} passages")
    scores = ops.reshape(ops.matmul(passage_vecs, ops.reshape(query_vec, (query_vec.shape[0], 1))),
                         (passage_vecs.shape[0],))
    return ops.nll_from_logits(scores, positive)


class DualEncoder:
    """E_Q over (q, t) pairs and E_P over passages, equal widths."""

    kind = KIND

    def __init__(self, vocab: Vocabulary, encoder_config: EncoderConfig, seed: int = 0):
        self.vocab = vocab
        self.encoder_config = EncoderConfig.from_dict({**encoder_config.to_dict(), "vocab_size": len(vocab)})
        self.seed = seed
        self.query_encoder = EncoderParams.init(self.encoder_config, seed=seed)
        self.passage_encoder = EncoderParams.init(self.encoder_config, seed=seed + 1)
        self._ids_cache: dict[str, list[int]] = {}

    @property
    def dim(self) -> int:
        return self.encoder_config.d

    def parameters(self) -> dict[str, Tensor]:
        return {
            **self.query_encoder.named_parameters("query_encoder."),
            **self.passage_encoder.named_parameters("passage_encoder."),
        }

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def token_ids(self, text: str) -> list[int]:
        ids = self._ids_cache.get(text)
        if ids is None:
            ids = self._ids_cache[text] = tokenize(text, self.vocab)
        return ids

    # ── encoding ──

    def query_tensor(self, queries: Sequence[tuple[str, str]]) -> Tensor:
        max_len = self.encoder_config.max_len
        seqs = [pack_pair(self.token_ids(q), self.token_ids(t), self.vocab, max_len) for q, t in queries]
        return encode_batch(seqs, self.query_encoder)

    def passage_tensor(self, texts: Sequence[str]) -> Tensor:
        max_len = self.encoder_config.max_len
        return encode_batch([pack_single(self.token_ids(p), self.vocab, max_len) for p in texts],
                            self.passage_encoder)

    def encode_query(self, question: str, target: str) -> np.ndarray:
        """E_Q(q, t) as a plain vector."""
        with no_grad():
            return self.query_tensor([(question, target)]).numpy()[0]

    def encode_queries(self, queries: Sequence[tuple[str, str]], batch_size: int = 64) -> np.ndarray:
        return self._chunked(self.query_tensor, list(queries), batch_size)

    def encode_passages(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
        return self._chunked(self.passage_tensor, list(texts), batch_size)

    def _chunked(self, fn, items: list, batch_size: int) -> np.ndarray:
        if not items:
            return np.zeros((0, self.dim))
        with no_grad():
            return np.concatenate([fn(items[i:i + batch_size]).numpy()
                                   for i in range(0, len(items), batch_size)], axis=0)

    # ── training ──

    def batch_loss(self, pairs: Sequence[QueryPassagePair], supports: Mapping | None = None) -> Tensor:
        """Mean in-batch ranking loss; duplicate passages are encoded once."""
        passage_ids: dict[str, int] = {}
        texts = []
        for pair in pairs:
            if pair.passage_id not in passage_ids:
                passage_ids[pair.passage_id] = len(texts)
                texts.append(pair.passage)
        queries = self.query_tensor([(p.question, p.target) for p in pairs])
        passages = self.passage_tensor(texts)
        scores = ops.matmul(queries, ops.transpose(passages))
        losses = [ops.nll_from_logits(ops.index(scores, i), passage_ids[p.passage_id])
                  for i, p in enumerate(pairs)]
        return ops.mean_all(ops.stack(losses))

    def train_step(self, pairs: Sequence[QueryPassagePair], state: AdamState) -> float:
        return train_step(self, pairs, state)

    # ── persistence ──

    def header(self, config_echo: dict | None = None) -> dict:
        return {
            "model_kind": KIND,
            "config": config_echo or {},
            "encoder": self.encoder_config.to_dict(),
            "seed": self.seed,
            "vocab": self.vocab.tokens,
        }

    def save(self, path: str | Path, config_echo: dict | None = None) -> None:
        save_container(path, self.header(config_echo),
                       {name: p.data for name, p in self.parameters().items()})

    @classmethod
    def load(cls, path: str | Path) -> "DualEncoder":
        container = load_container(path)
        if container.model_kind != KIND:
            raise ConfigError(f"{path}: expected a dual-encoder checkpoint, found {container.model_kind!r}")
        header = container.header
        enc = cls(Vocabulary(tokens=list(header["vocab"])), EncoderConfig.from_dict(header["encoder"]),
                  seed=int(header.get("seed", 0)))
        for name, p in enc.parameters().items():
            if name not in container.entries:
                raise ConfigError(f"{path}: dual-encoder checkpoint lacks tensor {name!r}")
            if container.entries[name].shape != p.shape:
                raise ConfigError(f"{path}: tensor {name} has shape {container.entries[name].shape}, expected {p.shape}")
            p.data = np.array(container.entries[name], dtype=np.float64)
        return enc
