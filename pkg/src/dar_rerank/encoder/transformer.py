"""
Tiny post-LN transformer encoder returning the [CLS] embedding.

Token and segment embeddings are learned; positions use fixed sinusoids.
Each block is multi-head self-attention over unmasked keys followed by a
GELU feed-forward, each wrapped in residual + layer norm.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import Sequence

import numpy as np

from dar_rerank.autograd import ops
from dar_rerank.autograd.tensor import Tensor, parameter
from dar_rerank.encoder.packing import MAX_SEGMENTS, PackedSequence
from dar_rerank.errors import ConfigError


@dataclass
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    d: int = 64
    ff: int = 128
    max_len: int = 128
    vocab_size: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.d % self.heads != 0:
            raise ConfigError(f"model width d={self.d} is not divisible by heads={self.heads}")
        if not 8 <= self.max_len <= 512:
            raise ConfigError(f"max_len={self.max_len} outside [8, 512]")
        if self.layers < 1 or self.ff < 1:
            raise ConfigError(f"layers={self.layers} and ff={self.ff} must be positive")
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size={self.vocab_size} cannot hold the reserved tokens")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        valid = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in valid})


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


@dataclass
class EncoderParams:
    """All learnable encoder weights, keyed by dotted name."""

    config: EncoderConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def init(cls, config: EncoderConfig, seed: int | None = None) -> "EncoderParams":
        config.validate()
        rng = np.random.default_rng(config.seed if seed is None else seed)
        d, ff = config.d, config.ff

        def dense(rows: int, cols: int) -> np.ndarray:
            return rng.normal(0.0, 1.0 / np.sqrt(rows), size=(rows, cols))

        t: dict[str, np.ndarray] = {
            "tok_emb": rng.normal(0.0, 1.0, size=(config.vocab_size, d)),
            "seg_emb": rng.normal(0.0, 0.5, size=(MAX_SEGMENTS, d)),
            "emb_ln.gamma": np.ones(d),
            "emb_ln.beta": np.zeros(d),
        }
        for layer in range(config.layers):
            p = f"layers.{layer}."
            for w in ("wq", "wk", "wv", "wo"):
                t[p + "attn." + w] = dense(d, d)
                t[p + "attn.b" + w[1]] = np.zeros(d)
            t[p + "ln1.gamma"], t[p + "ln1.beta"] = np.ones(d), np.zeros(d)
            t[p + "ff.w1"], t[p + "ff.b1"] = dense(d, ff), np.zeros(ff)
            t[p + "ff.w2"], t[p + "ff.b2"] = dense(ff, d), np.zeros(d)
            t[p + "ln2.gamma"], t[p + "ln2.beta"] = np.ones(d), np.zeros(d)
        return cls(config=config, tensors={k: parameter(v, name=k) for k, v in t.items()})

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + k: v for k, v in self.tensors.items()}

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    @classmethod
    def from_arrays(cls, config: EncoderConfig, arrays: dict[str, np.ndarray]) -> "EncoderParams":
        expected = cls.init(config)
        missing = set(expected.tensors) - set(arrays)
        if missing:
            raise ConfigError(f"checkpoint lacks encoder tensors: {sorted(missing)[:5]}")
        for name, t in expected.tensors.items():
            if arrays[name].shape != t.shape:
                raise ConfigError(f"encoder tensor {name}: checkpoint {arrays[name].shape} vs config {t.shape}")
            t.data = np.array(arrays[name], dtype=np.float64)
        return expected


def _heads_view(x: Tensor, n: int, length: int, heads: int, dh: int) -> Tensor:
    """[n·L, d] -> [n·H, L, dh]."""
    x = ops.reshape(x, (n, length, heads, dh))
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (n * heads, length, dh))


def _merge_heads(x: Tensor, n: int, length: int, heads: int, dh: int) -> Tensor:
    """[n·H, L, dh] -> [n·L, d]."""
    x = ops.reshape(x, (n, heads, length, dh))
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (n * length, heads * dh))


def encode_batch(
    seqs: Sequence[PackedSequence],
    params: EncoderParams,
    return_attention: bool = False,
):
    """
    Encode several packed sequences; returns the [n×d] [CLS] embeddings.

    Sequences are trimmed of their own pads and re-padded to the longest
    member. With `return_attention`, also returns the per-layer attention
    weights as numpy arrays of shape [n·H, L, L].
    """
    cfg = params.config
    w = params.tensors
    seqs = [s.trimmed() for s in seqs]
    n = len(seqs)
    length = max(len(s) for s in seqs)
    if length > cfg.max_len:
        raise ConfigError(f"sequence of {length} tokens exceeds max_len={cfg.max_len}")
    seqs = [s.pad_to(length) for s in seqs]

    ids = np.array([s.ids for s in seqs], dtype=np.int64).reshape(-1)
    segs = np.array([s.segments for s in seqs], dtype=np.int64).reshape(-1)
    key_mask = np.array([s.mask for s in seqs], dtype=bool)
    if ids.max() >= cfg.vocab_size:
        raise ConfigError(f"token id {int(ids.max())} outside vocabulary of {cfg.vocab_size}")

    pos = Tensor(np.tile(sinusoidal_positions(length, cfg.d), (n, 1)))
    x = ops.index(w["tok_emb"], ids) + ops.index(w["seg_emb"], segs) + pos
    x = ops.layer_norm(x, w["emb_ln.gamma"], w["emb_ln.beta"])

    heads, dh = cfg.heads, cfg.d // cfg.heads
    attn_mask = np.broadcast_to(np.repeat(key_mask, heads, axis=0)[:, None, :], (n * heads, length, length))
    attentions = []
    for layer in range(cfg.layers):
        p = f"layers.{layer}."
        q = _heads_view(ops.add_bias(x @ w[p + "attn.wq"], w[p + "attn.bq"]), n, length, heads, dh)
        k = _heads_view(ops.add_bias(x @ w[p + "attn.wk"], w[p + "attn.bk"]), n, length, heads, dh)
        v = _heads_view(ops.add_bias(x @ w[p + "attn.wv"], w[p + "attn.bv"]), n, length, heads, dh)
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
        attn = ops.softmax(scores, mask=attn_mask)
        if return_attention:
            attentions.append(attn.numpy())
        ctx = _merge_heads(ops.matmul(attn, v), n, length, heads, dh)
        out = ops.add_bias(ctx @ w[p + "attn.wo"], w[p + "attn.bo"])
        x = ops.layer_norm(x + out, w[p + "ln1.gamma"], w[p + "ln1.beta"])
        hidden = ops.gelu(ops.add_bias(x @ w[p + "ff.w1"], w[p + "ff.b1"]))
        ff = ops.add_bias(hidden @ w[p + "ff.w2"], w[p + "ff.b2"])
        x = ops.layer_norm(x + ff, w[p + "ln2.gamma"], w[p + "ln2.beta"])

    cls = ops.index(ops.reshape(x, (n, length, cfg.d)), (slice(None), 0, slice(None)))
    if return_attention:
        return cls, attentions
    return cls


def encode(seq: PackedSequence, params: EncoderParams) -> Tensor:
    """The [CLS] hidden state of one sequence after all layers."""
    return ops.index(encode_batch([seq], params), 0)
