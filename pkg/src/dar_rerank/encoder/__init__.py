"""Tokenization, input packing and the tiny transformer encoder."""

from dar_rerank.encoder.vocab import Vocabulary, tokenize, split_words
from dar_rerank.encoder.packing import (
    PackedSequence,
    pack_pair,
    pack_triplet,
    pack_multi,
    pack_single,
)
from dar_rerank.encoder.transformer import EncoderConfig, EncoderParams, encode, encode_batch

__all__ = [
    "Vocabulary",
    "tokenize",
    "split_words",
    "PackedSequence",
    "pack_pair",
    "pack_triplet",
    "pack_multi",
    "pack_single",
    "EncoderConfig",
    "EncoderParams",
    "encode",
    "encode_batch",
]
