"""Vocabulary and the lowercase word tokenizer."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from dar_rerank.errors import DataError

PAD, UNK, CLS, SEP, EOS = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[EOS]"
RESERVED = (PAD, UNK, CLS, SEP, EOS)

_TOKEN = re.compile(r"[\w']+|[^\w\s]")


def split_words(text: str) -> list[str]:
    """Lowercased words and standalone punctuation marks."""
    return _TOKEN.findall(text.lower())


@dataclass
class Vocabulary:
    """Dense token→id map with the reserved tokens at ids 0..4."""

    tokens: list[str] = field(default_factory=lambda: list(RESERVED))
    _ids: dict[str, int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:len(RESERVED)]) != RESERVED:
            raise DataError(f"vocabulary must start with {RESERVED}, got {self.tokens[:len(RESERVED)]}")
        self._ids = {}
        for i, tok in enumerate(self.tokens):
            if tok in self._ids:
                raise DataError(f"duplicate vocabulary token {tok!r} at line {i + 1}")
            self._ids[tok] = i

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    @property
    def cls_id(self) -> int:
        return self._ids[CLS]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "Vocabulary":
        """Reserved tokens first, then corpus tokens by descending count, ties alphabetical."""
        counts = Counter(tok for text in texts for tok in split_words(text))
        ranked = sorted((t for t, c in counts.items() if c >= min_count and t not in RESERVED),
                        key=lambda t: (-counts[t], t))
        return cls(tokens=list(RESERVED) + ranked)

    def save(self, path: str | Path) -> None:
        """One token per line; line number is the id."""
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tokens=lines)


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Deterministic token ids; out-of-vocabulary words map to [UNK]."""
    return [vocab.id(tok) for tok in split_words(text)]
