"""
Special-token packing of pairs, triplets and candidate lists.

    pair     [CLS] q [SEP] c [EOS]
    triplet  [CLS] q [SEP] t [SEP] c [EOS]
    multi    [CLS] q [SEP] c_1 [SEP] ... [SEP] c_n [EOS]
    single   [CLS] p [EOS]

Truncation always keeps the question longest: the last segment is cut
first, the question last.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from dar_rerank.encoder.vocab import Vocabulary
from dar_rerank.errors import ConfigError, DataError

MAX_SEGMENTS = 16


@dataclass(frozen=True)
class PackedSequence:
    """Token ids with attention mask and segment ids; pads only at the end."""

    ids: tuple[int, ...]
    mask: tuple[int, ...]
    segments: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def length(self) -> int:
        """Number of non-pad positions."""
        return sum(self.mask)

    def pad_to(self, length: int, pad_id: int = 0) -> "PackedSequence":
        extra = length - len(self.ids)
        if extra < 0:
            raise DataError(f"cannot pad a sequence of {len(self.ids)} tokens to {length}")
        return PackedSequence(
            ids=self.ids + (pad_id,) * extra,
            mask=self.mask + (0,) * extra,
            segments=self.segments + (0,) * extra,
        )

    def trimmed(self) -> "PackedSequence":
        n = self.length
        return PackedSequence(self.ids[:n], self.mask[:n], self.segments[:n])


def _assemble(parts: Sequence[Sequence[int]], vocab: Vocabulary) -> PackedSequence:
    ids = [vocab.cls_id]
    segments = [0]
    for i, part in enumerate(parts):
        seg = min(i, MAX_SEGMENTS - 1)
        if i > 0:
            ids.append(vocab.sep_id)
            segments.append(min(i - 1, MAX_SEGMENTS - 1))
        ids.extend(part)
        segments.extend([seg] * len(part))
    ids.append(vocab.eos_id)
    segments.append(min(len(parts) - 1, MAX_SEGMENTS - 1))
    return PackedSequence(tuple(ids), (1,) * len(ids), tuple(segments))


def _check_room(max_len: int, n_special: int) -> int:
    if max_len < n_special:
        raise ConfigError(f"max_len={max_len} cannot hold the {n_special} special tokens")
    return max_len - n_special


def _truncate_in_order(parts: list[list[int]], room: int, order: Sequence[int]) -> list[list[int]]:
    """Cut parts in the given priority order until their total fits `room`."""
    over = sum(len(p) for p in parts) - room
    for i in order:
        if over <= 0:
            break
        cut = min(over, len(parts[i]))
        parts[i] = parts[i][:len(parts[i]) - cut]
        over -= cut
    return parts


def pack_pair(q: Sequence[int], c: Sequence[int], vocab: Vocabulary, max_len: int = 128) -> PackedSequence:
    room = _check_room(max_len, 3)
    parts = _truncate_in_order([list(q), list(c)], room, order=(1, 0))
    return _assemble(parts, vocab)


def pack_triplet(
    q: Sequence[int], t: Sequence[int], c: Sequence[int], vocab: Vocabulary, max_len: int = 128,
) -> PackedSequence:
    room = _check_room(max_len, 4)
    parts = _truncate_in_order([list(q), list(t), list(c)], room, order=(2, 1, 0))
    return _assemble(parts, vocab)


def pack_single(p: Sequence[int], vocab: Vocabulary, max_len: int = 128) -> PackedSequence:
    room = _check_room(max_len, 2)
    return _assemble([list(p)[:room]], vocab)


def pack_multi(
    q: Sequence[int], candidates: Sequence[Sequence[int]], vocab: Vocabulary, max_len: int = 128,
) -> PackedSequence:
    """
    Question followed by every candidate; candidates shrink proportionally
    to their length, never below one token each.
    """
    if not candidates:
        raise DataError("pack_multi needs at least one candidate")
    room = _check_room(max_len, 2 + len(candidates)) - len(q)
    lengths = [len(c) for c in candidates]
    floor = sum(1 for n in lengths if n > 0)
    if room < floor:
        raise DataError(
            f"pack_multi: question of {len(q)} tokens and {len(candidates)} candidates "
            f"overflow max_len={max_len} even at one token per candidate"
        )
    total = sum(lengths)
    if total > room:
        alloc = [min(n, max(1, (n * room) // total)) if n else 0 for n in lengths]
        while sum(alloc) > room:
            # shave the longest allocation, highest index first on ties
            j = max(range(len(alloc)), key=lambda i: (alloc[i], i))
            alloc[j] -= 1
        candidates = [c[:a] for c, a in zip(candidates, alloc)]
    return _assemble([list(q)] + [list(c) for c in candidates], vocab)
