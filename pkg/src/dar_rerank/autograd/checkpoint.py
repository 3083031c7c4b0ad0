"""
Binary container for named float64 arrays.

Layout:
    magic  b"DARCKPT\\x01"
    u32    header length, then the UTF-8 JSON header
           {"format_version", "model_kind", "config", ...extra}
    u32    entry count, then per entry:
           u16 name length, UTF-8 name, u8 ndim, u32 × ndim extents,
           row-major little-endian float64 data

Model checkpoints and the retrieval index both use it, so a round-trip
is bit-exact by construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dar_rerank.errors import ConfigError, DataError

MAGIC = b"DARCKPT\x01"
FORMAT_VERSION = 1


@dataclass
class Container:
    header: dict
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def model_kind(self) -> str:
        return self.header.get("model_kind", "")


def save_container(path: str | Path, header: dict, entries: dict[str, np.ndarray]) -> None:
    header = {"format_version": FORMAT_VERSION, **header}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw_name = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw_name)))
            f.write(raw_name)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))


def load_container(path: str | Path) -> Container:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise DataError(f"{path}: not a dar-rerank container (bad magic)")
    pos = len(MAGIC)

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise DataError(f"{path}: truncated container at byte {pos}")
        values = struct.unpack_from(fmt, raw, pos)
        pos += size
        return values

    (hlen,) = take("<I")
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    if header.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format version {header.get('format_version')}")

    (count,) = take("<I")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n
        if pos + nbytes > len(raw):
            raise DataError(f"{path}: truncated data for entry {name!r}")
        entries[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    return Container(header=header, entries=entries)
