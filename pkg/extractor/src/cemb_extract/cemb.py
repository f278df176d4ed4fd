"""CEMB binary store emitter.

Layout (little-endian): magic ``CEMB``, version u32 = 1, dim u32, count u64;
then per entry: id-length u32, id UTF-8 bytes, T u32, T*dim float32 values
row-major. A reader is included for self-checks; downstream consumers load
these files with their own tooling.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

MAGIC = b"CEMB"
VERSION = 1


class CembFormatError(Exception):
    pass


def write_cemb(entries: Sequence[tuple[str, np.ndarray]], dim: int, path: str) -> None:
    """Single-pass write of all entries; matrices must be (T, dim)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, len(entries)))
        for sent_id, mat in entries:
            mat = np.asarray(mat, dtype="<f4")
            if mat.ndim != 2 or mat.shape[1] != dim:
                raise ValueError(f"entry {sent_id!r}: shape {mat.shape} is not (T, {dim})")
            raw = sent_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", mat.shape[0]))
            fh.write(np.ascontiguousarray(mat).tobytes())


def read_cemb(path: str) -> tuple[int, dict[str, np.ndarray]]:
    """Self-check reader; raises CembFormatError on any inconsistency."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CembFormatError(f"bad magic {data[:4]!r}")
    version, dim = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CembFormatError(f"unsupported version {version}")
    (count,) = struct.unpack("<Q", data[12:20])
    entries: dict[str, np.ndarray] = {}
    offset = 20
    for _ in range(count):
        (id_len,) = struct.unpack("<I", data[offset:offset + 4])
        offset += 4
        sent_id = data[offset:offset + id_len].decode("utf-8")
        offset += id_len
        (rows,) = struct.unpack("<I", data[offset:offset + 4])
        offset += 4
        nbytes = rows * dim * 4
        if offset + nbytes > len(data):
            raise CembFormatError(f"truncated payload for {sent_id!r}")
        entries[sent_id] = np.frombuffer(
            data[offset:offset + nbytes], dtype="<f4"
        ).reshape(rows, dim)
        offset += nbytes
    if offset != len(data):
        raise CembFormatError("trailing bytes")
    return dim, entries
