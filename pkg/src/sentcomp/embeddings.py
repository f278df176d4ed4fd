"""Per-token vector providers: static lookup tables and precomputed
contextual stores, concatenated into the network input matrix.

Static vectors come from GloVe-format text files and are frozen. Contextual
vectors are computed offline by an extractor tool and shipped in the CEMB
binary format, keyed by sentence id; this module only consumes them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SentcompError

CEMB_MAGIC = b"CEMB"
CEMB_VERSION = 1


class GloveFormatError(SentcompError):
    """Static table file violates the one-token-per-line text format."""


class StoreFormatError(SentcompError):
    """CEMB file is corrupt, truncated, or has a bad magic/version."""


class EmbeddingError(SentcompError):
    """A sentence cannot be embedded (missing id, row-count mismatch)."""


@dataclass
class EmbeddingTable:
    """Token -> vector map with a fixed dimension; misses fall back to
    lowercase, then to the zero vector."""

    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is None:
            vec = self.vectors.get(token.lower())
        if vec is None:
            return np.zeros(self.dim)
        return vec

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class ContextualStore:
    """Sentence-id -> (T, dim) matrix map, fully resident after load."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def matrix(self, sentence_id: str, n_tokens: int) -> np.ndarray:
        mat = self.entries.get(sentence_id)
        if mat is None:
            raise EmbeddingError(f"sentence id {sentence_id!r} not in contextual store")
        if mat.shape[0] != n_tokens:
            raise EmbeddingError(
                f"sentence {sentence_id!r}: store has {mat.shape[0]} rows "
                f"for {n_tokens} tokens"
            )
        return mat

    def __len__(self) -> int:
        return len(self.entries)


def load_static_table(path: str) -> EmbeddingTable:
    """Load a GloVe text file: one ``token v1 v2 ... vD`` line per entry,
    single-space separated. The dimension is inferred from the first line."""
    dim = None
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) < 2:
                raise GloveFormatError(f"{path}:{line_no}: no vector components")
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError as err:
                raise GloveFormatError(f"{path}:{line_no}: unparseable float") from err
            if not np.all(np.isfinite(vec)):
                raise GloveFormatError(f"{path}:{line_no}: non-finite component")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise GloveFormatError(
                    f"{path}:{line_no}: {vec.shape[0]} components, expected {dim}"
                )
            vectors[token] = vec
    if dim is None:
        raise GloveFormatError(f"{path}: empty file")
    return EmbeddingTable(dim=dim, vectors=vectors)


def load_contextual_store(path: str) -> ContextualStore:
    """Load a CEMB binary store (see write_contextual_store for the layout)."""
    with open(path, "rb") as fh:
        data = fh.read()

    def take(offset: int, count: int, what: str) -> tuple[bytes, int]:
        if offset + count > len(data):
            raise StoreFormatError(f"{path}: truncated while reading {what}")
        return data[offset:offset + count], offset + count

    raw, off = take(0, 4, "magic")
    if raw != CEMB_MAGIC:
        raise StoreFormatError(f"{path}: bad magic {raw!r}")
    raw, off = take(off, 4, "version")
    version = struct.unpack("<I", raw)[0]
    if version != CEMB_VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    raw, off = take(off, 4, "dim")
    dim = struct.unpack("<I", raw)[0]
    raw, off = take(off, 8, "entry count")
    count = struct.unpack("<Q", raw)[0]

    entries: dict[str, np.ndarray] = {}
    for i in range(count):
        raw, off = take(off, 4, f"id length of entry {i}")
        id_len = struct.unpack("<I", raw)[0]
        raw, off = take(off, id_len, f"id of entry {i}")
        sent_id = raw.decode("utf-8")
        raw, off = take(off, 4, f"row count of entry {i}")
        rows = struct.unpack("<I", raw)[0]
        raw, off = take(off, rows * dim * 4, f"payload of entry {i}")
        mat = np.frombuffer(raw, dtype="<f4").reshape(rows, dim)
        if sent_id in entries:
            raise StoreFormatError(f"{path}: duplicate id {sent_id!r}")
        if not np.all(np.isfinite(mat)):
            raise StoreFormatError(f"{path}: non-finite values in entry {sent_id!r}")
        entries[sent_id] = mat
    if off != len(data):
        raise StoreFormatError(f"{path}: {len(data) - off} trailing bytes")
    return ContextualStore(dim=dim, entries=entries)


def write_contextual_store(
    entries: Sequence[tuple[str, np.ndarray]], dim: int, path: str
) -> None:
    """Write a CEMB store: magic, version u32, dim u32, count u64, then per
    entry id-length u32, id bytes, T u32, T*dim float32 row-major. All
    little-endian."""
    with open(path, "wb") as fh:
        fh.write(CEMB_MAGIC)
        fh.write(struct.pack("<IIQ", CEMB_VERSION, dim, len(entries)))
        for sent_id, mat in entries:
            mat = np.asarray(mat)
            if mat.ndim != 2 or mat.shape[1] != dim:
                raise ValueError(f"entry {sent_id!r}: shape {mat.shape} is not (T, {dim})")
            raw_id = sent_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_id)))
            fh.write(raw_id)
            fh.write(struct.pack("<I", mat.shape[0]))
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def embed(
    tokens: Sequence[str],
    static: EmbeddingTable,
    contextual: ContextualStore | None = None,
    sentence_id: str | None = None,
) -> np.ndarray:
    """Build the (T, E) input matrix: row t is the static vector of token t
    (zeros when out of vocabulary) with the contextual row appended when a
    store is given. E = static.dim + contextual.dim."""
    rows = np.stack([static.lookup(tok) for tok in tokens]).astype(np.float64)
    if contextual is None:
        return rows
    if sentence_id is None:
        raise EmbeddingError("contextual lookup requires a sentence id")
    ctx = contextual.matrix(sentence_id, len(tokens)).astype(np.float64)
    return np.concatenate([rows, ctx], axis=1)
