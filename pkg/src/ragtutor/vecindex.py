"""In-memory vector index: exact cosine top-k over chunk embeddings, plus a
checksummed single-file persistence format for recomputation-free restarts.

Retrieval is a full scan with ties broken by ascending chunk_id, which makes
Hit Rate / MRR runs reproducible bit-for-bit.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Chunk, corpus_fingerprint
from .embedder import EmbeddingVector
from .errors import EmptyIndexError, IndexIntegrityError, IndexMigrationError

FORMAT_VERSION = 1
_MAGIC = b"RTUTRIDX"


@dataclass(frozen=True)
class ScoredHit:
    chunk_id: str
    score: float
    rank: int


@dataclass
class _Entry:
    vector: EmbeddingVector
    chunk: Chunk


@dataclass
class VectorIndex:
    dim: int = 0
    provider_id: str = ""
    version: int = FORMAT_VERSION
    entries: dict[str, _Entry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def chunks(self) -> list[Chunk]:
        return [entry.chunk for entry in self.entries.values()]

    def fingerprint(self) -> str:
        return corpus_fingerprint(self.chunks())

    def get_chunk(self, chunk_id: str) -> Chunk:
        return self.entries[chunk_id].chunk


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1], computed in float64."""
    if a.dim != b.dim:
        raise ValueError(f"dim mismatch: {a.dim} != {b.dim}")
    if a.norm == 0.0 or b.norm == 0.0:
        raise ValueError("cosine is undefined for zero-norm vectors")
    return float(np.dot(a.as_array(), b.as_array()) / (a.norm * b.norm))


def upsert(index: VectorIndex, items: list[tuple[Chunk, EmbeddingVector]]) -> int:
    """Insert or replace entries; returns how many items were written.

    The first insert pins the index dim and provider; later items must match.
    """
    count = 0
    for chunk, vector in items:
        if index.dim == 0 and not index.entries:
            index.dim = vector.dim
            index.provider_id = vector.provider_id
        if vector.dim != index.dim:
            raise ValueError(f"dim mismatch for chunk {chunk.chunk_id!r}: {vector.dim} != {index.dim}")
        if vector.provider_id != index.provider_id:
            raise ValueError(
                f"provider mismatch for chunk {chunk.chunk_id!r}: "
                f"{vector.provider_id!r} != {index.provider_id!r}"
            )
        index.entries[chunk.chunk_id] = _Entry(vector=vector, chunk=chunk)
        count += 1
    return count


def search(index: VectorIndex, query_vec: EmbeddingVector, k: int = 5) -> list[ScoredHit]:
    """Exact top-k by cosine similarity; ties broken by ascending chunk_id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not index.entries:
        raise EmptyIndexError("search against an empty index")
    if query_vec.dim != index.dim:
        raise ValueError(f"query dim {query_vec.dim} != index dim {index.dim}")

    scored = [(-cosine(query_vec, entry.vector), chunk_id) for chunk_id, entry in index.entries.items()]
    scored.sort()
    return [
        ScoredHit(chunk_id=chunk_id, score=-neg_score, rank=rank)
        for rank, (neg_score, chunk_id) in enumerate(scored[:k], start=1)
    ]


def _pack_str(value: str, width: str = "H") -> bytes:
    data = value.encode("utf-8")
    return struct.pack(f"<{width}", len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise IndexIntegrityError("index file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self, width: str = "H") -> str:
        (length,) = self.unpack(f"<{width}")
        return self.take(length).decode("utf-8")


def save(index: VectorIndex, path: str | Path) -> None:
    """Write the index to a single checksummed file (entries sorted by id)."""
    payload = bytearray()
    for chunk_id in sorted(index.entries):
        entry = index.entries[chunk_id]
        chunk = entry.chunk
        payload += _pack_str(chunk.chunk_id)
        payload += _pack_str(chunk.doc_id)
        payload += struct.pack("<IIQQ", chunk.ordinal, chunk.token_count, *chunk.char_span)
        payload += _pack_str(chunk.text, width="I")
        payload += np.asarray(entry.vector.values, dtype="<f4").tobytes()

    header = _MAGIC
    header += struct.pack("<II", FORMAT_VERSION, index.dim)
    header += _pack_str(index.provider_id)
    header += struct.pack("<IIQ", len(index.entries), zlib.crc32(bytes(payload)), len(payload))
    Path(path).write_bytes(header + bytes(payload))


def load(path: str | Path) -> VectorIndex:
    """Read an index file; version and checksum are verified before parsing."""
    data = Path(path).read_bytes()
    reader = _Reader(data)
    if reader.take(len(_MAGIC)) != _MAGIC:
        raise IndexIntegrityError(f"{path} is not an index file (bad magic)")
    (version, dim) = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise IndexMigrationError(found=version, expected=FORMAT_VERSION)
    provider_id = reader.read_str()
    (count, crc, payload_len) = reader.unpack("<IIQ")

    payload = reader.take(payload_len)
    if reader.pos != len(data):
        raise IndexIntegrityError("trailing bytes after index payload")
    if zlib.crc32(payload) != crc:
        raise IndexIntegrityError("payload checksum mismatch")

    index = VectorIndex(dim=dim, provider_id=provider_id, version=version)
    body = _Reader(payload)
    for _ in range(count):
        chunk_id = body.read_str()
        doc_id = body.read_str()
        ordinal, token_count, span_start, span_end = body.unpack("<IIQQ")
        text = body.read_str(width="I")
        raw = body.take(dim * 4)
        values = np.frombuffer(raw, dtype="<f4")
        vector = EmbeddingVector.from_values(values, provider_id=provider_id)
        chunk = Chunk(
            chunk_id=chunk_id,
            doc_id=doc_id,
            ordinal=ordinal,
            text=text,
            token_count=token_count,
            char_span=(span_start, span_end),
        )
        index.entries[chunk_id] = _Entry(vector=vector, chunk=chunk)
    if body.pos != len(payload):
        raise IndexIntegrityError("payload length does not match entry count")
    return index
