"""Embedding providers: a remote OpenAI-compatible endpoint or a local
deterministic feature-hashing embedder for offline runs and tests.

Vector values are always quantized to float32 so index persistence is
bit-exact regardless of which provider produced them.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ProviderError
from .httpapi import RetryPolicy, post_json

DEFAULT_LOCAL_DIM = 256
DEFAULT_REMOTE_MODEL = "text-embedding-ada-002"
DEFAULT_BATCH_LIMIT = 100
DEFAULT_API_KEY_ENV = "RAG_PRISM_API_KEY"

# Fixed seed for the 3-gram feature hashing; changing it changes every vector.
_HASH_SEED = b"ragtutor-embed-v1:"
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_PAD_LEFT = "\x02"
_PAD_RIGHT = "\x03"


class ProviderKind(str, Enum):
    REMOTE_OPENAI_COMPATIBLE = "remote_openai_compatible"
    LOCAL_DETERMINISTIC = "local_deterministic"


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int
    provider_id: str
    norm: float

    @classmethod
    def from_values(cls, values, provider_id: str) -> "EmbeddingVector":
        """Quantize to float32 and cache the L2 norm."""
        arr = np.asarray(values, dtype=np.float32)
        quantized = tuple(float(v) for v in arr)
        return cls(
            values=quantized,
            dim=len(quantized),
            provider_id=provider_id,
            norm=float(np.linalg.norm(np.asarray(quantized, dtype=np.float64))),
        )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass
class EmbeddingProviderSpec:
    kind: ProviderKind = ProviderKind.LOCAL_DETERMINISTIC
    model_name: str = DEFAULT_REMOTE_MODEL
    endpoint_url: str = ""
    dim: int = DEFAULT_LOCAL_DIM
    batch_limit: int = DEFAULT_BATCH_LIMIT
    api_key_env: str = DEFAULT_API_KEY_ENV
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    max_in_flight: int = 4

    def provider_id(self) -> str:
        if self.kind is ProviderKind.LOCAL_DETERMINISTIC:
            return f"local:hash3gram:{self.dim}"
        return f"remote:{self.model_name}"

    def validate(self) -> None:
        if self.kind is ProviderKind.LOCAL_DETERMINISTIC:
            if self.dim < 8:
                raise ValueError(f"local embedder dim must be >= 8, got {self.dim}")
        else:
            if not self.endpoint_url:
                raise ValueError("remote embedding spec requires endpoint_url")
            if not os.environ.get(self.api_key_env):
                raise ValueError(f"remote embedding spec requires credential in ${self.api_key_env}")
        if self.batch_limit < 1:
            raise ValueError("batch_limit must be >= 1")


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def deterministic_embed(text: str, dim: int = DEFAULT_LOCAL_DIM) -> EmbeddingVector:
    """Embed by signed feature hashing of character 3-grams, L2-normalized.

    The text is lowercased and padded with boundary sentinels so even
    single-character inputs produce at least one 3-gram. The top hash bit
    selects the +1/-1 sign, which keeps bucket-collision bias low.
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    if not text:
        raise ValueError("text must be non-empty")

    padded = _PAD_LEFT + text.lower() + _PAD_RIGHT
    buckets = [0.0] * dim
    for i in range(len(padded) - 2):
        gram = padded[i : i + 3]
        h = _fnv1a64(_HASH_SEED + gram.encode("utf-8"))
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        buckets[h % dim] += sign

    norm = math.sqrt(sum(v * v for v in buckets))
    if norm == 0.0:
        # All grams cancelled; fall back to a fixed unit direction so the
        # vector is still usable (astronomically unlikely for real text).
        buckets[0] = 1.0
        norm = 1.0
    normalized = [v / norm for v in buckets]
    return EmbeddingVector.from_values(normalized, provider_id=f"local:hash3gram:{dim}")


# One semaphore per remote spec identity, bounding in-flight requests.
_inflight_locks: dict[tuple[str, int], threading.Semaphore] = {}
_inflight_guard = threading.Lock()


def _inflight_semaphore(spec: EmbeddingProviderSpec) -> threading.Semaphore:
    key = (spec.endpoint_url, spec.max_in_flight)
    with _inflight_guard:
        if key not in _inflight_locks:
            _inflight_locks[key] = threading.Semaphore(spec.max_in_flight)
        return _inflight_locks[key]


def _embed_remote(spec: EmbeddingProviderSpec, texts: list[str]) -> list[EmbeddingVector]:
    headers = {"Authorization": f"Bearer {os.environ[spec.api_key_env]}"}
    url = spec.endpoint_url.rstrip("/") + "/v1/embeddings"
    provider = spec.provider_id()
    semaphore = _inflight_semaphore(spec)

    vectors: list[EmbeddingVector] = []
    pinned_dim: int | None = None
    for start in range(0, len(texts), spec.batch_limit):
        batch = texts[start : start + spec.batch_limit]
        with semaphore:
            body = post_json(url, {"model": spec.model_name, "input": batch}, headers, spec.retry)
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(batch):
            raise ProviderError(f"embeddings response has {len(data or [])} items for {len(batch)} inputs")
        # Honor explicit per-item indices when the server provides them.
        if all(isinstance(item, dict) and "index" in item for item in data):
            data = sorted(data, key=lambda item: item["index"])
        for item in data:
            vec = EmbeddingVector.from_values(item["embedding"], provider_id=provider)
            if pinned_dim is None:
                pinned_dim = vec.dim
            elif vec.dim != pinned_dim:
                raise ProviderError(f"embedding dim changed mid-run: {vec.dim} != {pinned_dim}")
            vectors.append(vec)
    return vectors


def embed_batch(spec: EmbeddingProviderSpec, texts: list[str]) -> list[EmbeddingVector]:
    """Embed texts in input order; remote calls are batched at batch_limit."""
    if not texts:
        raise ValueError("texts must be non-empty")
    for i, text in enumerate(texts):
        if not text.strip():
            raise ValueError(f"texts[{i}] is empty after trimming")
    spec.validate()

    if spec.kind is ProviderKind.LOCAL_DETERMINISTIC:
        return [deterministic_embed(text, spec.dim) for text in texts]
    return _embed_remote(spec, texts)
