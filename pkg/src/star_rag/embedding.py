"""Event/query embeddings: pluggable providers, on-disk cache, cosine ranking."""

from __future__ import annotations

import hashlib
import os
import time
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .tkg import Event, TemporalKG


class DimensionMismatch(ValueError):
    pass


class ProviderError(RuntimeError):
    pass


class CacheCorruption(RuntimeError):
    pass


def render_event_text(kg: TemporalKG, event: Event) -> str:
    """Render an event as ``subject relation object @ YYYY-MM-DD``."""
    subject, relation, obj, day = kg.quad_strings(event)
    return f"{subject} {relation} {obj} @ {day}"


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashingProvider:
    """Deterministic offline provider: feature-hashed token counts, L2-normalized.

    Token indices and signs come from SHA-256, so vectors are byte-identical
    across runs and platforms. Only empty text yields a zero vector.
    """

    name = "hash64"
    dim = 64

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in text.split():
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                idx = int.from_bytes(digest[:4], "big") % self.dim
                sign = 1.0 if digest[4] & 1 else -1.0
                out[row, idx] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0.0:
                out[row] /= norm
        return out.astype(np.float32)


class HttpProvider:
    """Embedding service client speaking POST /embed with a JSON text batch."""

    def __init__(
        self,
        url: str,
        dim: int | None = None,
        timeout: float = 30.0,
        retries: int = 3,
        batch_size: int = 128,
        session: requests.Session | None = None,
    ):
        self.url = url.rstrip("/")
        self.name = f"http:{self.url}"
        self.dim = dim
        self.timeout = timeout
        self.retries = retries
        self.batch_size = batch_size
        self._session = session or requests.Session()

    def _post(self, texts: Sequence[str]) -> list[list[float]]:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._session.post(
                    f"{self.url}/embed", json={"texts": list(texts)}, timeout=self.timeout
                )
                if response.status_code != 200:
                    raise ProviderError(
                        f"embedding service returned HTTP {response.status_code}"
                    )
                return response.json()["vectors"]
            except (requests.ConnectionError, requests.Timeout, ProviderError, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(min(4.0, 0.2 * 2**attempt))
        raise ProviderError(
            f"embedding request failed after {self.retries + 1} attempts: {last_error}"
        ) from last_error

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            vectors.extend(self._post(texts[start : start + self.batch_size]))
        if len(vectors) != len(texts):
            raise ProviderError(
                f"provider returned {len(vectors)} vectors for {len(texts)} texts"
            )
        array = np.asarray(vectors, dtype=np.float32)
        if self.dim is None:
            self.dim = int(array.shape[1]) if array.size else 0
        return array


class EmbeddingCache:
    """Content-addressed vector cache: one float32 .npy file per (provider, text).

    Concurrent writers are safe; identical keys carry identical values, so
    last-writer-wins is acceptable. Unreadable entries are evicted.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, provider_name: str, text: str) -> Path:
        key = hashlib.sha256(provider_name.encode() + b"\x00" + text.encode()).hexdigest()
        return self.directory / f"{key}.npy"

    def get(self, provider_name: str, text: str) -> np.ndarray | None:
        path = self._path(provider_name, text)
        if not path.exists():
            return None
        try:
            try:
                return np.load(path, allow_pickle=False)
            except (OSError, ValueError) as exc:
                raise CacheCorruption(f"unreadable cache entry {path.name}") from exc
        except CacheCorruption:
            path.unlink(missing_ok=True)
            return None

    def put(self, provider_name: str, text: str, vector: np.ndarray) -> None:
        path = self._path(provider_name, text)
        tmp = path.with_suffix(f".tmp.{os.getpid()}")
        np.save(tmp, np.asarray(vector, dtype=np.float32))
        os.replace(f"{tmp}.npy", path)


def embed_batch(
    provider: EmbeddingProvider,
    texts: Sequence[str],
    cache: EmbeddingCache | None = None,
) -> np.ndarray:
    """Embed texts, consulting the cache first; one result row per input text."""
    if not texts:
        dim = provider.dim or 0
        return np.zeros((0, dim), dtype=np.float32)
    results: list[np.ndarray | None] = [None] * len(texts)
    misses: list[int] = []
    if cache is not None:
        for i, text in enumerate(texts):
            results[i] = cache.get(provider.name, text)
            if results[i] is None:
                misses.append(i)
    else:
        misses = list(range(len(texts)))

    if misses:
        fetched = provider.embed([texts[i] for i in misses])
        if len(fetched) != len(misses):
            raise ProviderError(
                f"provider returned {len(fetched)} vectors for {len(misses)} texts"
            )
        for slot, row in zip(misses, fetched):
            vector = np.asarray(row, dtype=np.float32)
            results[slot] = vector
            if cache is not None:
                cache.put(provider.name, texts[slot], vector)

    dims = {r.shape[0] for r in results}  # type: ignore[union-attr]
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed vector dimensions in batch: {sorted(dims)}")
    return np.stack(results)  # type: ignore[arg-type]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors in double precision; 0.0 when either norm is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        return 0.0
    return float(np.dot(a, b) / norm)


def similarity_to_all(query_vec: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Cosine similarity of one query against every row, zero-norm rows scoring 0."""
    query = np.asarray(query_vec, dtype=np.float64)
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.shape[1] != query.shape[0]:
        raise DimensionMismatch(
            f"query dim {query.shape[0]} vs vectors dim {matrix.shape[1]}"
        )
    qnorm = np.linalg.norm(query)
    norms = np.linalg.norm(matrix, axis=1) * qnorm
    dots = matrix @ query
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0.0)


def top_k_by_similarity(
    query_vec: np.ndarray,
    candidate_ids: Sequence[int],
    vectors: np.ndarray,
    k: int,
) -> list[tuple[int, float]]:
    """Top-k candidates by cosine score, ties broken by ascending id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not candidate_ids:
        return []
    ids = np.asarray(candidate_ids, dtype=np.int64)
    scores = similarity_to_all(query_vec, vectors[ids])
    order = np.lexsort((ids, -scores))[:k]
    return [(int(ids[i]), float(scores[i])) for i in order]
