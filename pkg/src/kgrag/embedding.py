"""Text embedding behind pluggable backends, with a persistent cache.

Backends return float32 row vectors of a fixed, fingerprinted dimension.
Similarity is a raw dot product by default (the reference embedder is
dot-score trained); cosine is available as a config option. The cache is an
append-only binary file keyed by an 8-byte text hash, so warm runs never
re-embed a string the backend has already seen.
"""

from __future__ import annotations

import hashlib
import logging
import re
import struct
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from ._http import post_json_with_retries
from .errors import DimensionMismatch, MalformedBackendResponse

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"KGEC"
CACHE_VERSION = 1

HASH_DIM = 64

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class ScoredCandidate:
    text: str
    score: float
    original_index: int


class EmbeddingBackend(Protocol):
    fingerprint: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def text_hash64(text: str) -> int:
    """Stable 8-byte hash of the UTF-8 text, used as the cache record key."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def hash_embed(text: str) -> np.ndarray:
    """Deterministic 64-dim bag-of-token embedding for offline tests.

    Each lowercased alphanumeric token hashes to one signed bucket, so texts
    sharing tokens get a higher dot product. Unit L2 norm by construction.
    """
    vec = np.zeros(HASH_DIM, dtype=np.float64)
    for tok in _TOKEN_RE.findall(text.lower()):
        h = text_hash64(tok)
        idx = h & (HASH_DIM - 1)
        sign = 1.0 if (h >> 6) & 1 else -1.0
        vec[idx] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


class HashEmbeddingBackend:
    """Test double for the sentence embedder; see hash_embed."""

    fingerprint = f"hash64/v1@{HASH_DIM}"
    dim = HASH_DIM

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([hash_embed(t) for t in texts]) if texts else np.zeros(
            (0, self.dim), dtype=np.float32
        )


class HttpEmbeddingBackend:
    """JSON embeddings endpoint: {"input": [...], "model": id} in,
    {"data": [{"embedding": [...]}, ...]} out, in input order."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int,
        auth_token: str | None = None,
        timeout: float = 120.0,
        batch_size: int = 64,
        max_retries: int = 2,
        backoff_base: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.fingerprint = f"{model}@{dim}"
        self.batch_size = batch_size
        headers = {}
        if auth_token:
            headers["Authorization"] = f"Bearer {auth_token}"
        self._client = httpx.Client(
            timeout=timeout, headers=headers, transport=transport
        )
        self._max_retries = max_retries
        self._backoff_base = backoff_base

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            payload = {"input": batch, "model": self.model}
            data = post_json_with_retries(
                self._client,
                self.endpoint,
                payload,
                max_retries=self._max_retries,
                backoff_base=self._backoff_base,
            )
            try:
                vectors = [item["embedding"] for item in data["data"]]
            except (KeyError, TypeError) as exc:
                raise MalformedBackendResponse(
                    f"embedding response missing data/embedding: {exc}"
                ) from exc
            if len(vectors) != len(batch):
                raise MalformedBackendResponse(
                    f"expected {len(batch)} embeddings, got {len(vectors)}"
                )
            for v in vectors:
                arr = np.asarray(v, dtype=np.float32)
                if arr.shape != (self.dim,):
                    raise DimensionMismatch(
                        f"backend returned dim {arr.shape}, configured {self.dim}"
                    )
                rows.append(arr)
        if not rows:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack(rows)


class EmbeddingCache:
    """In-memory hash -> vector map with optional append-only file persistence.

    Concurrent reads are free; writes are serialized under a lock.
    Last-writer-wins is fine because values for a key are identical.
    """

    def __init__(self, fingerprint: str, dim: int, path=None):
        self.fingerprint = fingerprint
        self.dim = dim
        self.path = path
        self._map: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()
        self._fh = None
        if path is not None:
            self._open_file()

    def _open_file(self):
        try:
            fh = open(self.path, "r+b")
        except FileNotFoundError:
            fh = open(self.path, "w+b")
            header = (
                CACHE_MAGIC
                + struct.pack("<I", CACHE_VERSION)
                + struct.pack("<H", len(self.fingerprint.encode("utf-8")))
                + self.fingerprint.encode("utf-8")
                + struct.pack("<I", self.dim)
            )
            fh.write(header)
            fh.flush()
            self._fh = fh
            return
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            fh.close()
            raise DimensionMismatch(f"{self.path} is not an embedding cache file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CACHE_VERSION:
            fh.close()
            raise DimensionMismatch(f"unsupported cache version {version}")
        (fp_len,) = struct.unpack("<H", fh.read(2))
        fingerprint = fh.read(fp_len).decode("utf-8")
        (dim,) = struct.unpack("<I", fh.read(4))
        if fingerprint != self.fingerprint or dim != self.dim:
            fh.close()
            raise DimensionMismatch(
                f"cache {self.path} holds {fingerprint}@{dim}, "
                f"backend is {self.fingerprint}@{self.dim}"
            )
        record_size = 8 + 4 * self.dim
        while True:
            record = fh.read(record_size)
            if len(record) < record_size:
                break
            key = int.from_bytes(record[:8], "little")
            vec = np.frombuffer(record[8:], dtype="<f4").copy()
            self._map[key] = vec
        fh.seek(0, 2)
        self._fh = fh

    def __len__(self) -> int:
        return len(self._map)

    def get(self, text: str) -> np.ndarray | None:
        return self._map.get(text_hash64(text))

    def put(self, text: str, vector: np.ndarray) -> None:
        vec = np.ascontiguousarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector of dim {vec.shape} cannot enter a dim-{self.dim} cache"
            )
        key = text_hash64(text)
        with self._lock:
            if key in self._map:
                return
            self._map[key] = vec
            if self._fh is not None:
                self._fh.write(key.to_bytes(8, "little"))
                self._fh.write(vec.astype("<f4").tobytes())
                self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def embed_texts(
    backend: EmbeddingBackend,
    cache: EmbeddingCache | None,
    texts: Sequence[str],
) -> np.ndarray:
    """Order-preserving embedding with cache consultation before the backend."""
    if cache is not None and cache.fingerprint != backend.fingerprint:
        raise DimensionMismatch(
            f"cache fingerprint {cache.fingerprint} != backend {backend.fingerprint}"
        )
    out: list[np.ndarray | None] = [None] * len(texts)
    missing: list[int] = []
    for i, text in enumerate(texts):
        hit = cache.get(text) if cache is not None else None
        if hit is not None:
            out[i] = hit
        else:
            missing.append(i)
    if missing:
        # A text repeated within one call is embedded once.
        unique: dict[str, list[int]] = {}
        for i in missing:
            unique.setdefault(texts[i], []).append(i)
        fresh = backend.embed(list(unique.keys()))
        for (text, positions), vec in zip(unique.items(), fresh):
            if cache is not None:
                cache.put(text, vec)
            for i in positions:
                out[i] = vec
    if not out:
        return np.zeros((0, backend.dim), dtype=np.float32)
    return np.stack(out)  # type: ignore[arg-type]


def top_k(
    query: np.ndarray,
    candidates: Sequence[tuple[str, np.ndarray]],
    k: int,
    similarity: str = "dot",
) -> list[ScoredCandidate]:
    """K highest dot-product candidates, ties broken by input order.

    Scores accumulate in double precision. Returns all candidates when the
    pool holds fewer than k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not candidates:
        return []
    q = np.asarray(query, dtype=np.float64)
    matrix = np.stack([np.asarray(vec, dtype=np.float64) for _, vec in candidates])
    if matrix.shape[1] != q.shape[0]:
        raise DimensionMismatch(
            f"query dim {q.shape[0]} != candidate dim {matrix.shape[1]}"
        )
    scores = matrix @ q
    if similarity == "cosine":
        q_norm = float(np.linalg.norm(q))
        c_norms = np.linalg.norm(matrix, axis=1)
        denom = np.where(c_norms * q_norm == 0.0, 1.0, c_norms * q_norm)
        scores = scores / denom
    elif similarity != "dot":
        raise ValueError(f"unknown similarity {similarity!r}")
    order = np.argsort(-scores, kind="stable")[: min(k, len(candidates))]
    return [
        ScoredCandidate(
            text=candidates[i][0], score=float(scores[i]), original_index=int(i)
        )
        for i in order
    ]
