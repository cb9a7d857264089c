"""Vector math, the deterministic built-in embedder, embedding files, and
the remote embedding-provider client.

All arithmetic is binary64. Embedding files are JSONL records
``{"id": ..., "vector": [...]}``; floats round-trip exactly because the
writer emits shortest round-tripping decimals (Python's float repr).

Remote provider wire protocol: ``POST {base}/embed`` with body
``{"texts": [...]}``, response
``{"model": str, "dim": int, "vectors": [[...], ...]}`` index-aligned.
"""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass
from typing import IO, Iterable, Protocol, Sequence

import httpx
import numpy as np

from jobrec.errors import EmbeddingError, ProtocolError

DEFAULT_DIM = 256
DEFAULT_SEED = 0

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def as_vector(values, *, what: str = "vector") -> np.ndarray:
    """Coerce to a finite, non-empty 1-D float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmbeddingError(f"{what} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise EmbeddingError(f"{what} contains non-finite components")
    return v


def l2_normalize(v, *, what: str = "vector") -> np.ndarray:
    v = as_vector(v, what=what)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise EmbeddingError(f"{what} has zero norm, cannot normalize")
    return v / norm


def cosine(a, b) -> float:
    """Cosine similarity, clamped to [-1, 1] to absorb rounding."""
    a = as_vector(a, what="left vector")
    b = as_vector(b, what="right vector")
    if a.shape[0] != b.shape[0]:
        raise EmbeddingError(f"dim mismatch: {a.shape[0]} vs {b.shape[0]}")
    # sqrt of the product of squared norms is better conditioned than the
    # product of norms (keeps aligned/opposed pairs at exactly +/-1)
    denom_sq = float(np.dot(a, a)) * float(np.dot(b, b))
    if denom_sq == 0.0:
        raise EmbeddingError("cosine undefined for zero vectors")
    return float(np.clip(float(np.dot(a, b)) / math.sqrt(denom_sq), -1.0, 1.0))


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumerics (underscore counts
    as a separator)."""
    return _TOKEN_RE.findall(text.lower())


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def hash_embed(text: str, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Deterministic bag-of-tokens embedding via signed feature hashing.

    Per token: hash the 8-byte big-endian seed followed by the UTF-8 token
    with FNV-1a-64; the hash modulo ``dim`` picks the bucket and bit 63
    picks the sign. The accumulated vector is L2-normalized.
    """
    if dim < 1:
        raise EmbeddingError("dim must be >= 1")
    tokens = tokenize(text)
    if not tokens:
        raise EmbeddingError("text has no tokens after tokenization")
    seed_bytes = struct.pack(">Q", seed & _U64)
    acc = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        h = fnv1a64(seed_bytes + token.encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        acc[h % dim] += sign
    if not np.any(acc):
        raise EmbeddingError("token signs cancelled to the zero vector")
    return acc / np.linalg.norm(acc)


@dataclass(frozen=True, slots=True)
class ProviderInfo:
    model: str
    dim: int


class EmbeddingStore:
    """Insertion-ordered id -> vector map with one dimension for all."""

    def __init__(self):
        self._vectors: dict[str, np.ndarray] = {}
        self._dim: int | None = None

    @property
    def dim(self) -> int | None:
        return self._dim

    def add(self, id_: str, vector) -> None:
        if not id_:
            raise EmbeddingError("record with empty id")
        if id_ in self._vectors:
            raise EmbeddingError(f"duplicate id {id_!r}")
        v = as_vector(vector, what=f"vector for {id_!r}")
        if self._dim is None:
            self._dim = v.shape[0]
        elif v.shape[0] != self._dim:
            raise EmbeddingError(
                f"record {id_!r} has dim {v.shape[0]}, store has dim {self._dim}"
            )
        v.flags.writeable = False
        self._vectors[id_] = v

    def get(self, id_: str) -> np.ndarray:
        return self._vectors[id_]

    def __contains__(self, id_: str) -> bool:
        return id_ in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> list[str]:
        return list(self._vectors)

    def items(self) -> Iterable[tuple[str, np.ndarray]]:
        return self._vectors.items()


def read_embeddings(stream: IO[str]) -> EmbeddingStore:
    store = EmbeddingStore()
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EmbeddingError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "vector" not in obj:
            raise EmbeddingError(f"line {lineno}: expected an id/vector object")
        try:
            store.add(str(obj["id"]), obj["vector"])
        except EmbeddingError as exc:
            raise EmbeddingError(f"line {lineno}: {exc}") from None
    return store


def write_embeddings(store: EmbeddingStore, stream: IO[str]) -> None:
    for id_, vector in store.items():
        stream.write(
            json.dumps({"id": id_, "vector": vector.tolist()}, ensure_ascii=False)
            + "\n"
        )


class Embedder(Protocol):
    """Anything that turns texts into index-aligned vectors."""

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]: ...

    def info(self) -> ProviderInfo: ...


class HashEmbedder:
    """Built-in deterministic embedder; the test and desk-scale default."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        self.dim = dim
        self.seed = seed

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [hash_embed(t, dim=self.dim, seed=self.seed) for t in texts]

    def info(self) -> ProviderInfo:
        return ProviderInfo(model=f"builtin-hash/d{self.dim}/s{self.seed}", dim=self.dim)


class RemoteEmbedder:
    """Client for the embedding provider protocol.

    Safe for concurrent use: the underlying httpx client is thread-safe and
    no per-request state is kept on the instance.
    """

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self._info: ProviderInfo | None = None

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise EmbeddingError("texts must be non-empty")
        endpoint = f"{self.base_url}/embed"
        try:
            response = self._client.post(endpoint, json={"texts": list(texts)})
        except httpx.HTTPError as exc:
            raise ProtocolError(f"transport failure: {exc}", endpoint=endpoint) from exc
        if response.status_code != 200:
            raise ProtocolError(
                f"status {response.status_code} for {len(texts)} texts",
                endpoint=endpoint,
            )
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolError("response is not JSON", endpoint=endpoint) from exc
        for key in ("model", "dim", "vectors"):
            if key not in payload:
                raise ProtocolError(f"response missing {key!r}", endpoint=endpoint)
        dim = payload["dim"]
        vectors = payload["vectors"]
        if not isinstance(dim, int) or dim < 1:
            raise ProtocolError(f"bad dim {dim!r}", endpoint=endpoint)
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            got = len(vectors) if isinstance(vectors, list) else "non-list"
            raise ProtocolError(
                f"count mismatch: {len(texts)} texts, {got} vectors",
                endpoint=endpoint,
            )
        out = []
        for i, raw in enumerate(vectors):
            try:
                v = as_vector(raw, what=f"vector {i}")
            except EmbeddingError as exc:
                raise ProtocolError(str(exc), endpoint=endpoint) from None
            if v.shape[0] != dim:
                raise ProtocolError(
                    f"dim inconsistency: vector {i} has dim {v.shape[0]}, "
                    f"provider reports {dim}",
                    endpoint=endpoint,
                )
            out.append(v)
        self._info = ProviderInfo(model=str(payload["model"]), dim=dim)
        return out

    def info(self) -> ProviderInfo:
        if self._info is None:
            self.embed_texts(["dimension probe"])
        assert self._info is not None
        return self._info


def make_embedder(
    spec: str,
    *,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
    client: httpx.Client | None = None,
) -> Embedder:
    """``builtin-hash`` or an http(s) provider base URL."""
    if spec == "builtin-hash":
        return HashEmbedder(dim=dim, seed=seed)
    if spec.startswith("http://") or spec.startswith("https://"):
        return RemoteEmbedder(spec, client=client)
    raise EmbeddingError(f"unknown embedder spec {spec!r}")
