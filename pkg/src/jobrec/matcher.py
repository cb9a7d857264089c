"""Immutable cosine-similarity index over job centroids and exact top-k
recommendation.

Snapshot format (``.cbidx.json``): line 1 is a header object with
``format_version=1, dim, count, metric="cosine", metadata, sha256``; each
following line is one ``{"esco_id": ..., "vector": [...]}`` entry in
esco_id order. Keys are sorted and floats use shortest round-tripping
decimals, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import IO, Mapping

import numpy as np

from jobrec import kernels
from jobrec.embedding import as_vector, l2_normalize
from jobrec.errors import EmbeddingError, IndexFormatError

FORMAT_VERSION = 1
METRIC = "cosine"
UNIT_NORM_TOL = 1e-12
INDEX_SUFFIX = ".cbidx.json"


@dataclass(frozen=True, slots=True)
class Recommendation:
    esco_id: str
    score: float
    rank: int


class Index:
    """Entries sorted by esco_id, all unit-norm; immutable after build."""

    def __init__(self, ids: tuple[str, ...], matrix: np.ndarray, metadata: dict[str, str]):
        self.ids = ids
        self.matrix = matrix
        self.metadata = dict(metadata)
        self.dim = int(matrix.shape[1])
        self._positions = {id_: i for i, id_ in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, esco_id: str) -> bool:
        return esco_id in self._positions

    def vector_for(self, esco_id: str) -> np.ndarray:
        return self.matrix[self._positions[esco_id]]


def build_index(centroids: Mapping[str, object], metadata: Mapping[str, str] | None = None) -> Index:
    """Build from ``esco_id -> vector`` (or anything with a ``.vector``).

    Entries are normalized and sorted by esco_id so identical inputs always
    produce identical snapshots.
    """
    if not centroids:
        raise EmbeddingError("cannot build an index from zero centroids")
    ids = tuple(sorted(centroids))
    rows = []
    dim = None
    for id_ in ids:
        value = centroids[id_]
        vector = getattr(value, "vector", value)
        v = l2_normalize(vector, what=f"centroid {id_!r}")
        if dim is None:
            dim = v.shape[0]
        elif v.shape[0] != dim:
            raise EmbeddingError(
                f"centroid {id_!r} has dim {v.shape[0]}, expected {dim}"
            )
        rows.append(v)
    matrix = np.ascontiguousarray(np.vstack(rows), dtype=np.float64)
    matrix.flags.writeable = False
    return Index(ids, matrix, dict(metadata or {}))


def recommend(index: Index, query, k: int) -> list[Recommendation]:
    """Exact exhaustive top-k by cosine, ties broken by esco_id ascending."""
    if k < 1:
        raise EmbeddingError("k must be >= 1")
    q = as_vector(query, what="query")
    if q.shape[0] != index.dim:
        raise EmbeddingError(
            f"query dim {q.shape[0]} does not match index dim {index.dim}"
        )
    q = l2_normalize(q, what="query")
    idx, scores = kernels.topk_scan(index.matrix, q, k)
    return [
        Recommendation(
            esco_id=index.ids[i],
            score=float(np.clip(s, -1.0, 1.0)),
            rank=rank,
        )
        for rank, (i, s) in enumerate(zip(idx, scores), start=1)
    ]


def _entry_line(esco_id: str, vector: np.ndarray) -> str:
    return (
        json.dumps(
            {"esco_id": esco_id, "vector": vector.tolist()},
            ensure_ascii=False,
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
    )


def save_index(index: Index, stream: IO[str]) -> None:
    entry_lines = [
        _entry_line(id_, index.matrix[i]) for i, id_ in enumerate(index.ids)
    ]
    digest = hashlib.sha256("".join(entry_lines).encode("utf-8")).hexdigest()
    header = {
        "count": len(index.ids),
        "dim": index.dim,
        "format_version": FORMAT_VERSION,
        "metadata": index.metadata,
        "metric": METRIC,
        "sha256": digest,
    }
    stream.write(
        json.dumps(header, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        + "\n"
    )
    for line in entry_lines:
        stream.write(line)


def load_index(stream: IO[str]) -> Index:
    """Strict load: version, shape, order, norms, and checksum all checked."""
    offset = 0
    header_line = stream.readline()
    if not header_line.strip():
        raise IndexFormatError("empty index file", offset=0)
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise IndexFormatError(
            f"header is not valid JSON: {exc.msg}", offset=offset + exc.pos
        ) from exc
    offset += len(header_line.encode("utf-8"))
    if not isinstance(header, dict):
        raise IndexFormatError("header must be a JSON object", offset=0)

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise IndexFormatError(
            f"unsupported format_version {version!r}, expected {FORMAT_VERSION}"
        )
    if header.get("metric") != METRIC:
        raise IndexFormatError(f"unsupported metric {header.get('metric')!r}")
    for key in ("count", "dim", "metadata", "sha256"):
        if key not in header:
            raise IndexFormatError(f"header missing {key!r}")
    count = header["count"]
    dim = header["dim"]
    if not isinstance(count, int) or count < 1:
        raise IndexFormatError(f"bad count {count!r}")
    if not isinstance(dim, int) or dim < 1:
        raise IndexFormatError(f"bad dim {dim!r}")

    ids: list[str] = []
    rows: list[np.ndarray] = []
    hasher = hashlib.sha256()
    for _ in range(count):
        line = stream.readline()
        if not line:
            raise IndexFormatError(
                f"truncated: expected {count} entries, got {len(ids)}",
                offset=offset,
            )
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IndexFormatError(
                f"entry {len(ids)} is not valid JSON: {exc.msg}",
                offset=offset + exc.pos,
            ) from exc
        hasher.update(line.encode("utf-8"))
        offset += len(line.encode("utf-8"))
        if not isinstance(entry, dict) or "esco_id" not in entry or "vector" not in entry:
            raise IndexFormatError(f"entry {len(ids)} must have esco_id and vector")
        esco_id = str(entry["esco_id"])
        try:
            v = as_vector(entry["vector"], what=f"entry {esco_id!r}")
        except EmbeddingError as exc:
            raise IndexFormatError(str(exc)) from None
        if v.shape[0] != dim:
            raise IndexFormatError(
                f"entry {esco_id!r} has dim {v.shape[0]}, header says {dim}"
            )
        if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_NORM_TOL:
            raise IndexFormatError(f"entry {esco_id!r} is not unit-norm")
        if ids and esco_id <= ids[-1]:
            raise IndexFormatError(
                f"entries out of order or duplicated at {esco_id!r}"
            )
        ids.append(esco_id)
        rows.append(v)

    trailing = stream.readline()
    if trailing.strip():
        raise IndexFormatError("trailing data after last entry", offset=offset)
    if hasher.hexdigest() != header["sha256"]:
        raise IndexFormatError("checksum mismatch: entries do not match header")

    metadata = header["metadata"]
    if not isinstance(metadata, dict):
        raise IndexFormatError("metadata must be a JSON object")
    matrix = np.ascontiguousarray(np.vstack(rows), dtype=np.float64)
    matrix.flags.writeable = False
    return Index(tuple(ids), matrix, metadata)
