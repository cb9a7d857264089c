"""Per-occupation representative vectors: advertisement centroids and the
hybrid job centroids with description fallback.

Centroid sets serialize as an embedding JSONL file plus a sidecar metadata
JSON: ``{"kind": ..., "sources": {esco_id: ...}, "n_ads": {esco_id: ...}}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np

from jobrec.corpus import EscoOccupation
from jobrec.embedding import EmbeddingStore, l2_normalize, read_embeddings, write_embeddings
from jobrec.errors import CentroidError, EmbeddingError

AD_CENTROIDS = "ad_centroids"
JOB_CENTROIDS = "job_centroids"
SOURCE_HYBRID = "hybrid"
SOURCE_DESCRIPTION = "description_only"


@dataclass(frozen=True, slots=True)
class AdCentroid:
    esco_id: str
    vector: np.ndarray
    n_ads: int


@dataclass(frozen=True, slots=True)
class JobCentroid:
    esco_id: str
    vector: np.ndarray
    source: str


def _mean_direction(vectors: Sequence[np.ndarray], *, what: str) -> np.ndarray:
    mean = np.mean(np.vstack(vectors), axis=0)
    try:
        return l2_normalize(mean, what=what)
    except EmbeddingError:
        raise CentroidError(
            f"{what}: members cancel to the zero vector (antipodal inputs?)"
        ) from None


def compute_ad_centroids(
    groups: Mapping[str, Sequence[np.ndarray]],
    *,
    normalize_members: bool = True,
) -> dict[str, AdCentroid]:
    """Mean direction of each occupation's ad embeddings.

    Members are L2-normalized before averaging by default so that long
    documents' magnitudes cannot dominate; raw averaging stays available
    for benchmarking.
    """
    centroids: dict[str, AdCentroid] = {}
    for esco_id, members in groups.items():
        if not members:
            continue
        vectors = (
            [l2_normalize(v, what=f"ad embedding for {esco_id!r}") for v in members]
            if normalize_members
            else [np.asarray(v, dtype=np.float64) for v in members]
        )
        centroids[esco_id] = AdCentroid(
            esco_id=esco_id,
            vector=_mean_direction(vectors, what=f"ad centroid {esco_id!r}"),
            n_ads=len(members),
        )
    return centroids


def compute_job_centroids(
    ad_centroids: Mapping[str, AdCentroid],
    description_embeddings: Mapping[str, np.ndarray],
    occupations: Sequence[EscoOccupation],
) -> dict[str, JobCentroid]:
    """Hybrid of ad centroid and description embedding, falling back to the
    description alone; covers every occupation exactly once."""
    centroids: dict[str, JobCentroid] = {}
    for occ in occupations:
        if occ.esco_id not in description_embeddings:
            raise CentroidError(
                f"missing description embedding for occupation {occ.esco_id!r}"
            )
        desc = l2_normalize(
            description_embeddings[occ.esco_id],
            what=f"description embedding {occ.esco_id!r}",
        )
        ad_centroid = ad_centroids.get(occ.esco_id)
        if ad_centroid is None:
            centroids[occ.esco_id] = JobCentroid(
                esco_id=occ.esco_id, vector=desc, source=SOURCE_DESCRIPTION
            )
        else:
            hybrid = _mean_direction(
                [ad_centroid.vector, desc], what=f"job centroid {occ.esco_id!r}"
            )
            centroids[occ.esco_id] = JobCentroid(
                esco_id=occ.esco_id, vector=hybrid, source=SOURCE_HYBRID
            )
    return centroids


def write_centroids(
    centroids: Mapping[str, AdCentroid] | Mapping[str, JobCentroid],
    kind: str,
    vectors_stream: IO[str],
    meta_stream: IO[str],
    *,
    ad_counts: Mapping[str, int] | None = None,
) -> None:
    """Vectors as an embedding file (sorted by id) plus the sidecar."""
    if kind not in (AD_CENTROIDS, JOB_CENTROIDS):
        raise CentroidError(f"unknown centroid kind {kind!r}")
    store = EmbeddingStore()
    sources: dict[str, str] = {}
    n_ads: dict[str, int] = {}
    for esco_id in sorted(centroids):
        c = centroids[esco_id]
        store.add(esco_id, c.vector)
        if isinstance(c, AdCentroid):
            n_ads[esco_id] = c.n_ads
        else:
            sources[esco_id] = c.source
            if ad_counts and esco_id in ad_counts:
                n_ads[esco_id] = ad_counts[esco_id]
    write_embeddings(store, vectors_stream)
    meta = {"kind": kind, "sources": sources, "n_ads": n_ads}
    meta_stream.write(json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def read_centroids(
    vectors_stream: IO[str], meta_stream: IO[str]
) -> tuple[EmbeddingStore, dict]:
    store = read_embeddings(vectors_stream)
    meta = json.load(meta_stream)
    if not isinstance(meta, dict) or meta.get("kind") not in (AD_CENTROIDS, JOB_CENTROIDS):
        raise CentroidError("sidecar metadata missing a valid 'kind'")
    return store, meta
