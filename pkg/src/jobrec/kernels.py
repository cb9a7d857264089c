"""Top-k similarity scan: compiled extension when available, numpy fallback
otherwise.

The scan scores a query against every row of a C-contiguous float64 matrix
(dot products; rows and query are unit vectors, so these are cosines) and
returns the k best entries ordered by score descending, row index ascending
on ties. Both backends honor that ordering exactly.

Set ``JOBREC_PURE=1`` to force the fallback (used by the benchmark and by
tests that compare backends).
"""

from __future__ import annotations

import os

import numpy as np


def _topk_numpy(matrix: np.ndarray, query: np.ndarray, k: int):
    scores = matrix @ query
    order = np.argsort(-scores, kind="stable")[:k]
    return order.astype(np.intp), scores[order]


_ext = None
if not os.environ.get("JOBREC_PURE"):
    try:
        from jobrec import _ckernels as _ext
    except ImportError:
        _ext = None

BACKEND = "compiled" if _ext is not None else "numpy"


def topk_scan(matrix: np.ndarray, query: np.ndarray, k: int):
    """Return ``(indices, scores)`` of the top ``min(k, n)`` rows.

    ``matrix`` must be C-contiguous float64 of shape (n, dim), ``query``
    float64 of shape (dim,), ``k >= 1``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, matrix.shape[0])
    if _ext is not None:
        return _ext.topk_scan(matrix, query, k)
    return _topk_numpy(matrix, query, k)
