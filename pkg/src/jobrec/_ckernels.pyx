# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled top-k similarity scan.

Single pass over the matrix: each row's dot product with the query feeds a
bounded min-heap, so selection is O(n log k) without materializing a full
sort. Ties on score keep the lower row index, matching the fallback's
stable argsort.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline bint _worse(double s_a, Py_ssize_t i_a, double s_b, Py_ssize_t i_b) noexcept:
    # heap order: lowest score first; among equal scores, highest index
    # first, so it is evicted before earlier rows.
    if s_a != s_b:
        return s_a < s_b
    return i_a > i_b


def topk_scan(const double[:, ::1] matrix, const double[::1] query, Py_ssize_t k):
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t dim = matrix.shape[1]
    if query.shape[0] != dim:
        raise ValueError("query dim does not match matrix")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        k = n

    cdef cnp.ndarray[cnp.float64_t, ndim=1] heap_scores = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] heap_idx = np.empty(k, dtype=np.intp)
    cdef double[::1] hs = heap_scores
    cdef Py_ssize_t[::1] hi = heap_idx

    cdef Py_ssize_t size = 0
    cdef Py_ssize_t row, j, pos, parent, child, right
    cdef double score, ts
    cdef Py_ssize_t ti

    for row in range(n):
        score = 0.0
        for j in range(dim):
            score += matrix[row, j] * query[j]

        if size < k:
            # push
            pos = size
            hs[pos] = score
            hi[pos] = row
            size += 1
            while pos > 0:
                parent = (pos - 1) >> 1
                if _worse(hs[pos], hi[pos], hs[parent], hi[parent]):
                    ts = hs[pos]; hs[pos] = hs[parent]; hs[parent] = ts
                    ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
                    pos = parent
                else:
                    break
        elif _worse(hs[0], hi[0], score, row):
            # replace root and sift down
            hs[0] = score
            hi[0] = row
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= k:
                    break
                right = child + 1
                if right < k and _worse(hs[right], hi[right], hs[child], hi[child]):
                    child = right
                if _worse(hs[child], hi[child], hs[pos], hi[pos]):
                    ts = hs[pos]; hs[pos] = hs[child]; hs[child] = ts
                    ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
                    pos = child
                else:
                    break

    order = np.lexsort((heap_idx, -heap_scores))
    return heap_idx[order], heap_scores[order]
