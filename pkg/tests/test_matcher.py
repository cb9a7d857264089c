import io

import numpy as np
import pytest

from jobrec import kernels
from jobrec.errors import EmbeddingError, IndexFormatError
from jobrec.kernels import _topk_numpy
from jobrec.matcher import (
    Recommendation,
    build_index,
    load_index,
    recommend,
    save_index,
)


def brute_force_topk(ids, matrix, query, k):
    """Oracle: score every entry, sort by (score desc, esco_id asc), cut."""
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    scored = [(float(np.dot(row, q)), id_) for id_, row in zip(ids, matrix)]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return scored[:k]


def unit_rows(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def make_index(rng, n=20, dim=8, metadata=None):
    rows = unit_rows(rng, n, dim)
    centroids = {f"occ{i:04d}": rows[i] for i in range(n)}
    return build_index(centroids, metadata or {"embedder": "test", "kind": "job_centroids"})


class TestKernels:
    def test_backends_agree(self):
        rng = np.random.default_rng(11)
        matrix = np.ascontiguousarray(unit_rows(rng, 64, 16))
        query = unit_rows(rng, 1, 16)[0]
        for k in (1, 5, 64):
            fast_idx, fast_scores = kernels.topk_scan(matrix, query, k)
            slow_idx, slow_scores = _topk_numpy(matrix, query, k)
            assert fast_idx.tolist() == slow_idx.tolist()
            assert np.max(np.abs(fast_scores - slow_scores)) <= 1e-12

    def test_tie_break_prefers_lower_index(self):
        row = np.array([1.0, 0.0])
        matrix = np.ascontiguousarray([row, [0.0, 1.0], row, row])
        idx, scores = kernels.topk_scan(matrix, row.copy(), 2)
        assert idx.tolist() == [0, 2]
        assert scores.tolist() == [1.0, 1.0]

    def test_k_larger_than_n(self):
        matrix = np.ascontiguousarray([[1.0, 0.0], [0.0, 1.0]])
        idx, _ = kernels.topk_scan(matrix, np.array([1.0, 0.0]), 10)
        assert len(idx) == 2


class TestRecommend:
    def test_exact_match_rank_one(self):
        rng = np.random.default_rng(0)
        index = make_index(rng)
        query = index.vector_for("occ0007")
        result = recommend(index, query, 1)
        assert result[0].esco_id == "occ0007"
        assert result[0].score == pytest.approx(1.0, abs=1e-12)
        assert result[0].rank == 1

    def test_k_exceeds_entries(self):
        rng = np.random.default_rng(1)
        index = make_index(rng, n=5)
        result = recommend(index, index.matrix[0], 50)
        assert len(result) == 5
        assert [r.rank for r in result] == [1, 2, 3, 4, 5]

    def test_identical_scores_tie_break_by_id(self):
        v = np.array([1.0, 0.0])
        index = build_index({"b": v, "a": v, "c": [0.0, 1.0]}, {})
        result = recommend(index, v, 2)
        assert [r.esco_id for r in result] == ["a", "b"]

    def test_scores_non_increasing_ranks_consecutive(self):
        rng = np.random.default_rng(2)
        index = make_index(rng, n=30)
        result = recommend(index, unit_rows(rng, 1, 8)[0], 30)
        scores = [r.score for r in result]
        assert scores == sorted(scores, reverse=True)
        assert [r.rank for r in result] == list(range(1, 31))

    def test_oracle_equivalence_randomized(self):
        rng = np.random.default_rng(42)
        for trial in range(50):
            n = int(rng.integers(1, 40))
            dim = int(rng.integers(2, 12))
            index = make_index(rng, n=n, dim=dim)
            query = rng.standard_normal(dim)
            k = int(rng.integers(1, n + 5))
            expected = brute_force_topk(index.ids, index.matrix, query, k)
            actual = recommend(index, query, k)
            assert [r.esco_id for r in actual] == [id_ for _, id_ in expected]
            for r, (score, _) in zip(actual, expected):
                assert abs(r.score - score) <= 1e-12

    def test_query_scaling_invariance(self):
        rng = np.random.default_rng(3)
        index = make_index(rng, n=25)
        query = rng.standard_normal(8)
        base = recommend(index, query, 10)
        scaled = recommend(index, query * 37.5, 10)
        assert [r.esco_id for r in base] == [r.esco_id for r in scaled]
        for x, y in zip(base, scaled):
            assert abs(x.score - y.score) <= 1e-12

    def test_dim_mismatch(self):
        rng = np.random.default_rng(4)
        index = make_index(rng, dim=8)
        with pytest.raises(EmbeddingError, match="dim"):
            recommend(index, np.ones(4), 5)

    def test_zero_query(self):
        rng = np.random.default_rng(5)
        index = make_index(rng)
        with pytest.raises(EmbeddingError, match="zero"):
            recommend(index, np.zeros(8), 5)

    def test_k_must_be_positive(self):
        rng = np.random.default_rng(6)
        index = make_index(rng)
        with pytest.raises(EmbeddingError, match="k"):
            recommend(index, np.ones(8), 0)


class TestBuildIndex:
    def test_canonical_id_order(self):
        v1, v2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        index = build_index({"zeta": v1, "alpha": v2, "mid": v1}, {})
        assert index.ids == ("alpha", "mid", "zeta")

    def test_empty_rejected(self):
        with pytest.raises(EmbeddingError, match="zero centroids"):
            build_index({}, {})

    def test_mixed_dims_rejected(self):
        with pytest.raises(EmbeddingError, match="dim"):
            build_index({"a": [1.0, 0.0], "b": [1.0, 0.0, 0.0]}, {})

    def test_entries_unit_norm(self):
        index = build_index({"a": [3.0, 4.0]}, {})
        assert np.linalg.norm(index.matrix[0]) == pytest.approx(1.0, abs=1e-12)


class TestSnapshot:
    def _index(self):
        rng = np.random.default_rng(7)
        return make_index(
            rng, n=9, dim=5, metadata={"embedder": "builtin-hash/d5/s0", "kind": "job_centroids", "built_at": ""}
        )

    def test_round_trip_structural(self):
        index = self._index()
        buf = io.StringIO()
        save_index(index, buf)
        again = load_index(io.StringIO(buf.getvalue()))
        assert again.ids == index.ids
        assert again.metadata == index.metadata
        assert np.array_equal(again.matrix, index.matrix)

    def test_save_load_save_byte_identical(self):
        index = self._index()
        first = io.StringIO()
        save_index(index, first)
        second = io.StringIO()
        save_index(load_index(io.StringIO(first.getvalue())), second)
        assert first.getvalue() == second.getvalue()

    def test_rebuild_is_byte_identical(self):
        rng1 = np.random.default_rng(8)
        rng2 = np.random.default_rng(8)
        a, b = io.StringIO(), io.StringIO()
        save_index(make_index(rng1), a)
        save_index(make_index(rng2), b)
        assert a.getvalue() == b.getvalue()

    def test_version_mismatch_rejected(self):
        index = self._index()
        buf = io.StringIO()
        save_index(index, buf)
        text = buf.getvalue().replace('"format_version":1', '"format_version":2')
        with pytest.raises(IndexFormatError, match="format_version"):
            load_index(io.StringIO(text))

    def test_truncated_file_reports_offset(self):
        index = self._index()
        buf = io.StringIO()
        save_index(index, buf)
        text = buf.getvalue()
        truncated = text[: int(len(text) * 0.6)]
        with pytest.raises(IndexFormatError, match="offset"):
            load_index(io.StringIO(truncated))

    def test_checksum_violation_rejected(self):
        index = self._index()
        buf = io.StringIO()
        save_index(index, buf)
        lines = buf.getvalue().splitlines(keepends=True)
        # swap two entry lines: same bytes overall per line, wrong order
        lines[1], lines[2] = lines[2], lines[1]
        with pytest.raises(IndexFormatError, match="order|checksum"):
            load_index(io.StringIO("".join(lines)))

    def test_corrupted_values_rejected(self):
        index = self._index()
        buf = io.StringIO()
        save_index(index, buf)
        text = buf.getvalue()
        # tamper with one digit inside an entry vector
        head, _, tail = text.partition("\n")
        tampered = head + "\n" + tail.replace("0.1", "0.2", 1)
        with pytest.raises(IndexFormatError):
            load_index(io.StringIO(tampered))

    def test_empty_file_rejected(self):
        with pytest.raises(IndexFormatError, match="empty"):
            load_index(io.StringIO(""))
