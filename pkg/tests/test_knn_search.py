import math
import os

import numpy as np
import pytest

from nnrank import EmbeddingMatrix, SearchConfig, SourcePool, batch_top_k, top_k
from nnrank.embed_store import ValidationError
from nnrank.knn_search import ShapeError

from conftest import iso_code, make_matrix, make_meta


def brute_force_top_k(query, view, k, normalize=False):
    """Independent oracle: per-row python dot products, full sort.

    Scores use math.fsum over float64 products; order is (-score, row).
    """
    scored = []
    qn = math.sqrt(math.fsum(float(x) * float(x) for x in query))
    for offset, block in view.iter_blocks():
        for j in range(block.shape[0]):
            row = block[j]
            s = math.fsum(float(q) * float(r) for q, r in zip(query, row))
            if normalize:
                rn = math.sqrt(math.fsum(float(x) * float(x) for x in row))
                denom = (qn if qn > 0 else 1.0) * (rn if rn > 0 else 1.0)
                s = s / denom
            scored.append((offset + j, s))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[: min(k, len(scored))]


def random_view(gen, n_datasets, max_rows, dim):
    parts = []
    for i in range(n_datasets):
        rows = int(gen.integers(1, max_rows + 1))
        parts.append((make_matrix(gen, rows, dim), make_meta(f"ds{i:02d}", iso=iso_code(i))))
    return SourcePool.from_parts(parts).filter_view()


class TestTopK:
    def test_hand_example(self, rng):
        a = EmbeddingMatrix(np.array([[1, 0], [0, 1]], dtype=np.float32))
        b = EmbeddingMatrix(np.array([[0.5, 0.5]], dtype=np.float32))
        pool = SourcePool.from_parts([(a, make_meta("A", iso="fra")), (b, make_meta("B", iso="eng"))])
        hits = top_k(np.array([1.0, 0.0]), pool.filter_view(), SearchConfig(k=2))
        assert [(h.dataset_id, h.source_row, h.score) for h in hits] == [("A", 0, 1.0), ("B", 2, 0.5)]

    def test_zero_query_tie_breaks_to_lowest_row(self, rng):
        view = random_view(rng, 3, 4, 6)
        hits = top_k(np.zeros(6), view, SearchConfig(k=1))
        assert hits[0].score == 0.0
        assert hits[0].source_row == 0

    def test_duplicate_rows_tie_by_row_index(self):
        row = np.array([[2.0, 1.0]], dtype=np.float32)
        parts = [
            (EmbeddingMatrix(np.vstack([row, row]).astype(np.float32)), make_meta("A", iso="fra")),
            (EmbeddingMatrix(row.copy()), make_meta("B", iso="eng")),
        ]
        view = SourcePool.from_parts(parts).filter_view()
        hits = top_k(np.array([1.0, 1.0]), view, SearchConfig(k=3))
        assert [h.source_row for h in hits] == [0, 1, 2]
        assert len({h.score for h in hits}) == 1

    def test_k_clamps_to_view_size(self, rng):
        view = random_view(rng, 2, 2, 4)
        hits = top_k(rng.standard_normal(4), view, SearchConfig(k=50))
        assert len(hits) == view.rows

    def test_dim_mismatch(self, rng):
        view = random_view(rng, 2, 3, 4)
        with pytest.raises(ShapeError):
            top_k(rng.standard_normal(5), view, SearchConfig(k=1))

    def test_k_must_be_positive(self):
        with pytest.raises(ValidationError):
            SearchConfig(k=0)

    @pytest.mark.parametrize("k", [1, 5, 17])
    def test_matches_brute_force(self, k):
        gen = np.random.default_rng(k * 101)
        for _ in range(30):
            view = random_view(gen, int(gen.integers(1, 6)), 40, 16)
            query = gen.standard_normal(16).astype(np.float32)
            hits = top_k(query, view, SearchConfig(k=k))
            expect = brute_force_top_k(query, view, k)
            assert [h.source_row for h in hits] == [r for r, _ in expect]
            for h, (_, s) in zip(hits, expect):
                assert h.score == pytest.approx(s, rel=1e-10, abs=1e-12)

    def test_matches_brute_force_at_invariant_bounds(self):
        """Single instance at the documented exactness bounds: N=1000, dim=64."""
        gen = np.random.default_rng(64)
        parts = [
            (make_matrix(gen, 250, 64), make_meta(f"d{i}", iso=iso_code(i))) for i in range(4)
        ]
        view = SourcePool.from_parts(parts).filter_view()
        assert view.rows == 1000
        query = gen.standard_normal(64).astype(np.float32)
        hits = top_k(query, view, SearchConfig(k=17))
        expect = brute_force_top_k(query, view, 17)
        assert [h.source_row for h in hits] == [r for r, _ in expect]

    def test_scores_non_increasing(self, rng):
        view = random_view(rng, 4, 30, 8)
        hits = top_k(rng.standard_normal(8), view, SearchConfig(k=10))
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)

    def test_dataset_ids_match_map_row(self, rng):
        view = random_view(rng, 5, 20, 8)
        hits = top_k(rng.standard_normal(8), view, SearchConfig(k=12))
        for h in hits:
            assert h.dataset_id == view.pool.map_row(h.source_row)


class TestNormalize:
    def test_cosine_invariant_to_row_rescaling(self, rng):
        base = rng.standard_normal((30, 8)).astype(np.float32)
        scales = rng.uniform(0.1, 10.0, size=(30, 1)).astype(np.float32)
        view1 = SourcePool.from_parts([(EmbeddingMatrix(base), make_meta("A"))]).filter_view()
        view2 = SourcePool.from_parts(
            [(EmbeddingMatrix(base * scales), make_meta("A"))]
        ).filter_view()
        q = rng.standard_normal(8)
        h1 = top_k(q, view1, SearchConfig(k=5, normalize=True))
        h2 = top_k(q, view2, SearchConfig(k=5, normalize=True))
        assert [h.source_row for h in h1] == [h.source_row for h in h2]
        for a, b in zip(h1, h2):
            assert a.score == pytest.approx(b.score, rel=1e-6)

    def test_raw_ip_doubling_a_row_raises_its_rank(self, rng):
        base = np.abs(rng.standard_normal((20, 6))).astype(np.float32)
        q = np.abs(rng.standard_normal(6))
        view = SourcePool.from_parts([(EmbeddingMatrix(base), make_meta("A"))]).filter_view()
        before = [h.source_row for h in top_k(q, view, SearchConfig(k=20))]
        target_row = before[10]
        boosted = base.copy()
        boosted[target_row] *= 2.0
        view2 = SourcePool.from_parts([(EmbeddingMatrix(boosted), make_meta("A"))]).filter_view()
        after = [h.source_row for h in top_k(q, view2, SearchConfig(k=20))]
        assert after.index(target_row) <= before.index(target_row)

    def test_normalized_matches_brute_force(self, rng):
        view = random_view(rng, 3, 25, 8)
        q = rng.standard_normal(8).astype(np.float32)
        hits = top_k(q, view, SearchConfig(k=7, normalize=True))
        expect = brute_force_top_k(q, view, 7, normalize=True)
        assert [h.source_row for h in hits] == [r for r, _ in expect]


class TestBatch:
    def test_zero_rows(self, rng):
        view = random_view(rng, 2, 5, 4)
        assert batch_top_k(np.zeros((0, 4), dtype=np.float32), view, SearchConfig()) == []

    def test_single_row_consistent_with_top_k(self, rng):
        view = random_view(rng, 3, 10, 6)
        targets = make_matrix(rng, 1, 6)
        assert batch_top_k(targets, view, SearchConfig(k=4)) == [
            top_k(targets.data[0], view, SearchConfig(k=4))
        ]

    def test_rowwise_equals_sequential(self, rng):
        view = random_view(rng, 6, 50, 16)
        targets = make_matrix(rng, 50, 16)
        batch = batch_top_k(targets, view, SearchConfig(k=5))
        sequential = [top_k(row, view, SearchConfig(k=5)) for row in targets.data]
        assert batch == sequential

    @pytest.mark.parametrize("threads", [2, 4, os.cpu_count() or 4])
    def test_thread_count_invariance(self, rng, threads):
        view = random_view(rng, 4, 40, 12)
        targets = make_matrix(rng, 33, 12)
        base = batch_top_k(targets, view, SearchConfig(k=5), threads=1)
        assert batch_top_k(targets, view, SearchConfig(k=5), threads=threads) == base
