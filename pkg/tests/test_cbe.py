"""Co-occurrence counting, thresholding, and collision-steering contracts."""

import logging

import numpy as np
import pytest

from bloomemb.cbe import (CooccurrenceTable, average_item_frequency,
                          cooccurrence_stats, count_cooccurrences,
                          rebuild_hash_matrix, threshold_and_order)
from bloomemb.codec import SparseInstance
from bloomemb.hashing import HashMatrix, build_hash_matrix


def insts(d, *sets):
    return [SparseInstance.from_items(d, s) for s in sets]


class TestCounting:
    def test_hand_counted_example(self):
        table = count_cooccurrences(insts(3, {1, 2}, {1, 2}, {1, 3}))
        assert table.diag.tolist() == [3, 2, 1]
        assert table.count(2, 1) == 2
        assert table.count(3, 1) == 1
        assert table.count(3, 2) == 0
        assert table.count(1, 2) == 2  # symmetric access

    def test_single_item_instances_have_no_pairs(self):
        table = count_cooccurrences(insts(5, {1}, {3}, {5}, {3}))
        assert len(table.values) == 0
        assert table.diag.tolist() == [1, 0, 2, 0, 1]

    def test_against_dense_matrix_product_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            x = (rng.random((50, 20)) < 0.15).astype(np.int64)
            instances = [SparseInstance.from_items(20, np.flatnonzero(row) + 1)
                         for row in x]
            table = count_cooccurrences(instances)
            dense = x.T @ x
            assert np.array_equal(np.diag(dense), table.diag)
            got = np.zeros((20, 20), dtype=np.int64)
            got[table.rows - 1, table.cols - 1] = table.values
            expected = np.tril(dense, k=-1)
            assert np.array_equal(got, expected)

    def test_mixed_dimensionalities_rejected(self):
        bad = [SparseInstance.from_items(3, {1}), SparseInstance.from_items(4, {1})]
        with pytest.raises(ValueError, match="mixed"):
            count_cooccurrences(bad)

    def test_coordinates_are_strict_lower_triangle(self):
        table = count_cooccurrences(insts(6, {1, 2, 3}, {2, 3, 6}))
        assert (table.rows > table.cols).all()


class TestThreshold:
    def test_hand_example_average_frequency(self):
        table = count_cooccurrences(insts(3, {1, 2}, {1, 2}, {1, 2}, {3}))
        assert average_item_frequency(table) == pytest.approx(7 / 3)
        pairs = threshold_and_order(table)
        assert pairs.tolist() == [[2, 1]]

    def test_all_below_threshold_gives_empty(self):
        # every pair count is 1, average frequency is 2 > 1
        table = count_cooccurrences(insts(4, {1, 2}, {3, 4}, {1, 3}, {2, 4}))
        assert threshold_and_order(table).shape == (0, 2)

    def test_sorted_ascending_by_count_then_coordinates(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            nnz = int(rng.integers(1, 30))
            rows = rng.integers(2, 40, size=nnz).astype(np.int32)
            cols = (rows - rng.integers(1, rows)).astype(np.int32)
            values = rng.integers(1, 10, size=nnz).astype(np.int64)
            table = CooccurrenceTable(d=40, diag=np.ones(40, dtype=np.int64),
                                      values=values, rows=rows, cols=cols)
            pairs = threshold_and_order(table)
            kept = values > average_item_frequency(table)
            triples = sorted((int(v), int(r), int(c))
                             for v, r, c in zip(values[kept], rows[kept], cols[kept]))
            assert pairs.tolist() == [[r, c] for _, r, c in triples]


class TestRebuild:
    def test_empty_pair_list_is_identity(self):
        matrix = build_hash_matrix(d=10, m=6, k=2, seed=3)
        rebuilt = rebuild_hash_matrix(matrix, np.empty((0, 2), dtype=np.int32), 9)
        assert rebuilt == matrix

    def test_processed_pair_shares_a_bit(self):
        matrix = build_hash_matrix(d=10, m=8, k=2, seed=3)
        rebuilt = rebuild_hash_matrix(matrix, [(5, 2)], seed=1)
        assert set(rebuilt.rows[4]) & set(rebuilt.rows[1])

    def test_threshold_example_end_to_end(self):
        # running the full pipeline on the hand example makes items 1 and 2
        # collide on a shared bit
        table = count_cooccurrences(insts(3, {1, 2}, {1, 2}, {1, 2}, {3}))
        pairs = threshold_and_order(table)
        matrix = build_hash_matrix(d=3, m=3, k=1, seed=0)
        rebuilt = rebuild_hash_matrix(matrix, pairs, seed=42)
        assert set(rebuilt.rows[0]) & set(rebuilt.rows[1])

    def test_rows_stay_distinct_and_in_range(self):
        rng = np.random.default_rng(8)
        matrix = build_hash_matrix(d=30, m=10, k=4, seed=5)
        pairs = [(int(a), int(b)) for a, b in
                 zip(rng.integers(2, 31, 40), rng.integers(1, 2, 40))]
        pairs = [(a, b) for a, b in pairs if a != b]
        rebuilt = rebuild_hash_matrix(matrix, pairs, seed=6)
        srt = np.sort(rebuilt.rows, axis=1)
        assert (srt[:, 1:] > srt[:, :-1]).all()
        assert rebuilt.rows.min() >= 1 and rebuilt.rows.max() <= 10

    def test_deterministic_given_seed(self):
        matrix = build_hash_matrix(d=20, m=9, k=3, seed=2)
        pairs = [(5, 1), (7, 2), (5, 2)]
        a = rebuild_hash_matrix(matrix, pairs, seed=33)
        b = rebuild_hash_matrix(matrix, pairs, seed=33)
        assert a == b
        c = rebuild_hash_matrix(matrix, pairs, seed=34)
        assert not np.array_equal(a.rows, c.rows)

    def test_exhausted_bits_skip_and_log(self, caplog):
        # m=2, k=2: the two rows jointly cover every bit, no admissible r
        matrix = HashMatrix(d=3, m=2, k=2, seed=0,
                            rows=np.array([[1, 2], [2, 1], [1, 2]],
                                          dtype=np.int32))
        with caplog.at_level(logging.WARNING, logger="bloomemb.cbe"):
            rebuilt = rebuild_hash_matrix(matrix, [(2, 1)], seed=0)
        assert rebuilt == matrix
        assert any("skipped" in rec.message for rec in caplog.records)

    def test_rejects_bad_pairs(self):
        matrix = build_hash_matrix(d=5, m=4, k=2, seed=0)
        with pytest.raises(ValueError):
            rebuild_hash_matrix(matrix, [(6, 1)], seed=0)
        with pytest.raises(ValueError):
            rebuild_hash_matrix(matrix, [(2, 2)], seed=0)


class TestStats:
    def test_no_cooccurring_pairs(self):
        table = count_cooccurrences(insts(4, {1}, {2}))
        stats = cooccurrence_stats(table, n=2)
        assert stats.percent_cooccurring_pairs == 0.0
        assert stats.mean_ratio_rho == 0.0

    def test_hand_example(self):
        # 3 items, one co-occurring pair with count 2, n=4
        table = count_cooccurrences(insts(3, {1, 2}, {1, 2}, {1}, {3}))
        stats = cooccurrence_stats(table, n=4)
        assert stats.percent_cooccurring_pairs == pytest.approx(100 / 3)
        assert stats.mean_ratio_rho == pytest.approx(0.5)

    def test_percent_bounded_randomized(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            x = (rng.random((15, 8)) < 0.5).astype(int)
            instances = [SparseInstance.from_items(8, np.flatnonzero(r) + 1)
                         for r in x]
            stats = cooccurrence_stats(count_cooccurrences(instances), n=15)
            assert 0.0 <= stats.percent_cooccurring_pairs <= 100.0
            assert stats.mean_ratio_rho >= 0.0

    def test_needs_two_items(self):
        table = count_cooccurrences(insts(1, {1}))
        with pytest.raises(ValueError):
            cooccurrence_stats(table, n=1)
