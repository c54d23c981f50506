"""Measure values and ratio arithmetic, pinned by hand-computed oracles."""

import numpy as np
import pytest

from bloomemb.metrics import (EvaluationResult, Measure, accuracy,
                              average_precision, mann_whitney_u, ratio_report,
                              reciprocal_rank)


def brute_force_ap(ranked, relevant):
    """Exhaustive oracle: precision@K at every hit, averaged over |relevant|."""
    total = 0.0
    for pos in range(1, len(ranked) + 1):
        if ranked[pos - 1] in relevant:
            top = ranked[:pos]
            total += sum(1 for x in top if x in relevant) / pos
    return total / len(relevant)


class TestAveragePrecision:
    def test_worked_example(self):
        assert average_precision([1, 9, 2, 8], {1, 2}) == pytest.approx(
            (1 / 1 + 2 / 3) / 2)
        assert average_precision([1, 9, 2, 8], {1, 2}) == pytest.approx(
            0.8333, abs=5e-5)

    def test_perfect_ranking(self):
        assert average_precision([3, 1, 7, 2, 9], {3, 1, 7}) == 1.0

    def test_missing_relevant_items_contribute_zero(self):
        assert average_precision([5, 6], {5, 99}) == pytest.approx(0.5)

    def test_against_brute_force_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            d = int(rng.integers(2, 15))
            ranked = list(rng.permutation(d) + 1)[:int(rng.integers(1, d + 1))]
            relevant = set(rng.choice(d, size=rng.integers(1, d + 1),
                                      replace=False) + 1)
            assert average_precision(ranked, relevant) == pytest.approx(
                brute_force_ap(ranked, relevant))

    def test_invariant_to_tail_below_last_relevant(self):
        base = average_precision([4, 1, 3, 2, 5], {4, 3})
        swapped = average_precision([4, 1, 3, 5, 2], {4, 3})
        assert base == swapped

    def test_empty_relevant_rejected(self):
        with pytest.raises(ValueError):
            average_precision([1, 2], set())


class TestReciprocalRank:
    def test_rank_four(self):
        assert reciprocal_rank([7, 3, 9, 5], 5) == 0.25

    def test_rank_one(self):
        assert reciprocal_rank([5, 3], 5) == 1.0

    def test_absent_is_zero(self):
        assert reciprocal_rank([1, 2, 3], 9) == 0.0

    def test_depends_only_on_rank(self):
        assert reciprocal_rank([10, 20, 30], 20) == reciprocal_rank([3, 2, 1], 2)


class TestAccuracy:
    def test_identical(self):
        assert accuracy([1, 0, 2], [1, 0, 2]) == 100.0

    def test_disjoint(self):
        assert accuracy([1, 1], [0, 0]) == 0.0

    def test_half(self):
        assert accuracy([1, 0, 1, 0], [1, 0, 0, 1]) == 50.0

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy([1], [1, 2])
        with pytest.raises(ValueError):
            accuracy([], [])


class TestRatioReport:
    def run(self, score, secs, measure=Measure.MAP):
        return EvaluationResult(score=score, measure=measure, n_evaluated=10,
                                wall_time=secs)

    def test_identity(self):
        base = self.run(0.4, 2.0)
        report = ratio_report(base, base, m=100, d=100)
        assert (report.score_ratio, report.dim_ratio, report.time_ratio) == (1, 1, 1)

    def test_m_equals_d(self):
        report = ratio_report(self.run(0.2, 1.0), self.run(0.4, 2.0), m=50, d=50)
        assert report.dim_ratio == 1.0

    def test_hand_arithmetic(self):
        report = ratio_report(self.run(0.3, 1.5), self.run(0.4, 3.0), m=20, d=80)
        assert report.score_ratio == pytest.approx(0.75)
        assert report.dim_ratio == pytest.approx(0.25)
        assert report.time_ratio == pytest.approx(0.5)

    def test_measure_mismatch(self):
        with pytest.raises(ValueError, match="measure"):
            ratio_report(self.run(0.3, 1.0),
                         self.run(0.4, 1.0, measure=Measure.RR), m=1, d=2)

    def test_zero_baseline(self):
        with pytest.raises(ValueError):
            ratio_report(self.run(0.3, 1.0), self.run(0.0, 1.0), m=1, d=2)

    def test_result_validation(self):
        with pytest.raises(ValueError):
            EvaluationResult(score=1.5, measure=Measure.MAP, n_evaluated=1,
                             wall_time=0.0)
        with pytest.raises(ValueError):
            EvaluationResult(score=105.0, measure=Measure.ACC, n_evaluated=1,
                             wall_time=0.0)


class TestMannWhitney:
    def test_clearly_separated_samples_significant(self):
        res = mann_whitney_u([0.9, 0.92, 0.91, 0.95, 0.93],
                             [0.1, 0.12, 0.11, 0.15, 0.13])
        assert res.significant
        assert res.p_value < 0.05

    def test_same_distribution_not_significant(self):
        rng = np.random.default_rng(3)
        a = rng.normal(0.5, 0.01, size=8)
        res = mann_whitney_u(a, a[::-1])
        assert not res.significant

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])
