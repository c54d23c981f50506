"""Ranking/classification measures and relative-comparison ratios.

Scores are compared across runs in relative terms: score ratio S_i/S_0
against a no-embedding baseline, dimensionality ratio m/d, and time ratio
T_i/T_0. A Mann-Whitney U utility is included for deciding whether two
sets of repeated-run scores differ significantly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as _scipy_stats


class Measure(enum.Enum):
    MAP = "MAP"
    RR = "RR"
    ACC = "Acc"


@dataclass(frozen=True)
class EvaluationResult:
    score: float
    measure: Measure
    n_evaluated: int
    wall_time: float

    def __post_init__(self):
        if self.measure in (Measure.MAP, Measure.RR) and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"{self.measure.value} must lie in [0, 1], got {self.score}")
        if self.measure is Measure.ACC and not 0.0 <= self.score <= 100.0:
            raise ValueError(f"Acc must lie in [0, 100], got {self.score}")
        if self.wall_time < 0:
            raise ValueError("wall_time must be >= 0")


@dataclass(frozen=True)
class RatioReport:
    score_ratio: float
    dim_ratio: float
    time_ratio: float


def average_precision(ranked: Sequence[int], relevant: set[int]) -> float:
    """Mean, over relevant items, of the precision at each one's rank.

    Relevant items missing from `ranked` contribute 0, so a truncated
    ranking can only lower the value.
    """
    if not relevant:
        raise ValueError("relevant set must be nonempty")
    hits = 0
    total = 0.0
    for position, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
            total += hits / position
    return total / len(relevant)


def reciprocal_rank(ranked: Sequence[int], correct: int) -> float:
    """1/rank of `correct`, or 0 when it is absent from the list."""
    for position, item in enumerate(ranked, start=1):
        if item == correct:
            return 1.0 / position
    return 0.0


def accuracy(predicted: Sequence, truth: Sequence) -> float:
    """Percentage of positions where the two label sequences agree."""
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} != {len(truth)}")
    if len(predicted) == 0:
        raise ValueError("cannot compute accuracy of empty inputs")
    matches = sum(1 for p, t in zip(predicted, truth) if p == t)
    return 100.0 * matches / len(predicted)


def ratio_report(run: EvaluationResult, baseline: EvaluationResult,
                 m: int, d: int) -> RatioReport:
    """Componentwise ratios of a run against the no-embedding baseline."""
    if run.measure is not baseline.measure:
        raise ValueError(
            f"measure mismatch: {run.measure.value} vs {baseline.measure.value}")
    if baseline.score <= 0:
        raise ValueError("baseline score must be positive")
    if baseline.wall_time <= 0:
        raise ValueError("baseline wall time must be positive")
    return RatioReport(score_ratio=run.score / baseline.score,
                       dim_ratio=m / d,
                       time_ratio=run.wall_time / baseline.wall_time)


@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float
    p_value: float
    significant: bool


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float],
                   alpha: float = 0.05) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test over repeated-run score samples."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    res = _scipy_stats.mannwhitneyu(a, b, alternative="two-sided")
    return MannWhitneyResult(u_statistic=float(res.statistic),
                             p_value=float(res.pvalue),
                             significant=bool(res.pvalue <= alpha))
