"""Co-occurrence-steered hash collisions.

Frequently co-occurring item pairs are redirected to share an embedding
bit: pairs whose co-occurrence count exceeds the average item frequency
are processed in ascending count order, and for each pair a fresh bit
(outside both rows) replaces one randomly chosen projection of each
member. Because the highest-count pairs are processed last, their shared
bits survive any overlap with earlier pairs.

Counting is exact: C[a][b] is the number of instances containing both a
and b, and the diagonal holds per-item frequencies. The table is kept in
strict-lower-triangle coordinate form (count, row, col) with row > col.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import SparseInstance
from .hashing import HashMatrix
from .rng import MASK64, SplitMix64

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CooccurrenceTable:
    """Sparse symmetric pairwise counts in coordinate form (row > col)."""

    d: int
    diag: np.ndarray    # (d,) int64 per-item frequencies
    values: np.ndarray  # (nnz,) int64 pair counts, > 0
    rows: np.ndarray    # (nnz,) int32 1-based, rows > cols
    cols: np.ndarray

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.diag.shape != (self.d,):
            raise ValueError("diagonal length must equal d")
        if not (len(self.values) == len(self.rows) == len(self.cols)):
            raise ValueError("coordinate lists must have equal length")
        if len(self.rows) and not (self.rows > self.cols).all():
            raise ValueError("coordinates must lie in the strict lower triangle")

    def count(self, a: int, b: int) -> int:
        """C[a][b] for any a, b (symmetric; diagonal = item frequency)."""
        if a == b:
            return int(self.diag[a - 1])
        hi, lo = max(a, b), min(a, b)
        match = (self.rows == hi) & (self.cols == lo)
        idx = np.flatnonzero(match)
        return int(self.values[idx[0]]) if idx.size else 0


@dataclass(frozen=True)
class CooccurrenceStats:
    percent_cooccurring_pairs: float
    mean_ratio_rho: float


def count_cooccurrences(instances: Sequence[SparseInstance]) -> CooccurrenceTable:
    """Exact pairwise co-occurrence counts over a list of instances."""
    if not instances:
        raise ValueError("need at least one instance")
    d = instances[0].d
    for inst in instances:
        if inst.d != d:
            raise ValueError(f"mixed dimensionalities: {inst.d} != {d}")
    diag = np.zeros(d, dtype=np.int64)
    codes = []
    for inst in instances:
        pos = inst.positions.astype(np.int64)
        diag[pos - 1] += 1
        if pos.size >= 2:
            lo, hi = np.triu_indices(pos.size, k=1)
            # positions are sorted ascending, so pos[hi] > pos[lo]
            codes.append(pos[hi] * (d + 1) + pos[lo])
    if codes:
        uniq, counts = np.unique(np.concatenate(codes), return_counts=True)
        rows = (uniq // (d + 1)).astype(np.int32)
        cols = (uniq % (d + 1)).astype(np.int32)
        values = counts.astype(np.int64)
    else:
        rows = np.empty(0, dtype=np.int32)
        cols = np.empty(0, dtype=np.int32)
        values = np.empty(0, dtype=np.int64)
    return CooccurrenceTable(d=d, diag=diag, values=values, rows=rows, cols=cols)


def average_item_frequency(table: CooccurrenceTable) -> float:
    """Mean per-item frequency: total active positions divided by d."""
    return float(table.diag.sum()) / table.d


def threshold_and_order(table: CooccurrenceTable) -> np.ndarray:
    """Pairs with count strictly above the average item frequency, sorted
    by ascending count (ties by ascending (row, col)); shape (n_pairs, 2)."""
    avg = average_item_frequency(table)
    keep = table.values > avg
    values = table.values[keep]
    rows = table.rows[keep]
    cols = table.cols[keep]
    order = np.lexsort((cols, rows, values))
    return np.stack([rows[order], cols[order]], axis=1).astype(np.int32)


def rebuild_hash_matrix(matrix: HashMatrix, pairs: np.ndarray,
                        seed: int) -> HashMatrix:
    """Redirect each pair (a, b), in order, to collide on a fresh shared bit.

    For every pair a bit r is drawn uniformly from {1..m} minus the union
    of both rows, then one slot of each row (uniform over {1..k}) is set to
    r. Draw order per pair is fixed (r, then slot of a, then slot of b) so
    the result is deterministic given (matrix, pairs, seed). Pairs whose
    rows jointly cover all m bits are skipped with a warning.
    """
    rows = matrix.rows.copy()
    m, k = matrix.m, matrix.k
    stream = SplitMix64(seed & MASK64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    mask = np.ones(m + 1, dtype=bool)  # mask[idx] — is bit idx admissible
    for a, b in pairs:
        if not (1 <= a <= matrix.d and 1 <= b <= matrix.d):
            raise ValueError(f"pair member out of range [1, {matrix.d}]: ({a}, {b})")
        if a == b:
            raise ValueError(f"pair must join two distinct items, got ({a}, {b})")
        row_a = rows[a - 1]
        row_b = rows[b - 1]
        mask[row_a] = False
        mask[row_b] = False
        candidates = np.flatnonzero(mask[1:]) + 1
        mask[row_a] = True
        mask[row_b] = True
        if candidates.size == 0:
            logger.warning("pair (%d, %d) skipped: rows cover all %d bits", a, b, m)
            continue
        r = int(candidates[stream.randbelow(candidates.size)])
        j_a = stream.randbelow(k)
        j_b = stream.randbelow(k)
        rows[a - 1, j_a] = r
        rows[b - 1, j_b] = r
    return HashMatrix(d=matrix.d, m=m, k=k, seed=matrix.seed, rows=rows)


def cooccurrence_stats(table: CooccurrenceTable, n: int) -> CooccurrenceStats:
    """Percentage of co-occurring pairs and their mean count/n ratio."""
    if n < 1:
        raise ValueError(f"instance count n must be >= 1, got {n}")
    if table.d < 2:
        raise ValueError("statistics need at least 2 items")
    total_pairs = table.d * (table.d - 1) // 2
    positive = table.values > 0
    n_co = int(positive.sum())
    percent = 100.0 * n_co / total_pairs
    rho = float((table.values[positive] / n).mean()) if n_co else 0.0
    return CooccurrenceStats(percent_cooccurring_pairs=percent, mean_ratio_rho=rho)


def stats_report_tsv(input_stats: CooccurrenceStats,
                     output_stats: CooccurrenceStats | None) -> str:
    lines = ["side\tpercent_cooccurring_pairs\tmean_ratio_rho"]
    lines.append(f"input\t{input_stats.percent_cooccurring_pairs:.6g}"
                 f"\t{input_stats.mean_ratio_rho:.6g}")
    if output_stats is not None:
        lines.append(f"output\t{output_stats.percent_cooccurring_pairs:.6g}"
                     f"\t{output_stats.mean_ratio_rho:.6g}")
    return "\n".join(lines) + "\n"
