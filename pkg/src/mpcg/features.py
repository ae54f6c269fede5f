"""Row-wise structural features: multiscale strength, dominance, signs.

The multiscale strength of a row is max|a_ij| / min|a_ij| over its stored
nonzero off-diagonal entries. Rows with no such entry (diagonal-only rows,
empty rows, rows whose off-diagonals are all explicit zeros) have no
defined strength and are tracked separately rather than binned. A row with
exactly one qualifying entry has strength 1 by construction.

Histogram bins are lower-inclusive: a value equal to an edge lands in the
bin starting there, and the last bin is unbounded above.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix

#: decade bins 1, 10, ..., 1e16; the last bin is [1e16, inf)
DECADE_EDGES = tuple(10.0 ** e for e in range(17))

#: finer low-range bins for mildly multiscale matrices
SMALL_RATIO_EDGES = (1.0, 2.0, 4.0, 10.0, 100.0, 1000.0)


def _entry_rows(A: SparseMatrix) -> np.ndarray:
    return np.repeat(np.arange(A.n), np.diff(A.row_ptr))


def _reduce_rows(values, row_ptr, fill, ufunc):
    """Per-row ufunc.reduceat with empty rows replaced by fill."""
    n = row_ptr.size - 1
    out = np.full(n, fill)
    nonempty = np.flatnonzero(row_ptr[:-1] != row_ptr[1:])
    if nonempty.size:
        out[nonempty] = ufunc.reduceat(values, row_ptr[nonempty])
    return out


def multiscale_profile(A: SparseMatrix):
    """Per-row strengths: (tau, defined) with tau = nan where undefined."""
    if A.n == 0:
        raise ValueError("matrix has no rows")
    rows = _entry_rows(A)
    absv = np.abs(A.values).astype(np.float64)
    qual = (rows != A.col_idx) & (A.values != 0)
    hi = np.where(qual, absv, -np.inf)
    lo = np.where(qual, absv, np.inf)
    row_max = _reduce_rows(hi, A.row_ptr, -np.inf, np.maximum)
    row_min = _reduce_rows(lo, A.row_ptr, np.inf, np.minimum)
    defined = np.isfinite(row_max)
    tau = np.full(A.n, np.nan)
    tau[defined] = row_max[defined] / row_min[defined]
    return tau, defined


def row_multiscale(A: SparseMatrix, i: int) -> float | None:
    """Strength of row i alone, or None if it has no qualifying entry."""
    if not 0 <= i < A.n:
        raise IndexError(f"row {i} out of range for {A.n} rows")
    lo, hi = int(A.row_ptr[i]), int(A.row_ptr[i + 1])
    cols = A.col_idx[lo:hi]
    vals = A.values[lo:hi]
    mask = (cols != i) & (vals != 0)
    if not mask.any():
        return None
    a = np.abs(vals[mask]).astype(np.float64)
    return float(a.max() / a.min())


@dataclass(frozen=True)
class MultiscaleHistogram:
    """Counts of rows per strength bin plus the undefined remainder."""

    edges: tuple
    counts: tuple
    undefined_count: int
    total_rows: int

    def percentages(self) -> tuple:
        return tuple(100.0 * c / self.total_rows for c in self.counts)

    def to_rows(self) -> list:
        """(low, high, count, percent) per bin; the last high is inf."""
        highs = list(self.edges[1:]) + [np.inf]
        out = []
        for low, high, count, pct in zip(self.edges, highs, self.counts,
                                         self.percentages()):
            out.append((low, high, count, pct))
        return out


def multiscale_histogram(A: SparseMatrix,
                         edges=DECADE_EDGES) -> MultiscaleHistogram:
    """Bin row strengths into lower-inclusive bins given by edges."""
    edges = tuple(float(e) for e in edges)
    if len(edges) < 1:
        raise ValueError("need at least one bin edge")
    arr = np.asarray(edges)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bin edges must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ValueError("bin edges must be strictly ascending")
    if edges[0] > 1.0:
        raise ValueError("first bin edge must not exceed 1, the smallest "
                         "possible strength")
    tau, defined = multiscale_profile(A)
    idx = np.searchsorted(arr, tau[defined], side="right") - 1
    counts = np.bincount(idx, minlength=len(edges))
    return MultiscaleHistogram(edges, tuple(int(c) for c in counts),
                               int((~defined).sum()), A.n)


@dataclass(frozen=True)
class DominanceStats:
    """Diagonal dominance |a_ii| / sum_{j!=i} |a_ij| across rows."""

    dominance_min: float
    dominance_median: float
    dominance_max: float
    fraction_dominant: float
    row_sum_min: float
    row_sum_max: float


def dominance_stats(A: SparseMatrix) -> DominanceStats:
    """Row dominance ratios and signed row-sum range.

    Rows without off-diagonal mass get dominance infinity, including the
    degenerate all-zero row.
    """
    if A.n == 0:
        raise ValueError("matrix has no rows")
    rows = _entry_rows(A)
    absv = np.abs(A.values).astype(np.float64)
    off = np.where(rows != A.col_idx, absv, 0.0)
    off_sums = _reduce_rows(off, A.row_ptr, 0.0, np.add)
    diag = np.abs(A.diagonal().astype(np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        dom = np.where(off_sums == 0.0, np.inf, diag / off_sums)
    row_sums = _reduce_rows(A.values.astype(np.float64), A.row_ptr, 0.0,
                            np.add)
    return DominanceStats(
        dominance_min=float(dom.min()),
        dominance_median=float(np.median(dom)),
        dominance_max=float(dom.max()),
        fraction_dominant=float(np.mean(dom > 1.0)),
        row_sum_min=float(row_sums.min()),
        row_sum_max=float(row_sums.max()),
    )


@dataclass(frozen=True)
class SignCheckReport:
    """M-matrix sign diagnostics with up to 10 samples per violation kind."""

    diag_positive: bool
    offdiag_nonpositive: bool
    row_sums_nonnegative: bool
    diag_samples: tuple
    offdiag_samples: tuple
    row_sum_samples: tuple

    @property
    def all_pass(self) -> bool:
        return (self.diag_positive and self.offdiag_nonpositive
                and self.row_sums_nonnegative)


def m_matrix_sign_check(A: SparseMatrix,
                        row_sum_rel_tol: float = 0.0) -> SignCheckReport:
    """Check the sign pattern of an M-matrix candidate.

    Positive diagonal (missing counts as a violation), nonpositive
    off-diagonals, and nonnegative row sums. Row sums may be allowed a
    small negative slack of row_sum_rel_tol times the row's absolute sum,
    for matrices whose exact-zero row sums only survive to roundoff.
    """
    if A.n == 0:
        raise ValueError("matrix has no rows")
    if row_sum_rel_tol < 0:
        raise ValueError("row_sum_rel_tol must be nonnegative")
    rows = _entry_rows(A)

    diag = A.diagonal().astype(np.float64)
    bad_diag = np.flatnonzero(~(diag > 0))
    diag_samples = tuple((int(i), float(diag[i])) for i in bad_diag[:10])

    is_off = rows != A.col_idx
    bad_off = np.flatnonzero(is_off & (A.values > 0))
    offdiag_samples = tuple(
        (int(rows[p]), int(A.col_idx[p]), float(A.values[p]))
        for p in bad_off[:10])

    vals64 = A.values.astype(np.float64)
    row_sums = _reduce_rows(vals64, A.row_ptr, 0.0, np.add)
    abs_sums = _reduce_rows(np.abs(vals64), A.row_ptr, 0.0, np.add)
    slack = row_sum_rel_tol * abs_sums
    bad_sum = np.flatnonzero(row_sums < -slack)
    row_sum_samples = tuple(
        (int(i), float(row_sums[i])) for i in bad_sum[:10])

    return SignCheckReport(
        diag_positive=bad_diag.size == 0,
        offdiag_nonpositive=bad_off.size == 0,
        row_sums_nonnegative=bad_sum.size == 0,
        diag_samples=diag_samples,
        offdiag_samples=offdiag_samples,
        row_sum_samples=row_sum_samples,
    )
