"""Precision-tagged CSR matrices and the dense kernels that act on them.

Every matrix and vector carries an explicit storage precision (float64 or
float32). Mixed-precision operations never happen implicitly: operands must
match, and crossing precisions requires an explicit convert_precision call.
Narrowing conversions round to nearest-even; a finite value that narrows to
infinity raises instead of silently overflowing.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import backend


class PrecisionMismatchError(ValueError):
    """Operands of a kernel carry different storage precisions."""


class NarrowingOverflowError(ValueError):
    """A finite value overflowed to infinity during narrowing."""


class Precision(enum.Enum):
    """Storage precision of matrix values or vector entries."""

    F64 = "f64"
    F32 = "f32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self is Precision.F64 else np.float32)

    @classmethod
    def of(cls, arr) -> "Precision":
        dt = np.asarray(arr).dtype
        if dt == np.float64:
            return cls.F64
        if dt == np.float32:
            return cls.F32
        raise TypeError(f"unsupported dtype {dt}, expected float64 or float32")

    def __str__(self) -> str:
        return self.value


def _check_same_precision(op, *arrays):
    dtypes = {a.dtype for a in arrays}
    if len(dtypes) > 1:
        names = ", ".join(sorted(str(d) for d in dtypes))
        raise PrecisionMismatchError(f"{op}: operands mix precisions ({names})")
    if arrays[0].dtype not in (np.float64, np.float32):
        raise TypeError(f"{op}: unsupported dtype {arrays[0].dtype}")


@dataclass(eq=False)
class SparseMatrix:
    """Square-or-rectangular CSR matrix with explicit value precision.

    row_ptr is int64 of length n+1, col_idx int32, values float64 or
    float32. Within each row, columns are strictly ascending (so there are
    no duplicate entries). Explicit zeros are allowed and kept.
    """

    n: int
    m: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int32)
        self.values = np.ascontiguousarray(self.values)
        self.validate()

    def validate(self):
        """Raise ValueError on any structural invariant violation."""
        if self.n < 0 or self.m < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if self.values.dtype not in (np.float64, np.float32):
            raise ValueError(
                f"values dtype {self.values.dtype} not float64/float32")
        if self.row_ptr.shape != (self.n + 1,):
            raise ValueError(
                f"row_ptr has length {self.row_ptr.size}, expected {self.n + 1}")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != self.col_idx.size:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if self.col_idx.shape != self.values.shape:
            raise ValueError("col_idx and values lengths differ")
        if self.col_idx.size:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.m:
                raise ValueError("column index out of range")
            # ascending-within-row check without a python loop: a descent
            # is only legal exactly at a row boundary
            descent = np.flatnonzero(np.diff(self.col_idx) <= 0) + 1
            if not np.all(np.isin(descent, self.row_ptr[1:-1])):
                raise ValueError(
                    "columns must be strictly ascending within each row")

    @property
    def nnz(self) -> int:
        return int(self.col_idx.size)

    @property
    def precision(self) -> Precision:
        return Precision.of(self.values)

    @property
    def shape(self):
        return (self.n, self.m)

    @classmethod
    def from_coo(cls, n, m, rows, cols, vals, dtype=np.float64) -> "SparseMatrix":
        """Build from triplets; duplicates are summed, rows come out sorted.

        Duplicate entries are summed in their (row, col, input-order)
        sequence, which np.add.reduceat applies left to right.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=dtype)
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols, vals lengths differ")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= m:
                raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            first = np.ones(rows.size, dtype=bool)
            first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(first)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return cls(n, m, row_ptr, cols.astype(np.int32), vals)

    def diagonal(self) -> np.ndarray:
        """Stored diagonal entries; rows without one get 0."""
        d = np.zeros(self.n, dtype=self.values.dtype)
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        hit = rows == self.col_idx
        d[rows[hit]] = self.values[hit]
        return d

    def has_diagonal(self) -> np.ndarray:
        """Boolean per row: does a stored a_ii exist."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        out = np.zeros(self.n, dtype=bool)
        out[rows[rows == self.col_idx]] = True
        return out

    def toarray(self) -> np.ndarray:
        """Dense copy, for small matrices in tests and diagnostics."""
        a = np.zeros((self.n, self.m), dtype=self.values.dtype)
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        a[rows, self.col_idx] = self.values
        return a

    def copy(self) -> "SparseMatrix":
        return SparseMatrix(self.n, self.m, self.row_ptr.copy(),
                            self.col_idx.copy(), self.values.copy())


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A @ x. A and x must share one precision; y comes back in it."""
    x = np.asarray(x)
    _check_same_precision("spmv", A.values, x)
    if x.shape != (A.m,):
        raise ValueError(f"x has shape {x.shape}, expected ({A.m},)")
    out = np.empty(A.n, dtype=A.values.dtype)
    backend.kernels.csr_matvec(A.row_ptr, A.col_idx, A.values, x, out)
    return out


def dot(x: np.ndarray, y: np.ndarray) -> float:
    """Sum of x_i * y_i accumulated in the operand precision."""
    x, y = np.asarray(x), np.asarray(y)
    _check_same_precision("dot", x, y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("dot needs two equal-length vectors")
    return float(backend.kernels.dot_seq(x, y))


def norm2(x: np.ndarray) -> float:
    """Euclidean norm, accumulated in float64 regardless of x's precision."""
    x = np.asarray(x)
    _check_same_precision("norm2", x)
    return float(np.sqrt(backend.kernels.norm_sq_f64(x)))


def _convert_values(values: np.ndarray, target: Precision, what: str) -> np.ndarray:
    if values.dtype == target.dtype:
        return values.copy()
    with np.errstate(over="ignore"):
        out = values.astype(target.dtype)
    if target is Precision.F32:
        bad = np.isinf(out) & np.isfinite(values)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise NarrowingOverflowError(
                f"{what}: {int(bad.sum())} finite value(s) overflow float32, "
                f"first at index {k} ({values[k]!r})")
    return out


def convert_precision(obj, target: Precision):
    """Copy a vector or SparseMatrix into the target precision.

    Widening is exact; narrowing rounds to nearest-even and raises
    NarrowingOverflowError if any finite value lands on infinity.
    Same-precision conversion returns a bitwise-identical copy.
    """
    if isinstance(obj, SparseMatrix):
        vals = _convert_values(obj.values, target, "matrix values")
        return SparseMatrix(obj.n, obj.m, obj.row_ptr, obj.col_idx, vals)
    arr = np.asarray(obj)
    if arr.dtype not in (np.float64, np.float32):
        raise TypeError(f"unsupported dtype {arr.dtype}")
    return _convert_values(arr, target, "vector")
