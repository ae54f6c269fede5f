"""Block-Jacobi preconditioner built from truncated Jacobi sweeps.

The preconditioner approximates the inverse of the block-diagonal part of
A. Applying it runs k outer passes; each pass corrects the current z with
an inner solve on the block diagonal, and that inner solve is itself t
Jacobi sweeps per block (all blocks swept simultaneously). With k = t = 1
the whole thing collapses to plain diagonal (point-Jacobi) scaling, and
apply(r) returns exactly r_i / a_ii bit for bit.

Every operation inside apply() runs in the preconditioner's storage
precision: converting A's values once at setup is what makes a float32
instance genuinely cheaper, and also what makes it rougher.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .sparse import (
    Precision,
    PrecisionMismatchError,
    SparseMatrix,
    convert_precision,
)


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous row blocks given by ascending offsets (first 0, last n)."""

    offsets: np.ndarray

    def __post_init__(self):
        offs = np.ascontiguousarray(self.offsets, dtype=np.int64)
        object.__setattr__(self, "offsets", offs)
        if offs.ndim != 1 or offs.size < 2:
            raise ValueError("partition needs at least one block")
        if offs[0] != 0:
            raise ValueError("partition must start at row 0")
        if np.any(np.diff(offs) <= 0):
            raise ValueError("partition offsets must be strictly increasing")

    @classmethod
    def equal_split(cls, n: int, nb: int) -> "BlockPartition":
        """nb contiguous blocks whose sizes differ by at most one."""
        if nb < 1:
            raise ValueError("need at least one block")
        if nb > n:
            raise ValueError(f"cannot split {n} rows into {nb} blocks")
        base, rem = divmod(n, nb)
        sizes = np.full(nb, base, dtype=np.int64)
        sizes[:rem] += 1
        offsets = np.zeros(nb + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        return cls(offsets)

    @property
    def num_blocks(self) -> int:
        return self.offsets.size - 1

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def block_range(self, b: int) -> tuple[int, int]:
        if not 0 <= b < self.num_blocks:
            raise IndexError(f"block {b} out of range")
        return int(self.offsets[b]), int(self.offsets[b + 1])

    def block_of_rows(self) -> np.ndarray:
        """Block id of every row, length n."""
        return np.searchsorted(self.offsets, np.arange(self.n),
                               side="right") - 1


@dataclass(eq=False)
class BjacPreconditioner:
    """Frozen result of setup(); apply and inner_apply do the work."""

    partition: BlockPartition
    k: int
    t: int
    precision: Precision
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    diag: np.ndarray
    in_block: np.ndarray

    @property
    def n(self) -> int:
        return self.partition.n

    def _check_vector(self, r):
        r = np.asarray(r)
        if r.shape != (self.n,):
            raise ValueError(f"vector has shape {r.shape}, expected ({self.n},)")
        if r.dtype != self.precision.dtype:
            raise PrecisionMismatchError(
                f"apply: vector is {r.dtype}, preconditioner stores "
                f"{self.precision.dtype}")
        return r

    def inner_apply(self, b: int, r_b: np.ndarray) -> np.ndarray:
        """t Jacobi sweeps on block b alone; r_b is the block-local residual."""
        start, end = self.partition.block_range(b)
        r_b = np.asarray(r_b)
        if r_b.shape != (end - start,):
            raise ValueError(f"block {b} has {end - start} rows, "
                             f"got vector of shape {r_b.shape}")
        if r_b.dtype != self.precision.dtype:
            raise PrecisionMismatchError(
                f"inner_apply: vector is {r_b.dtype}, preconditioner stores "
                f"{self.precision.dtype}")
        dt = self.precision.dtype
        r_full = np.zeros(self.n, dtype=dt)
        r_full[start:end] = r_b
        y = np.zeros(self.n, dtype=dt)
        tmp = np.zeros(self.n, dtype=dt)
        backend.kernels.block_jacobi_sweeps(
            self.row_ptr, self.col_idx, self.values, self.in_block,
            self.diag, self.t, r_full, y, tmp, start, end)
        return y[start:end].copy()

    def apply(self, r: np.ndarray) -> np.ndarray:
        """z approximating (block diag A)^{-1} r, all in storage precision."""
        r = self._check_vector(r)
        dt = self.precision.dtype
        z = np.empty(self.n, dtype=dt)
        tmp = np.empty(self.n, dtype=dt)
        # first outer pass: the residual of z=0 is r itself
        backend.kernels.block_jacobi_sweeps(
            self.row_ptr, self.col_idx, self.values, self.in_block,
            self.diag, self.t, r, z, tmp, 0, self.n)
        if self.k == 1:
            return z
        az = np.empty(self.n, dtype=dt)
        w = np.empty(self.n, dtype=dt)
        for _ in range(self.k - 1):
            backend.kernels.csr_matvec(self.row_ptr, self.col_idx,
                                       self.values, z, az)
            resid = r - az
            backend.kernels.block_jacobi_sweeps(
                self.row_ptr, self.col_idx, self.values, self.in_block,
                self.diag, self.t, resid, w, tmp, 0, self.n)
            z = z + w
        return z


def setup(A: SparseMatrix, nb: int = 32, k: int = 2, t: int = 2,
          precision: Precision = Precision.F64,
          partition: BlockPartition | None = None) -> BjacPreconditioner:
    """Build a block-Jacobi preconditioner for square A.

    A's values are converted to the requested precision once, here; apply
    never touches the original matrix. Narrowing that overflows raises,
    and a diagonal entry that is zero, missing, or underflows to zero in
    the target precision is an error naming the row.
    """
    if A.n != A.m:
        raise ValueError(f"matrix is {A.n}x{A.m}, preconditioner needs square")
    if partition is None:
        partition = BlockPartition.equal_split(A.n, nb)
    elif partition.n != A.n:
        raise ValueError(f"partition covers {partition.n} rows, matrix has {A.n}")
    if k < 1 or t < 1:
        raise ValueError("sweep counts k and t must be at least 1")

    have = A.has_diagonal()
    if not np.all(have):
        raise ValueError(
            f"row {int(np.flatnonzero(~have)[0])} has no stored diagonal entry")
    values = convert_precision(A.values, precision)
    rows = np.repeat(np.arange(A.n), np.diff(A.row_ptr))
    diag_pos = np.flatnonzero(rows == A.col_idx)
    diag = values[diag_pos].copy()
    zero = np.flatnonzero(diag == 0)
    if zero.size:
        row = int(zero[0])
        if A.values[diag_pos[row]] != 0:
            raise ValueError(f"diagonal of row {row} underflows to zero "
                             f"in {precision}")
        raise ValueError(f"zero diagonal entry at row {row}")

    blk = partition.block_of_rows()
    in_block = blk[rows] == blk[A.col_idx]
    return BjacPreconditioner(partition, int(k), int(t), precision,
                              A.row_ptr, A.col_idx, values, diag, in_block)
