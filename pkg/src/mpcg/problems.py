"""Generators for 3-D diffusion test systems on the unit cube.

A 7-point finite-difference stencil is assembled over n interior points per
axis (h = 1/(n+1), Dirichlet boundaries eliminated). Node (i, j, k) maps to
row p = i + j*n + k*n*n, so x is the fastest axis. Face coefficients are
harmonic means of the two adjacent nodal coefficients; a face on the
boundary just takes the interior node's value. Harmonic means are computed
with a commutative operation order, so assembled matrices are symmetric
bit for bit, not merely up to roundoff.

Coefficient families:

- const: kappa = 1 everywhere.
- ani(s): kappa = 1 with axis weights (1, s, s) multiplying the face
  coefficients, i.e. y/z couplings are s times stronger.
- dis(s): kappa = s inside the closed cube [0.25, 0.75]^3 of node
  coordinates ((i+1)h, ...), 1 outside.
- rand(s, seed): kappa = s**delta per node with delta drawn from a
  SplitMix64 stream, so fields are reproducible across platforms.

All four reduce to const bit for bit at s = 1.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import backend
from .sparse import SparseMatrix

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """First `count` uniforms in [0, 1) of the SplitMix64 stream for seed.

    Element i mixes state seed + (i+1)*gamma (mod 2^64); the top 53 bits
    of the mixed state become the mantissa. Pure integer arithmetic, so
    the stream is identical on every platform and backend.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & _U64_MASK) + idx * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


class Family(enum.Enum):
    """Coefficient family of a diffusion problem."""

    CONST = "const"
    ANI = "ani"
    DIS = "dis"
    RAND = "rand"

    @classmethod
    def parse(cls, name: str) -> "Family":
        try:
            return cls(name.strip().lower())
        except ValueError:
            options = ", ".join(f.value for f in cls)
            raise ValueError(f"unknown family {name!r}, expected one of "
                             f"{options}") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class GridSpec:
    """Interior grid of n points per axis on the unit cube."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid needs at least one interior point per axis")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def num_nodes(self) -> int:
        return self.n ** 3

    @property
    def num_nonzeros(self) -> int:
        return 7 * self.n ** 3 - 6 * self.n ** 2

    def node_index(self, i: int, j: int, k: int) -> int:
        return i + j * self.n + k * self.n * self.n


@dataclass(frozen=True)
class CoefficientField:
    """Family plus its strength s and, for rand, the stream seed."""

    family: Family
    s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (self.s > 0):
            raise ValueError("coefficient strength s must be positive")

    def axis_weights(self):
        if self.family is Family.ANI:
            return (1.0, float(self.s), float(self.s))
        return (1.0, 1.0, 1.0)

    def label(self) -> str:
        if self.family is Family.CONST:
            return "const"
        if self.family is Family.RAND:
            return f"rand(s={self.s:g},seed={self.seed})"
        return f"{self.family.value}(s={self.s:g})"


def kappa_field(grid: GridSpec, field: CoefficientField) -> np.ndarray:
    """Nodal coefficient values in node order (length n^3, float64)."""
    n = grid.n
    if field.family in (Family.CONST, Family.ANI):
        return np.ones(grid.num_nodes)
    if field.family is Family.DIS:
        coord = (np.arange(n) + 1.0) * grid.h
        inside = (coord >= 0.25) & (coord <= 0.75)
        mask = (inside[None, None, :] & inside[None, :, None]
                & inside[:, None, None])
        return np.where(mask, float(field.s), 1.0).ravel()
    delta = splitmix64_stream(field.seed, grid.num_nodes)
    return np.power(float(field.s), delta)


def _harmonic(a, b):
    # (2*a)*b / (a+b): every step is symmetric in (a, b) at the bit level
    return 2.0 * a * b / (a + b)


def face_coefficient(field: CoefficientField, axis: int, kappa_a: float,
                     kappa_b: float | None = None) -> float:
    """Face coefficient between two nodes, or at a boundary if kappa_b is None."""
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0 (x), 1 (y) or 2 (z)")
    w = field.axis_weights()[axis]
    if kappa_b is None:
        return float(w * np.float64(kappa_a))
    return float(w * _harmonic(np.float64(kappa_a), np.float64(kappa_b)))


def _face_arrays(n, kap3, weights):
    """Six per-node face-coefficient arrays (xm, xp, ym, yp, zm, zp).

    Interior faces are computed once and written to both neighbors, which
    makes the assembled matrix exactly symmetric by construction.
    """
    out = []
    for axis, w in ((2, weights[0]), (1, weights[1]), (0, weights[2])):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[axis] = 0
        last[axis] = -1
        interior = w * _harmonic(kap3[tuple(lo)], kap3[tuple(hi)])
        fm = np.empty_like(kap3)
        fp = np.empty_like(kap3)
        fm[tuple(hi)] = interior
        fm[tuple(first)] = w * kap3[tuple(first)]
        fp[tuple(lo)] = interior
        fp[tuple(last)] = w * kap3[tuple(last)]
        out.append(fm.ravel())
        out.append(fp.ravel())
    return out


def build_matrix(grid: GridSpec, field: CoefficientField) -> SparseMatrix:
    """Assemble the 7-point diffusion matrix for the given field."""
    n = grid.n
    num = grid.num_nodes
    # kap3[k, j, i]: C order puts i fastest, matching p = i + j*n + k*n*n
    kap3 = kappa_field(grid, field).reshape(n, n, n)
    fxm, fxp, fym, fyp, fzm, fzp = _face_arrays(n, kap3, field.axis_weights())

    p = np.arange(num, dtype=np.int64)
    i = p % n
    j = (p // n) % n
    k = p // (n * n)
    counts = (1 + (i > 0) + (i < n - 1) + (j > 0) + (j < n - 1)
              + (k > 0) + (k < n - 1))
    row_ptr = np.zeros(num + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])

    nnz = int(row_ptr[-1])
    col_idx = np.empty(nnz, dtype=np.int32)
    values = np.empty(nnz, dtype=np.float64)
    inv_h2 = float((n + 1) ** 2)
    backend.kernels.fill_stencil(n, fxm, fxp, fym, fyp, fzm, fzp, inv_h2,
                                 row_ptr, col_idx, values)
    return SparseMatrix(num, num, row_ptr, col_idx, values)


def build_rhs(grid: GridSpec, kind: str = "ones", seed: int = 0) -> np.ndarray:
    """Right-hand side: all ones, or SplitMix64 uniforms in [0, 1)."""
    if kind == "ones":
        return np.ones(grid.num_nodes)
    if kind == "random":
        return splitmix64_stream(seed, grid.num_nodes)
    raise ValueError(f"unknown rhs kind {kind!r}, expected 'ones' or 'random'")


@dataclass(frozen=True)
class DiscreteSystem:
    """Assembled matrix, right-hand side, and how they were produced."""

    A: SparseMatrix
    b: np.ndarray
    grid: GridSpec
    field: CoefficientField
    rhs_kind: str = "ones"
    rhs_seed: int = 0
    p_diag: float = 0.0

    def meta(self) -> dict:
        return {
            "n": self.grid.n,
            "num_nodes": self.grid.num_nodes,
            "nnz": self.A.nnz,
            "family": self.field.family.value,
            "s": self.field.s,
            "seed": self.field.seed,
            "rhs": self.rhs_kind,
            "rhs_seed": self.rhs_seed,
            "p_diag": self.p_diag,
        }


def build_diffusion_system(grid: GridSpec, field: CoefficientField,
                           rhs_kind: str = "ones", rhs_seed: int = 0,
                           p_diag: float = 0.0) -> DiscreteSystem:
    """Assemble matrix and rhs; p_diag > 0 also applies diag_augment."""
    A = build_matrix(grid, field)
    if p_diag != 0.0:
        A = diag_augment(A, p_diag)
    b = build_rhs(grid, rhs_kind, rhs_seed)
    return DiscreteSystem(A, b, grid, field, rhs_kind, rhs_seed, float(p_diag))


def diag_augment(A: SparseMatrix, p_diag: float) -> SparseMatrix:
    """Add p_diag times each row's absolute sum to its diagonal entry.

    a_ii += p_diag * sum_j |a_ij| with the diagonal included in the sum.
    p_diag = 0 returns a bitwise-identical copy. Rows must all carry a
    stored diagonal entry.
    """
    if p_diag < 0:
        raise ValueError("p_diag must be nonnegative")
    rows = np.repeat(np.arange(A.n), np.diff(A.row_ptr))
    diag_pos = np.flatnonzero(rows == A.col_idx)
    if diag_pos.size != A.n:
        have = np.zeros(A.n, dtype=bool)
        have[rows[diag_pos]] = True
        missing = int(np.flatnonzero(~have)[0])
        raise ValueError(f"row {missing} has no stored diagonal entry")
    abs_sums = np.zeros(A.n, dtype=A.values.dtype)
    nonempty = np.flatnonzero(np.diff(A.row_ptr) > 0)
    abs_sums[nonempty] = np.add.reduceat(np.abs(A.values),
                                         A.row_ptr[nonempty])
    values = A.values.copy()
    values[diag_pos] = values[diag_pos] + A.values.dtype.type(p_diag) * abs_sums
    return SparseMatrix(A.n, A.m, A.row_ptr, A.col_idx, values)
