"""Numba-jitted kernels for CSR matrices and dense vectors.

All reductions are strict left-to-right sequential sums in the operand
dtype, so results are bit-reproducible run to run and float32 inputs are
accumulated in float32. ``fastmath`` stays off for the same reason.

The pure-numpy fallback in :mod:`mpcg.kernels_numpy` exposes the same
signatures; :mod:`mpcg.backend` picks one at import time.
"""
import numba as nb
import numpy as np

_jit = {"nogil": True, "cache": True}

reduction_mode = "sequential"


@nb.njit(**_jit)
def dot_seq(x, y):
    """Dot product with sequential accumulation in the operand dtype."""
    acc = np.zeros(1, x.dtype)[0]
    for i in range(x.size):
        acc += x[i] * y[i]
    return acc


@nb.njit(**_jit)
def norm_sq_f64(x):
    """Sum of squares, each element widened to float64 before squaring."""
    acc = 0.0
    for i in range(x.size):
        v = np.float64(x[i])
        acc += v * v
    return acc


@nb.njit(**_jit)
def csr_matvec(row_ptr, col_idx, values, x, out):
    """out = A @ x for CSR data, row-sequential accumulation."""
    zero = np.zeros(1, values.dtype)[0]
    for i in range(out.size):
        acc = zero
        for jj in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[jj] * x[col_idx[jj]]
        out[i] = acc


@nb.njit(**_jit)
def block_jacobi_sweeps(row_ptr, col_idx, values, in_block, diag, t,
                        r, y, tmp, row_start, row_end):
    """Run t simultaneous Jacobi sweeps restricted to diagonal blocks.

    Entries with ``in_block[jj]`` False are ignored, so each row only sees
    columns inside its own block. Sweep 0 writes y = r / diag exactly; later
    sweeps do y += (r - A_b y) / diag with A_b y evaluated before any y of
    the current sweep is updated. Divides by the stored diagonal rather
    than multiplying by a cached reciprocal.
    """
    zero = np.zeros(1, values.dtype)[0]
    for i in range(row_start, row_end):
        y[i] = r[i] / diag[i]
    for _ in range(t - 1):
        for i in range(row_start, row_end):
            acc = zero
            for jj in range(row_ptr[i], row_ptr[i + 1]):
                if in_block[jj]:
                    acc += values[jj] * y[col_idx[jj]]
            tmp[i] = acc
        for i in range(row_start, row_end):
            y[i] = y[i] + (r[i] - tmp[i]) / diag[i]


@nb.njit(**_jit)
def fill_stencil(n, fxm, fxp, fym, fyp, fzm, fzp, inv_h2, row_ptr,
                 col_idx, values):
    """Fill CSR arrays for the 7-point stencil from per-node face arrays.

    Node (i, j, k) maps to p = i + j*n + k*n*n. Columns come out ascending.
    The diagonal is the six faces summed left to right in the fixed order
    xm, xp, ym, yp, zm, zp, then scaled; off-diagonals are -(face * inv_h2).
    The numpy fallback reproduces both orderings bit for bit.
    """
    nn = n * n
    for k in range(n):
        for j in range(n):
            for i in range(n):
                p = i + j * n + k * nn
                jj = row_ptr[p]
                if k > 0:
                    col_idx[jj] = p - nn
                    values[jj] = -(fzm[p] * inv_h2)
                    jj += 1
                if j > 0:
                    col_idx[jj] = p - n
                    values[jj] = -(fym[p] * inv_h2)
                    jj += 1
                if i > 0:
                    col_idx[jj] = p - 1
                    values[jj] = -(fxm[p] * inv_h2)
                    jj += 1
                col_idx[jj] = p
                values[jj] = (((((fxm[p] + fxp[p]) + fym[p]) + fyp[p])
                               + fzm[p]) + fzp[p]) * inv_h2
                jj += 1
                if i < n - 1:
                    col_idx[jj] = p + 1
                    values[jj] = -(fxp[p] * inv_h2)
                    jj += 1
                if j < n - 1:
                    col_idx[jj] = p + n
                    values[jj] = -(fyp[p] * inv_h2)
                    jj += 1
                if k < n - 1:
                    col_idx[jj] = p + nn
                    values[jj] = -(fzp[p] * inv_h2)
