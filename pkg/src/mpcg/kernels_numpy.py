"""Pure-numpy fallback kernels, signature-compatible with kernels_numba.

Reductions here use numpy's deterministic pairwise trees instead of strict
sequential order: same inputs give the same bits on every run, but the bits
differ from the numba backend's sequential sums. float32 dots still
accumulate in float32 (np.dot keeps the operand dtype).
"""
import numpy as np

reduction_mode = "pairwise"


def dot_seq(x, y):
    return np.dot(x, y)


def norm_sq_f64(x):
    xd = x if x.dtype == np.float64 else x.astype(np.float64)
    return float(np.dot(xd, xd))


def _reduce_rows(prod, local_ptr, out):
    """Segment sums of prod into out; empty segments get 0.

    reduceat is fed only the starts of nonempty rows. Any empty rows
    between two nonempty ones have start == end, so the following
    nonempty start already equals the previous row's end.
    """
    out[:] = 0
    nonempty = np.flatnonzero(local_ptr[:-1] != local_ptr[1:])
    if nonempty.size:
        out[nonempty] = np.add.reduceat(prod, local_ptr[nonempty])


def csr_matvec(row_ptr, col_idx, values, x, out):
    prod = values * x[col_idx]
    _reduce_rows(prod, row_ptr, out)


def block_jacobi_sweeps(row_ptr, col_idx, values, in_block, diag, t,
                        r, y, tmp, row_start, row_end):
    rs, re = row_start, row_end
    y[rs:re] = r[rs:re] / diag[rs:re]
    if t <= 1:
        return
    lo, hi = row_ptr[rs], row_ptr[re]
    vals = np.where(in_block[lo:hi], values[lo:hi], values.dtype.type(0))
    cols = col_idx[lo:hi]
    local_ptr = row_ptr[rs:re + 1] - lo
    seg = tmp[rs:re]
    for _ in range(t - 1):
        prod = vals * y[cols]
        _reduce_rows(prod, local_ptr, seg)
        y[rs:re] += (r[rs:re] - seg) / diag[rs:re]


def fill_stencil(n, fxm, fxp, fym, fyp, fzm, fzp, inv_h2, row_ptr,
                 col_idx, values):
    nn = n * n
    p = np.arange(n ** 3, dtype=np.int64)
    i = p % n
    j = (p // n) % n
    k = p // nn

    has_zm = k > 0
    has_ym = j > 0
    has_xm = i > 0
    has_xp = i < n - 1
    has_yp = j < n - 1
    has_zp = k < n - 1

    base = row_ptr[:-1]
    pos_zm = base
    pos_ym = pos_zm + has_zm
    pos_xm = pos_ym + has_ym
    pos_d = pos_xm + has_xm
    pos_xp = pos_d + 1
    pos_yp = pos_xp + has_xp
    pos_zp = pos_yp + has_yp

    col_idx[pos_d] = p
    values[pos_d] = (((((fxm + fxp) + fym) + fyp) + fzm) + fzp) * inv_h2
    for has, pos, shift, face in (
        (has_zm, pos_zm, -nn, fzm),
        (has_ym, pos_ym, -n, fym),
        (has_xm, pos_xm, -1, fxm),
        (has_xp, pos_xp, 1, fxp),
        (has_yp, pos_yp, n, fyp),
        (has_zp, pos_zp, nn, fzp),
    ):
        col_idx[pos[has]] = p[has] + shift
        values[pos[has]] = -(face[has] * inv_h2)
