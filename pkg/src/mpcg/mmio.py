"""Matrix Market coordinate I/O for real general/symmetric matrices.

Reading accepts the coordinate format with a real field and general or
symmetric symmetry, 1-based indices, '%' comment lines, and Fortran 'D'
exponents. Symmetric files are expanded (each off-diagonal entry mirrored)
and duplicate entries are summed. Everything else in the format zoo
(array format, complex/integer/pattern fields, hermitian/skew symmetry)
is rejected with a MatrixMarketError.

Writing always emits coordinate real general with entries in row-major
order and values formatted by repr(), i.e. the shortest decimal string
that round-trips the exact float64.
"""
from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix

_BANNER = "%%MatrixMarket"


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market content."""


def _parse_value(token, lineno):
    try:
        return float(token)
    except ValueError:
        try:
            return float(token.lower().replace("d", "e"))
        except ValueError:
            raise MatrixMarketError(
                f"line {lineno}: bad numeric value {token!r}") from None


def mm_read(path) -> SparseMatrix:
    """Read a Matrix Market file into a float64 SparseMatrix."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        header = fh.readline()
        if not header.startswith(_BANNER):
            raise MatrixMarketError("missing %%MatrixMarket banner")
        parts = header.split()
        if len(parts) != 5:
            raise MatrixMarketError(f"banner has {len(parts)} fields, expected 5")
        _, obj, fmt, field, symmetry = (p.lower() for p in parts)
        if obj != "matrix":
            raise MatrixMarketError(f"unsupported object {obj!r}")
        if fmt != "coordinate":
            raise MatrixMarketError(f"unsupported format {fmt!r}, "
                                    "only coordinate is handled")
        if field != "real":
            raise MatrixMarketError(f"unsupported field {field!r}, "
                                    "only real is handled")
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {symmetry!r}")

        lineno = 1
        size_line = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise MatrixMarketError("missing size line")
        toks = size_line.split()
        if len(toks) != 3:
            raise MatrixMarketError(
                f"line {lineno}: size line needs 'rows cols nnz'")
        try:
            n, m, nnz = (int(t) for t in toks)
        except ValueError:
            raise MatrixMarketError(
                f"line {lineno}: non-integer size field") from None
        if n < 0 or m < 0 or nnz < 0:
            raise MatrixMarketError(f"line {lineno}: negative size field")
        if symmetry == "symmetric" and n != m:
            raise MatrixMarketError("symmetric matrix must be square")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        got = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            if got >= nnz:
                raise MatrixMarketError(
                    f"line {lineno}: more entries than the declared {nnz}")
            toks = stripped.split()
            if len(toks) != 3:
                raise MatrixMarketError(
                    f"line {lineno}: entry needs 'row col value'")
            try:
                i, j = int(toks[0]), int(toks[1])
            except ValueError:
                raise MatrixMarketError(
                    f"line {lineno}: non-integer index") from None
            if not (1 <= i <= n and 1 <= j <= m):
                raise MatrixMarketError(
                    f"line {lineno}: index ({i}, {j}) outside {n}x{m}")
            rows[got] = i - 1
            cols[got] = j - 1
            vals[got] = _parse_value(toks[2], lineno)
            got += 1
        if got != nnz:
            raise MatrixMarketError(
                f"file declares {nnz} entries but contains {got}")

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return SparseMatrix.from_coo(n, m, rows, cols, vals)


def mm_write(A: SparseMatrix, path, comment=None) -> None:
    """Write a SparseMatrix as coordinate real general, 1-based indices."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{_BANNER} matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.n} {A.m} {A.nnz}\n")
        rows = np.repeat(np.arange(A.n), np.diff(A.row_ptr))
        # chunked writes keep large matrices from crawling
        step = 1 << 20
        for lo in range(0, A.nnz, step):
            hi = min(lo + step, A.nnz)
            chunk = [
                f"{i + 1} {j + 1} {v!r}\n"
                for i, j, v in zip(rows[lo:hi].tolist(),
                                   A.col_idx[lo:hi].tolist(),
                                   A.values[lo:hi].astype(np.float64).tolist())
            ]
            fh.writelines(chunk)
