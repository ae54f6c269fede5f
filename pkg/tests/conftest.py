import numpy as np
import pytest

import mpcg.backend
from mpcg import SparseMatrix


@pytest.fixture(params=["numba", "numpy"])
def any_backend(request, monkeypatch):
    """Run the test once per kernel backend."""
    if request.param == "numba":
        from mpcg import kernels_numba as mod
    else:
        from mpcg import kernels_numpy as mod
    monkeypatch.setattr(mpcg.backend, "kernels", mod)
    monkeypatch.setattr(mpcg.backend, "name", request.param)
    return request.param


def dense_to_csr(a, dtype=np.float64):
    """Build a SparseMatrix from a dense array, dropping exact zeros."""
    a = np.asarray(a, dtype=dtype)
    rows, cols = np.nonzero(a)
    return SparseMatrix.from_coo(a.shape[0], a.shape[1], rows, cols,
                                 a[rows, cols], dtype=dtype)


def random_spd_csr(n, density, rng, dtype=np.float64):
    """Random symmetric diagonally dominant CSR matrix (hence SPD)."""
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    a[rng.uniform(size=(n, n)) > density] = 0.0
    a = a + a.T
    np.fill_diagonal(a, np.abs(a).sum(axis=1) + 1.0)
    return dense_to_csr(a, dtype=dtype)
