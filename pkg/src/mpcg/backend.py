"""Select the kernel backend at import time.

MPCG_BACKEND=numba (default) uses the jitted kernels; MPCG_BACKEND=numpy
forces the pure-numpy fallback. If numba is missing or fails to import,
the fallback is used with a warning. Callers look kernels up through this
module attribute (``backend.kernels.csr_matvec``) so `use_backend` can
switch implementations at runtime, e.g. in benchmarks.
"""
import os
import warnings

from . import kernels_numpy

kernels = kernels_numpy
name = "numpy"


def use_backend(which):
    """Bind the named kernel implementation ('numba' or 'numpy')."""
    global kernels, name
    if which == "numpy":
        kernels = kernels_numpy
        name = "numpy"
    elif which == "numba":
        from . import kernels_numba
        kernels = kernels_numba
        name = "numba"
    else:
        raise ValueError(f"unknown backend {which!r}, expected 'numba' or 'numpy'")
    return kernels


_requested = os.environ.get("MPCG_BACKEND", "numba").strip().lower()
if _requested == "numba":
    try:
        use_backend("numba")
    except ImportError:
        warnings.warn("numba unavailable, falling back to numpy kernels",
                      stacklevel=1)
elif _requested == "numpy":
    pass
else:
    warnings.warn(f"MPCG_BACKEND={_requested!r} not recognized, using numba",
                  stacklevel=1)
    try:
        use_backend("numba")
    except ImportError:
        pass
