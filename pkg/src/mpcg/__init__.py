"""Mixed-precision block-Jacobi preconditioned CG, problem generators,
and matrix feature analysis."""

from .sparse import (
    NarrowingOverflowError,
    Precision,
    PrecisionMismatchError,
    SparseMatrix,
    convert_precision,
    dot,
    norm2,
    spmv,
)

__version__ = "0.1.0"

__all__ = [
    "NarrowingOverflowError",
    "Precision",
    "PrecisionMismatchError",
    "SparseMatrix",
    "convert_precision",
    "dot",
    "norm2",
    "spmv",
    "__version__",
]
