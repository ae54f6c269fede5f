"""Preconditioned conjugate gradients with per-iteration precision branching.

The driver always works in float64; only the preconditioner application
crosses into float32, governed by the policy inside the
MixedPreconditioner. The branch decision for iteration k uses the relative
residual that ended iteration k-1 (so the first iteration sees exactly
1.0), and each iteration costs one matrix-vector product plus whatever the
preconditioner does.

The trace records the implicit relative residual (the ||r|| recurrence CG
maintains), which is what convergence tests and the divergence detector
consume. True residuals ||b - Ax|| are recomputed on demand: every
`record_true_residual_every` iterations, and always once at the end.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .policies import MixedPreconditioner, PrecisionPolicy, apply_policy
from .sparse import SparseMatrix, dot, norm2, spmv

#: smallest positive normal float64; zero residuals clamp here before log10
TINY = float(np.finfo(np.float64).tiny)


class SolverError(RuntimeError):
    """Base class for failures inside pcg_solve."""


class BreakdownError(SolverError):
    """r'z hit exactly zero with a nonzero residual."""


class IndefiniteOperatorError(SolverError):
    """A quadratic form that must stay positive went nonpositive."""


class NonFiniteResidualError(SolverError):
    """The residual norm left the finite range."""


@dataclass(frozen=True)
class SolveConfig:
    """Stopping rule and trace options for pcg_solve."""

    res_tol: float = 1e-10
    max_iter: int | None = None
    record_true_residual_every: int = 0

    def __post_init__(self):
        if not (self.res_tol > 0):
            raise ValueError("res_tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.record_true_residual_every < 0:
            raise ValueError("record_true_residual_every must be >= 0")

    def iteration_cap(self, n: int) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return min(10 * n, 20000)


@dataclass
class IterationRecord:
    """One PCG iteration: residual state and the branch that produced it."""

    iteration: int
    implicit_relres: float
    true_relres: float | None
    branch: str
    wall_time: float


@dataclass
class SolveReport:
    """Everything a solve produced, including the solution itself."""

    converged: bool
    iterations: int
    trace: list
    final_true_relres: float
    total_time: float
    policy: PrecisionPolicy
    x: np.ndarray


def true_relres(A: SparseMatrix, x: np.ndarray, b: np.ndarray,
                r0_norm: float) -> float:
    """||b - Ax|| / r0_norm, recomputed from scratch."""
    if r0_norm == 0:
        raise ValueError("r0_norm must be nonzero")
    return norm2(b - spmv(A, x)) / r0_norm


def pcg_solve(A: SparseMatrix, b: np.ndarray, mp: MixedPreconditioner,
              config: SolveConfig = SolveConfig(),
              x0: np.ndarray | None = None) -> SolveReport:
    """Run PCG on Ax = b under the mixed preconditioner's policy.

    Raises BreakdownError / IndefiniteOperatorError / NonFiniteResidualError
    when the iteration can no longer continue; simply running out of
    iterations is not an error and returns converged=False.
    """
    if A.n != A.m:
        raise ValueError(f"matrix is {A.n}x{A.m}, solver needs square")
    b = np.asarray(b)
    if b.shape != (A.n,) or b.dtype != np.float64:
        raise ValueError(f"rhs must be float64 of shape ({A.n},)")
    if mp.n != A.n:
        raise ValueError(f"preconditioner is for {mp.n} rows, matrix has {A.n}")

    if x0 is None:
        x = np.zeros(A.n)
        r = b.copy()
    else:
        x0 = np.asarray(x0)
        if x0.shape != (A.n,) or x0.dtype != np.float64:
            raise ValueError(f"x0 must be float64 of shape ({A.n},)")
        x = x0.copy()
        r = b - spmv(A, x)

    r0_norm = norm2(r)
    if r0_norm == 0.0:
        return SolveReport(True, 0, [], 0.0, 0.0, mp.policy, x)

    cap = config.iteration_cap(A.n)
    relres = 1.0
    rho_prev = 0.0
    p = None
    trace: list[IterationRecord] = []
    converged = False
    t0 = time.perf_counter()

    for it in range(1, cap + 1):
        z, branch = apply_policy(mp, r, relres)
        rho = dot(r, z)
        if rho == 0.0:
            raise BreakdownError(
                f"iteration {it}: r'z = 0 with nonzero residual")
        if rho < 0.0:
            raise IndefiniteOperatorError(
                f"iteration {it}: r'z = {rho!r} < 0, preconditioner is "
                "not positive definite here")
        if p is None:
            p = z.copy()
        else:
            p = z + (rho / rho_prev) * p
        q = spmv(A, p)
        pq = dot(p, q)
        if pq <= 0.0:
            raise IndefiniteOperatorError(
                f"iteration {it}: p'Ap = {pq!r} <= 0, matrix is not "
                "positive definite on this direction")
        alpha = rho / pq
        x = x + alpha * p
        r = r - alpha * q
        rho_prev = rho

        rnorm = norm2(r)
        if not math.isfinite(rnorm):
            raise NonFiniteResidualError(
                f"iteration {it}: residual norm is {rnorm!r}")
        relres = rnorm / r0_norm
        stride = config.record_true_residual_every
        tr = true_relres(A, x, b, r0_norm) if stride and it % stride == 0 \
            else None
        trace.append(IterationRecord(it, relres, tr, branch,
                                     time.perf_counter() - t0))
        if relres <= config.res_tol:
            converged = True
            break

    total = time.perf_counter() - t0
    final_true = true_relres(A, x, b, r0_norm)
    if converged and trace[-1].true_relres is None:
        trace[-1].true_relres = final_true
    return SolveReport(converged, len(trace), trace, final_true, total,
                       mp.policy, x)


def detect_divergence(trace_a, trace_b, delta_log10: float = 0.5) -> int | None:
    """First iteration where two traces' residual decades drift apart.

    Compares implicit relative residuals over the common prefix; returns
    the 1-based iteration where |log10 ra - log10 rb| first exceeds
    delta_log10, or None. Zero residuals clamp to the smallest positive
    normal before the log.
    """
    ra = _relres_array(trace_a)
    rb = _relres_array(trace_b)
    m = min(ra.size, rb.size)
    if m == 0:
        return None
    la = np.log10(np.maximum(ra[:m], TINY))
    lb = np.log10(np.maximum(rb[:m], TINY))
    hits = np.flatnonzero(np.abs(la - lb) > delta_log10)
    return int(hits[0]) + 1 if hits.size else None


def _relres_array(trace) -> np.ndarray:
    if len(trace) and isinstance(trace[0], IterationRecord):
        return np.array([rec.implicit_relres for rec in trace])
    return np.asarray(trace, dtype=np.float64)


def speedup(report_uniform, report_mixed) -> float:
    """Wall-time ratio uniform/mixed; both runs must have converged."""
    if not (report_uniform.converged and report_mixed.converged):
        raise ValueError("speedup is only defined between converged runs")
    if report_mixed.total_time == 0:
        raise ValueError("mixed run reports zero time")
    return report_uniform.total_time / report_mixed.total_time


_CSV_HEADER = ["iteration", "implicit_relres", "true_relres", "branch",
               "wall_time"]


def trace_to_csv(report: SolveReport, path, include_timings: bool = False
                 ) -> None:
    """Write the iteration trace as CSV.

    wall_time is written as 0.0 unless include_timings is set, so default
    trace files from identical reruns are identical byte for byte.
    """
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for rec in report.trace:
            w.writerow([
                rec.iteration,
                repr(rec.implicit_relres),
                "" if rec.true_relres is None else repr(rec.true_relres),
                rec.branch,
                repr(rec.wall_time) if include_timings else "0.0",
            ])


def read_trace_csv(path) -> list:
    """Read a trace CSV back into IterationRecord objects."""
    with open(path, "r", newline="", encoding="ascii") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != _CSV_HEADER:
            raise ValueError(f"{path}: not a trace file (header {header})")
        out = []
        for row in r:
            if len(row) != 5:
                raise ValueError(f"{path}: malformed row {row!r}")
            out.append(IterationRecord(
                int(row[0]), float(row[1]),
                None if row[2] == "" else float(row[2]),
                row[3], float(row[4])))
    return out


def report_summary(report: SolveReport, extra: dict | None = None) -> dict:
    """JSON-ready summary of one solve."""
    d = {
        "policy": report.policy.label(),
        "converged": report.converged,
        "iterations": report.iterations,
        "final_true_relres": report.final_true_relres,
        "total_time_s": report.total_time,
    }
    if extra:
        d.update(extra)
    return d
