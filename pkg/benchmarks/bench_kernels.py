"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot paths (sparse matvec, block-Jacobi sweeps, dot
products) on a generated diffusion matrix, then runs one full PCG solve
per backend. Numba kernels are called once before timing so JIT
compilation is not measured.

Usage:
    python3 benchmarks/bench_kernels.py --n 32 --repeat 5
    python3 benchmarks/bench_kernels.py --n 48 --json results.json
"""

import argparse
import json
import sys
import time

import numpy as np

from mpcg import backend
from mpcg.bjac import setup
from mpcg.policies import PrecisionPolicy, build_mixed
from mpcg.problems import (CoefficientField, Family, GridSpec,
                           build_diffusion_system)
from mpcg.solver import SolveConfig, pcg_solve


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_backend(kernels, A, b, precond, repeat):
    x = np.copy(b)
    out = np.empty_like(b)
    tmp = np.empty_like(b)

    kernels.csr_matvec(A.row_ptr, A.col_idx, A.values, x, out)
    kernels.dot_seq(b, x)
    precond.apply(b)

    def sweeps():
        y = np.zeros_like(b)
        kernels.block_jacobi_sweeps(
            precond.row_ptr, precond.col_idx, precond.values,
            precond.in_block, precond.diag, precond.t, b, y, tmp, 0, A.n)

    return {
        "spmv": best_of(
            lambda: kernels.csr_matvec(A.row_ptr, A.col_idx, A.values,
                                       x, out),
            repeat),
        "dot": best_of(lambda: kernels.dot_seq(b, x), repeat),
        "bjac_sweeps": best_of(sweeps, repeat),
        "precond_apply": best_of(lambda: precond.apply(b), repeat),
    }


def bench_solve(A, b, nb):
    mp_obj = build_mixed(A, PrecisionPolicy.parse("uniform"), nb=nb)
    t0 = time.perf_counter()
    report = pcg_solve(A, b, mp_obj, SolveConfig())
    return time.perf_counter() - t0, report.iterations


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="compare numba and numpy kernel backends")
    parser.add_argument("--n", type=int, default=32,
                        help="grid points per dimension (default 32)")
    parser.add_argument("--nb", type=int, default=32,
                        help="preconditioner block count (default 32)")
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions, best-of (default 5)")
    parser.add_argument("--json", type=str, default=None,
                        help="also write results to this JSON file")
    args = parser.parse_args(argv)

    system = build_diffusion_system(GridSpec(args.n),
                                    CoefficientField(Family.CONST))
    A, b = system.A, system.b
    print(f"matrix: n={args.n}^3 = {A.n} rows, {A.nnz} nonzeros")

    results = {"n": args.n, "rows": A.n, "nnz": A.nnz, "backends": {}}
    for name in ("numba", "numpy"):
        try:
            backend.use_backend(name)
        except ImportError as exc:
            print(f"{name}: unavailable ({exc})", file=sys.stderr)
            continue
        precond = setup(A, nb=args.nb)
        kernel_times = bench_backend(backend.kernels, A, b, precond,
                                     args.repeat)
        solve_time, iterations = bench_solve(A, b, args.nb)
        kernel_times["full_solve"] = solve_time
        results["backends"][name] = kernel_times
        print(f"\n{name} ({backend.kernels.reduction_mode} reductions):")
        for key, val in kernel_times.items():
            print(f"  {key:<14} {val * 1e3:10.3f} ms")
        print(f"  solve iterations: {iterations}")

    if len(results["backends"]) == 2:
        print("\nspeedup (numpy time / numba time):")
        for key in results["backends"]["numba"]:
            ratio = (results["backends"]["numpy"][key]
                     / results["backends"]["numba"][key])
            print(f"  {key:<14} {ratio:8.2f}x")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
        print(f"\nwrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
