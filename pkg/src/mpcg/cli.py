"""Command-line interface: gen, solve, analyze, compare.

Settings resolve in three layers: hard defaults, then an INI config file
(--config), then explicit flags. Outputs are plain files in --out: Matrix
Market for matrices, CSV for traces and histograms, JSON for summaries.
Every JSON summary embeds the fully resolved configuration, so a result
file is interpretable on its own.

Exit codes: 0 success, 1 a solve failed to converge or broke down,
2 usage or configuration errors, 3 I/O errors (missing, unwritable, or
malformed files).
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__, backend
from .bjac import BlockPartition
from .features import (
    DECADE_EDGES,
    SMALL_RATIO_EDGES,
    dominance_stats,
    m_matrix_sign_check,
    multiscale_histogram,
)
from .mmio import MatrixMarketError, mm_read, mm_write
from .policies import PrecisionPolicy, build_mixed
from .problems import (
    CoefficientField,
    Family,
    GridSpec,
    build_matrix,
    build_rhs,
    diag_augment,
    splitmix64_stream,
)
from .solver import (
    SolveConfig,
    SolverError,
    detect_divergence,
    pcg_solve,
    read_trace_csv,
    report_summary,
    speedup,
    trace_to_csv,
)


class ConfigError(ValueError):
    """Bad or contradictory settings from flags or the config file."""


def _load_config(path):
    if path is None:
        return configparser.ConfigParser()
    p = Path(path)
    if not p.is_file():
        raise OSError(f"config file not found: {path}")
    cfg = configparser.ConfigParser()
    try:
        cfg.read(p)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return cfg


def _setting(flag, cfg, section, key, default, convert):
    """Flag beats config beats default."""
    if flag is not None:
        return flag
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        try:
            return convert(raw)
        except ValueError as exc:
            raise ConfigError(
                f"config [{section}] {key} = {raw!r}: {exc}") from None
    return default


def _bool(raw):
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# ------------------------------------------------------------- problem

def _resolve_problem(args, cfg):
    """Build or load the matrix and rhs; returns (A, b, echo_dict)."""
    matrix_file = _setting(args.matrix, cfg, "problem", "matrix", None, str)
    family_name = _setting(args.problem, cfg, "problem", "family", None, str)
    if matrix_file and family_name:
        raise ConfigError("give either --matrix or --problem, not both")
    rhs_kind = _setting(args.rhs, cfg, "problem", "rhs", "ones", str)
    rhs_seed = _setting(args.rhs_seed, cfg, "problem", "rhs_seed", 0, int)
    p_diag = _setting(args.pdiag, cfg, "problem", "p_diag", 0.0, float)
    if rhs_kind not in ("ones", "random"):
        raise ConfigError(f"rhs must be 'ones' or 'random', not {rhs_kind!r}")
    if p_diag < 0:
        raise ConfigError("p_diag must be nonnegative")

    if matrix_file:
        A = mm_read(matrix_file)
        if A.n != A.m:
            raise ConfigError(f"{matrix_file} is {A.n}x{A.m}, need square")
        echo = {"matrix_file": str(matrix_file)}
        b = build_rhs_external(A.n, rhs_kind, rhs_seed)
    else:
        if family_name is None:
            raise ConfigError("no problem given: use --problem or --matrix")
        family = Family.parse(family_name)
        n = _setting(args.n, cfg, "problem", "n", None, int)
        if n is None:
            raise ConfigError("generated problems need --n")
        s = _setting(args.s, cfg, "problem", "s", 1.0, float)
        seed = _setting(args.seed, cfg, "problem", "seed", 0, int)
        grid = GridSpec(n)
        field = CoefficientField(family, s=s, seed=seed)
        A = build_matrix(grid, field)
        b = build_rhs(grid, rhs_kind, rhs_seed)
        echo = {"family": family.value, "n": n, "s": s, "seed": seed,
                "num_nodes": grid.num_nodes, "nnz": A.nnz}
    if p_diag > 0:
        A = diag_augment(A, p_diag)
    echo.update({"rhs": rhs_kind, "rhs_seed": rhs_seed, "p_diag": p_diag})
    return A, b, echo


def build_rhs_external(n, kind, seed):
    if kind == "ones":
        return np.ones(n)
    return splitmix64_stream(seed, n)


def _base_echo():
    return {
        "version": __version__,
        "backend": backend.name,
        "reduction_mode": backend.kernels.reduction_mode,
    }


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------------ gen

def _cmd_gen(args):
    cfg = _load_config(args.config)
    A, b, problem_echo = _resolve_problem(args, cfg)
    out = _out_dir(args)
    mm_write(A, out / "matrix.mtx")
    meta = _base_echo()
    meta["problem"] = problem_echo
    _write_json(out / "problem.json", meta)
    print(f"wrote {out / 'matrix.mtx'} ({A.n} rows, {A.nnz} nonzeros) "
          f"and problem.json")
    return 0


# ---------------------------------------------------------------- solve

def _precond_settings(args, cfg):
    nb = _setting(args.nb, cfg, "preconditioner", "nb", 32, int)
    k = _setting(args.k, cfg, "preconditioner", "k", 2, int)
    t = _setting(args.t, cfg, "preconditioner", "t", 2, int)
    return nb, k, t


def _solve_settings(args, cfg):
    res_tol = _setting(args.res_tol, cfg, "solve", "res_tol", 1e-10, float)
    max_iter = _setting(args.max_iter, cfg, "solve", "max_iter", None, int)
    true_every = _setting(args.true_every, cfg, "solve", "true_every", 0, int)
    timings = _setting(args.trace_timings or None, cfg, "solve",
                       "trace_timings", False, _bool)
    return res_tol, max_iter, true_every, bool(timings)


def _policies(args, cfg):
    if args.policy:
        texts = args.policy
    elif cfg.has_option("solve", "policies"):
        texts = [t for t in
                 (s.strip() for s in cfg.get("solve", "policies").split(","))
                 if t]
    else:
        texts = ["uniform"]
    policies = [PrecisionPolicy.parse(t) for t in texts]
    labels = [p.label() for p in policies]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate policies in {texts}")
    return policies


def _cmd_solve(args):
    cfg = _load_config(args.config)
    A, b, problem_echo = _resolve_problem(args, cfg)
    nb, k, t = _precond_settings(args, cfg)
    res_tol, max_iter, true_every, timings = _solve_settings(args, cfg)
    policies = _policies(args, cfg)
    out = _out_dir(args)

    try:
        solve_cfg = SolveConfig(res_tol=res_tol, max_iter=max_iter,
                                record_true_residual_every=true_every)
        partition = BlockPartition.equal_split(A.n, nb)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    echo = _base_echo()
    echo["problem"] = problem_echo
    echo["preconditioner"] = {"nb": nb, "k": k, "t": t}
    echo["solve"] = {
        "res_tol": res_tol,
        "max_iter": solve_cfg.iteration_cap(A.n),
        "true_every": true_every,
        "trace_timings": timings,
    }

    all_ok = True
    for policy in policies:
        label = policy.label()
        t0 = time.perf_counter()
        try:
            mp = build_mixed(A, policy, k=k, t=t, partition=partition)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        setup_time = time.perf_counter() - t0
        trace_path = out / f"{label}.trace.csv"
        summary_path = out / f"{label}.summary.json"
        try:
            report = pcg_solve(A, b, mp, solve_cfg)
        except SolverError as exc:
            all_ok = False
            print(f"{label}: FAILED ({exc})", file=sys.stderr)
            _write_json(summary_path, dict(
                echo, policy=label, converged=False, error=str(exc),
                setup_time_s=setup_time))
            continue
        trace_to_csv(report, trace_path, include_timings=timings)
        summary = report_summary(report, extra=dict(
            echo, setup_time_s=setup_time, trace_file=trace_path.name))
        _write_json(summary_path, summary)
        state = "converged" if report.converged else "did NOT converge"
        print(f"{label}: {state} in {report.iterations} iterations "
              f"(solve {report.total_time:.3f}s, setup {setup_time:.3f}s, "
              f"final true relres {report.final_true_relres:.3e}) "
              f"-> {trace_path.name}")
        if not report.converged:
            all_ok = False
    return 0 if all_ok else 1


# -------------------------------------------------------------- analyze

def _parse_edges(text):
    low = text.strip().lower()
    if low in ("decades", "decade"):
        return DECADE_EDGES
    if low in ("small", "fine"):
        return SMALL_RATIO_EDGES
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise ConfigError(f"bad edge list {text!r}: use 'decades', 'small', "
                          "or comma-separated numbers") from None


def _cmd_analyze(args):
    cfg = _load_config(args.config)
    A, _, problem_echo = _resolve_problem(args, cfg)
    edges_text = _setting(args.edges, cfg, "analyze", "edges", "decades", str)
    rowsum_tol = _setting(args.rowsum_tol, cfg, "analyze", "rowsum_tol",
                          1e-13, float)
    edges = _parse_edges(edges_text)
    out = _out_dir(args)

    try:
        hist = multiscale_histogram(A, edges=edges)
        dom = dominance_stats(A)
        signs = m_matrix_sign_check(A, row_sum_rel_tol=rowsum_tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    csv_path = out / "multiscale.csv"
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write("bin_low,bin_high,count,percent\n")
        for low, high, count, pct in hist.to_rows():
            fh.write(f"{low!r},{high!r},{count},{pct!r}\n")
        fh.write(f"undefined,,{hist.undefined_count},"
                 f"{100.0 * hist.undefined_count / hist.total_rows!r}\n")

    payload = _base_echo()
    payload["problem"] = problem_echo
    payload["multiscale"] = {
        "edges": list(hist.edges),
        "counts": list(hist.counts),
        "percentages": list(hist.percentages()),
        "undefined_count": hist.undefined_count,
        "total_rows": hist.total_rows,
    }
    payload["dominance"] = {
        "min": dom.dominance_min,
        "median": dom.dominance_median,
        "max": dom.dominance_max,
        "fraction_dominant": dom.fraction_dominant,
        "row_sum_min": dom.row_sum_min,
        "row_sum_max": dom.row_sum_max,
    }
    payload["sign_check"] = {
        "row_sum_rel_tol": rowsum_tol,
        "diag_positive": signs.diag_positive,
        "offdiag_nonpositive": signs.offdiag_nonpositive,
        "row_sums_nonnegative": signs.row_sums_nonnegative,
        "diag_samples": [list(s) for s in signs.diag_samples],
        "offdiag_samples": [list(s) for s in signs.offdiag_samples],
        "row_sum_samples": [list(s) for s in signs.row_sum_samples],
    }
    _write_json(out / "analysis.json", payload)

    print(f"rows: {hist.total_rows}  nnz: {A.nnz}")
    for low, high, count, pct in hist.to_rows():
        if count:
            top = "inf" if np.isinf(high) else f"{high:g}"
            print(f"  strength [{low:g}, {top}): {count} rows ({pct:.2f}%)")
    if hist.undefined_count:
        print(f"  undefined strength: {hist.undefined_count} rows")
    print(f"dominance min/median/max: {dom.dominance_min:.3g} / "
          f"{dom.dominance_median:.3g} / {dom.dominance_max:.3g}  "
          f"(fraction > 1: {dom.fraction_dominant:.3f})")
    verdict = "pass" if signs.all_pass else "FAIL"
    print(f"m-matrix sign pattern: {verdict}")
    print(f"wrote {csv_path} and analysis.json")
    return 0


# -------------------------------------------------------------- compare

def _load_summary(path):
    p = Path(path)
    if not p.is_file():
        raise OSError(f"summary not found: {path}")
    try:
        with open(p, encoding="ascii") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    for key in ("policy", "converged", "iterations"):
        if key not in data:
            raise ConfigError(f"{path} lacks {key!r}; not a solve summary")
    return p, data


def _cmd_compare(args):
    pa, a = _load_summary(args.summary_a)
    pb, b = _load_summary(args.summary_b)
    if a.get("problem") != b.get("problem"):
        raise ConfigError("summaries describe different problems; "
                          "refusing to compare")
    trace_a = read_trace_csv(pa.parent / a["trace_file"]) \
        if a.get("trace_file") else []
    trace_b = read_trace_csv(pb.parent / b["trace_file"]) \
        if b.get("trace_file") else []

    div = detect_divergence(trace_a, trace_b, delta_log10=args.delta)
    result = {
        "policy_a": a["policy"],
        "policy_b": b["policy"],
        "iterations_a": a["iterations"],
        "iterations_b": b["iterations"],
        "delta_log10": args.delta,
        "divergence_iteration": div,
    }
    print(f"{a['policy']}: {a['iterations']} iterations"
          f"{'' if a['converged'] else ' (not converged)'}")
    print(f"{b['policy']}: {b['iterations']} iterations"
          f"{'' if b['converged'] else ' (not converged)'}")
    if a["converged"] and b["converged"] and a["iterations"]:
        ratio = b["iterations"] / a["iterations"]
        result["iteration_ratio"] = ratio
        print(f"iteration ratio (b/a): {ratio:.3f}")
        ra = SimpleNamespace(converged=True, total_time=a.get("total_time_s"))
        rb = SimpleNamespace(converged=True, total_time=b.get("total_time_s"))
        if ra.total_time and rb.total_time:
            sp = speedup(ra, rb)
            result["speedup_a_over_b"] = sp
            print(f"wall-time speedup (a/b): {sp:.3f}")
    if div is None:
        print(f"residual traces stay within {args.delta} decades "
              f"over {min(len(trace_a), len(trace_b))} shared iterations")
    else:
        print(f"residual traces diverge at iteration {div} "
              f"(> {args.delta} decades apart)")
    if args.out:
        _write_json(Path(args.out), result)
    return 0


# ----------------------------------------------------------------- main

def _add_problem_flags(p):
    p.add_argument("--config", help="INI file with [problem]/[preconditioner]/"
                   "[solve]/[analyze] sections")
    p.add_argument("--problem", metavar="FAMILY",
                   help="coefficient family: const, ani, dis, rand")
    p.add_argument("--matrix", help="read the matrix from a Matrix Market "
                   "file instead of generating one")
    p.add_argument("--n", type=int, help="interior grid points per axis")
    p.add_argument("--s", type=float, help="family strength parameter")
    p.add_argument("--seed", type=int, help="seed for the rand family")
    p.add_argument("--rhs", choices=("ones", "random"),
                   help="right-hand side (default ones)")
    p.add_argument("--rhs-seed", type=int, help="seed for --rhs random")
    p.add_argument("--pdiag", type=float,
                   help="diagonal augmentation factor (default 0)")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mpcg",
        description="Mixed-precision block-Jacobi PCG experiments")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem and write it out")
    _add_problem_flags(g)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=_cmd_gen)

    s = sub.add_parser("solve", help="run PCG under one or more policies")
    _add_problem_flags(s)
    s.add_argument("--nb", type=int, help="number of blocks (default 32)")
    s.add_argument("--k", type=int, help="outer sweeps (default 2)")
    s.add_argument("--t", type=int, help="inner sweeps (default 2)")
    s.add_argument("--policy", action="append", metavar="POLICY",
                   help="uniform | fixed-low | adaptive-hl[:tol] | "
                        "adaptive-lh[:tol]; repeatable")
    s.add_argument("--res-tol", type=float, help="stopping tolerance "
                   "(default 1e-10)")
    s.add_argument("--max-iter", type=int,
                   help="iteration cap (default min(10n, 20000))")
    s.add_argument("--true-every", type=int,
                   help="record the true residual every N iterations")
    s.add_argument("--trace-timings", action="store_true", default=None,
                   help="write real per-iteration wall times into trace "
                        "CSVs (reruns then differ byte-wise)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=_cmd_solve)

    a = sub.add_parser("analyze", help="matrix feature analysis")
    _add_problem_flags(a)
    a.add_argument("--edges", help="'decades', 'small', or comma-separated "
                   "bin edges")
    a.add_argument("--rowsum-tol", type=float,
                   help="relative slack for the row-sum sign check "
                        "(default 1e-13)")
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(func=_cmd_analyze)

    c = sub.add_parser("compare", help="compare two solve summaries")
    c.add_argument("summary_a")
    c.add_argument("summary_b")
    c.add_argument("--delta", type=float, default=0.5,
                   help="decades of residual separation that count as "
                        "divergence (default 0.5)")
    c.add_argument("--out", help="also write the comparison as JSON")
    c.set_defaults(func=_cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MatrixMarketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
