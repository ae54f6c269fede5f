import numpy as np
import pytest

from mpcg.policies import PolicyKind, PrecisionPolicy, build_mixed
from mpcg.solver import (
    BreakdownError,
    IndefiniteOperatorError,
    IterationRecord,
    NonFiniteResidualError,
    SolveConfig,
    TINY,
    detect_divergence,
    pcg_solve,
    read_trace_csv,
    report_summary,
    speedup,
    trace_to_csv,
    true_relres,
)

from conftest import dense_to_csr, random_spd_csr

UNIFORM = PrecisionPolicy(PolicyKind.UNIFORM)


def _mixed(A, policy=UNIFORM, nb=4, k=2, t=2):
    return build_mixed(A, policy, nb=nb, k=k, t=t)


class TestSolveConfig:
    def test_defaults(self):
        cfg = SolveConfig()
        assert cfg.res_tol == 1e-10
        assert cfg.iteration_cap(100) == 1000
        assert cfg.iteration_cap(5000) == 20000

    def test_explicit_cap_wins(self):
        assert SolveConfig(max_iter=7).iteration_cap(10 ** 9) == 7

    def test_validation(self):
        with pytest.raises(ValueError):
            SolveConfig(res_tol=0.0)
        with pytest.raises(ValueError):
            SolveConfig(max_iter=0)
        with pytest.raises(ValueError):
            SolveConfig(record_true_residual_every=-1)


class TestPcgSolve:
    def test_identity_converges_in_one_exact_step(self, any_backend):
        A = dense_to_csr(np.eye(6))
        b = np.arange(1.0, 7.0)
        rep = pcg_solve(A, b, _mixed(A, nb=2))
        assert rep.converged and rep.iterations == 1
        np.testing.assert_array_equal(rep.x, b)
        assert rep.final_true_relres == 0.0
        assert rep.trace[0].implicit_relres == 0.0
        assert rep.trace[0].true_relres == 0.0

    def test_one_by_one(self, any_backend):
        A = dense_to_csr([[4.0]])
        rep = pcg_solve(A, np.array([8.0]), _mixed(A, nb=1))
        assert rep.converged
        np.testing.assert_array_equal(rep.x, [2.0])

    def test_zero_rhs_is_trivially_converged(self):
        A = dense_to_csr(np.eye(3))
        rep = pcg_solve(A, np.zeros(3), _mixed(A, nb=1))
        assert rep.converged and rep.iterations == 0
        assert rep.trace == [] and rep.final_true_relres == 0.0

    def test_solves_random_spd(self, any_backend):
        rng = np.random.default_rng(19)
        A = random_spd_csr(50, 0.2, rng)
        b = rng.standard_normal(50)
        rep = pcg_solve(A, b, _mixed(A, nb=8), SolveConfig(res_tol=1e-12))
        assert rep.converged
        np.testing.assert_allclose(rep.x, np.linalg.solve(A.toarray(), b),
                                   rtol=1e-8)
        assert rep.final_true_relres < 1e-10

    def test_x0_route(self, any_backend):
        rng = np.random.default_rng(23)
        A = random_spd_csr(30, 0.3, rng)
        b = rng.standard_normal(30)
        x0 = rng.standard_normal(30)
        rep = pcg_solve(A, b, _mixed(A, nb=5), x0=x0)
        assert rep.converged
        np.testing.assert_allclose(rep.x, np.linalg.solve(A.toarray(), b),
                                   rtol=1e-6)

    def test_fixed_low_policy_solves_too(self, any_backend):
        rng = np.random.default_rng(29)
        A = random_spd_csr(40, 0.25, rng)
        b = rng.standard_normal(40)
        rep = pcg_solve(A, b, _mixed(A, PrecisionPolicy(PolicyKind.FIXED_LOW)))
        assert rep.converged
        assert all(rec.branch == "low" for rec in rep.trace)
        assert rep.final_true_relres < 1e-9

    def test_adaptive_branch_sequence_is_monotone(self, any_backend):
        # hl: once the residual drops below tol the branch stays low
        rng = np.random.default_rng(37)
        A = random_spd_csr(40, 0.25, rng)
        b = rng.standard_normal(40)
        pol = PrecisionPolicy(PolicyKind.ADAPTIVE_HL, adp_tol=1e-4)
        rep = pcg_solve(A, b, _mixed(A, pol))
        branches = [rec.branch for rec in rep.trace]
        assert branches[0] == "high"
        assert "low" in branches
        flips = sum(1 for a, c in zip(branches, branches[1:]) if a != c)
        assert flips == 1

    def test_first_iteration_relres_is_one_for_branching(self, any_backend):
        # adp_tol slightly above 1: relres=1 < tol so hl goes low at once;
        # adp_tol exactly 1 ties and goes high
        rng = np.random.default_rng(41)
        A = random_spd_csr(20, 0.3, rng)
        b = rng.standard_normal(20)
        hi = pcg_solve(A, b, _mixed(A, PrecisionPolicy(
            PolicyKind.ADAPTIVE_HL, adp_tol=1.0)))
        lo = pcg_solve(A, b, _mixed(A, PrecisionPolicy(
            PolicyKind.ADAPTIVE_HL, adp_tol=1.0000001)))
        assert hi.trace[0].branch == "high"
        assert lo.trace[0].branch == "low"

    def test_iteration_cap_returns_unconverged(self, any_backend):
        rng = np.random.default_rng(43)
        A = random_spd_csr(40, 0.25, rng)
        b = rng.standard_normal(40)
        rep = pcg_solve(A, b, _mixed(A), SolveConfig(max_iter=2))
        assert not rep.converged and rep.iterations == 2
        assert rep.final_true_relres > 0

    def test_trace_has_consecutive_iterations(self, any_backend):
        rng = np.random.default_rng(47)
        A = random_spd_csr(30, 0.3, rng)
        b = rng.standard_normal(30)
        rep = pcg_solve(A, b, _mixed(A))
        assert [rec.iteration for rec in rep.trace] == \
            list(range(1, rep.iterations + 1))
        assert all(np.isfinite(rec.implicit_relres) for rec in rep.trace)

    def test_true_residual_stride(self, any_backend):
        rng = np.random.default_rng(53)
        A = random_spd_csr(40, 0.25, rng)
        b = rng.standard_normal(40)
        rep = pcg_solve(A, b, _mixed(A),
                        SolveConfig(record_true_residual_every=3))
        for rec in rep.trace[:-1]:
            if rec.iteration % 3 == 0:
                assert rec.true_relres is not None
            else:
                assert rec.true_relres is None
        assert rep.trace[-1].true_relres is not None

    def test_implicit_tracks_true_residual(self, any_backend):
        rng = np.random.default_rng(59)
        A = random_spd_csr(50, 0.2, rng)
        b = rng.standard_normal(50)
        rep = pcg_solve(A, b, _mixed(A),
                        SolveConfig(record_true_residual_every=1))
        for rec in rep.trace:
            if rec.implicit_relres > 1e-9:
                assert rec.true_relres == pytest.approx(
                    rec.implicit_relres, rel=1e-3)

    def test_deterministic_rerun(self, any_backend):
        rng = np.random.default_rng(61)
        A = random_spd_csr(40, 0.25, rng)
        b = rng.standard_normal(40)
        pol = PrecisionPolicy(PolicyKind.ADAPTIVE_HL, adp_tol=1e-3)
        r1 = pcg_solve(A, b, _mixed(A, pol))
        r2 = pcg_solve(A, b, _mixed(A, pol))
        np.testing.assert_array_equal(r1.x, r2.x)
        assert [(rec.iteration, rec.implicit_relres, rec.branch)
                for rec in r1.trace] == \
               [(rec.iteration, rec.implicit_relres, rec.branch)
                for rec in r2.trace]

    def test_breakdown_on_zero_rz(self):
        # z underflows to exactly zero: huge diagonal, tiny residual whose
        # own norm still survives squaring
        A = dense_to_csr(np.diag([1e308, 1e308]))
        b = np.array([1e-150, 1e-150])
        with pytest.raises(BreakdownError):
            pcg_solve(A, b, _mixed(A, nb=1, k=1, t=1))

    def test_indefinite_preconditioner_detected(self):
        A = dense_to_csr(np.diag([1.0, -1.0]))
        b = np.array([0.0, 1.0])
        with pytest.raises(IndefiniteOperatorError, match="preconditioner"):
            pcg_solve(A, b, _mixed(A, nb=1, k=1, t=1))

    def test_indefinite_matrix_detected(self):
        A = dense_to_csr([[1.0, 2.0], [2.0, 1.0]])
        b = np.array([1.0, -1.0])
        with pytest.raises(IndefiniteOperatorError, match="matrix"):
            pcg_solve(A, b, _mixed(A, nb=1, k=1, t=1))

    def test_nonfinite_residual_detected(self):
        A = dense_to_csr([[1e-300]])
        b = np.array([1e300])
        with pytest.raises((NonFiniteResidualError, IndefiniteOperatorError)):
            pcg_solve(A, b, _mixed(A, nb=1, k=1, t=1))

    def test_input_validation(self):
        A = dense_to_csr(np.eye(3))
        mp = _mixed(A, nb=1)
        with pytest.raises(ValueError, match="rhs"):
            pcg_solve(A, np.ones(2), mp)
        with pytest.raises(ValueError, match="rhs"):
            pcg_solve(A, np.ones(3, dtype=np.float32), mp)
        with pytest.raises(ValueError, match="x0"):
            pcg_solve(A, np.ones(3), mp, x0=np.ones(2))
        B = dense_to_csr(np.eye(4))
        with pytest.raises(ValueError, match="preconditioner"):
            pcg_solve(B, np.ones(4), mp)


class TestTrueRelres:
    def test_matches_direct_computation(self, any_backend):
        rng = np.random.default_rng(67)
        A = random_spd_csr(20, 0.4, rng)
        b = rng.standard_normal(20)
        x = rng.standard_normal(20)
        want = float(np.linalg.norm(b - A.toarray() @ x)) / 2.0
        assert true_relres(A, x, b, 2.0) == pytest.approx(want, rel=1e-13)

    def test_rejects_zero_r0(self):
        A = dense_to_csr(np.eye(2))
        with pytest.raises(ValueError):
            true_relres(A, np.ones(2), np.ones(2), 0.0)


class TestDetectDivergence:
    def test_none_when_close(self):
        a = [1.0, 0.1, 0.01]
        b = [1.0, 0.1, 0.02]
        assert detect_divergence(a, b) is None

    def test_first_offending_iteration(self):
        a = [1.0, 0.5, 0.5, 0.5]
        b = [1.0, 0.1, 0.01, 0.001]
        assert detect_divergence(a, b) == 2

    def test_threshold_is_strict(self):
        # exactly one decade apart with delta=1.0: not flagged
        assert detect_divergence([0.1], [0.01], delta_log10=1.0) is None
        assert detect_divergence([0.1], [0.009], delta_log10=1.0) == 1

    def test_zero_residual_clamps(self):
        assert detect_divergence([0.0], [TINY]) is None
        assert detect_divergence([0.0], [1e-300]) == 1

    def test_compares_common_prefix_only(self):
        assert detect_divergence([1.0, 0.1], [1.0, 0.1, 0.5, 99.0]) is None
        assert detect_divergence([], [1.0]) is None

    def test_accepts_records(self, any_backend):
        rng = np.random.default_rng(71)
        A = random_spd_csr(30, 0.3, rng)
        b = rng.standard_normal(30)
        rep = pcg_solve(A, b, _mixed(A))
        assert detect_divergence(rep.trace, rep.trace) is None


class TestSpeedupAndSerialization:
    def _report(self, any_time=1.0, converged=True):
        return type("R", (), {"converged": converged,
                              "total_time": any_time})()

    def test_speedup_ratio(self):
        assert speedup(self._report(3.0), self._report(2.0)) == 1.5

    def test_speedup_requires_convergence(self):
        with pytest.raises(ValueError):
            speedup(self._report(converged=False), self._report())
        with pytest.raises(ValueError):
            speedup(self._report(), self._report(converged=False))

    def test_csv_round_trip(self, tmp_path, any_backend):
        rng = np.random.default_rng(73)
        A = random_spd_csr(30, 0.3, rng)
        b = rng.standard_normal(30)
        rep = pcg_solve(A, b, _mixed(
            A, PrecisionPolicy(PolicyKind.ADAPTIVE_HL, adp_tol=1e-2)),
            SolveConfig(record_true_residual_every=2))
        path = tmp_path / "trace.csv"
        trace_to_csv(rep, path)
        back = read_trace_csv(path)
        assert len(back) == rep.iterations
        for got, want in zip(back, rep.trace):
            assert got.iteration == want.iteration
            assert got.implicit_relres == want.implicit_relres
            assert got.true_relres == want.true_relres
            assert got.branch == want.branch
            assert got.wall_time == 0.0

    def test_csv_reruns_are_byte_identical(self, tmp_path, any_backend):
        rng = np.random.default_rng(79)
        A = random_spd_csr(30, 0.3, rng)
        b = rng.standard_normal(30)
        paths = []
        for i in (0, 1):
            rep = pcg_solve(A, b, _mixed(A))
            p = tmp_path / f"t{i}.csv"
            trace_to_csv(rep, p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]

    def test_csv_timings_flag(self, tmp_path, any_backend):
        rng = np.random.default_rng(83)
        A = random_spd_csr(20, 0.3, rng)
        rep = pcg_solve(A, rng.standard_normal(20), _mixed(A))
        p = tmp_path / "t.csv"
        trace_to_csv(rep, p, include_timings=True)
        back = read_trace_csv(p)
        assert all(b.wall_time == rec.wall_time
                   for b, rec in zip(back, rep.trace))
        assert back[-1].wall_time > 0

    def test_read_rejects_wrong_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="not a trace"):
            read_trace_csv(p)

    def test_report_summary(self, any_backend):
        rng = np.random.default_rng(89)
        A = random_spd_csr(20, 0.3, rng)
        rep = pcg_solve(A, rng.standard_normal(20), _mixed(A))
        d = report_summary(rep, extra={"n": 20})
        assert d["policy"] == "uniform"
        assert d["converged"] is True
        assert d["iterations"] == rep.iterations
        assert d["n"] == 20
