import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcg import SparseMatrix
from mpcg.features import (
    DECADE_EDGES,
    SMALL_RATIO_EDGES,
    dominance_stats,
    m_matrix_sign_check,
    multiscale_histogram,
    multiscale_profile,
    row_multiscale,
)
from mpcg.problems import CoefficientField, Family, GridSpec, build_matrix

from conftest import dense_to_csr


def profile_oracle(dense):
    """Row strengths by explicit python loops."""
    out = []
    for i, row in enumerate(dense):
        offs = [abs(v) for j, v in enumerate(row) if j != i and v != 0]
        out.append(max(offs) / min(offs) if offs else None)
    return out


class TestMultiscaleProfile:
    def test_matches_oracle_exactly(self):
        rng = np.random.default_rng(101)
        dense = rng.standard_normal((25, 25))
        dense[rng.uniform(size=dense.shape) > 0.4] = 0.0
        A = dense_to_csr(dense)
        tau, defined = multiscale_profile(A)
        want = profile_oracle(A.toarray())
        for i, w in enumerate(want):
            if w is None:
                assert not defined[i] and np.isnan(tau[i])
            else:
                assert defined[i] and tau[i] == w

    def test_row_multiscale_agrees_bitwise(self):
        rng = np.random.default_rng(103)
        dense = rng.standard_normal((20, 20))
        dense[rng.uniform(size=dense.shape) > 0.3] = 0.0
        A = dense_to_csr(dense)
        tau, defined = multiscale_profile(A)
        for i in range(20):
            r = row_multiscale(A, i)
            if r is None:
                assert not defined[i]
            else:
                assert r == tau[i]

    def test_single_offdiag_gives_one(self):
        A = dense_to_csr([[2.0, -7.0], [0.0, 1.0]])
        tau, defined = multiscale_profile(A)
        assert tau[0] == 1.0
        assert not defined[1]

    def test_explicit_zero_offdiag_does_not_qualify(self):
        # row 0 stores (0,1) = 0.0 explicitly; it must not count
        A = SparseMatrix(2, 2, [0, 2, 3], [0, 1, 1],
                         np.array([5.0, 0.0, 1.0]))
        tau, defined = multiscale_profile(A)
        assert not defined[0]

    def test_diagonal_only_matrix_all_undefined(self):
        A = dense_to_csr(np.diag([1.0, 2.0, 3.0]))
        _, defined = multiscale_profile(A)
        assert not defined.any()

    def test_empty_row_undefined(self):
        A = SparseMatrix(3, 3, [0, 1, 1, 2], [0, 2], np.array([1.0, 1.0]))
        _, defined = multiscale_profile(A)
        assert list(defined) == [False, False, False]

    def test_ani_rows_are_exactly_s(self):
        for s in (2.0, 4.0, 10.0, 100.0, 1000.0):
            A = build_matrix(GridSpec(3), CoefficientField(Family.ANI, s=s))
            tau, defined = multiscale_profile(A)
            assert defined.all()
            assert np.all(tau == s)

    def test_const_rows_are_exactly_one(self):
        A = build_matrix(GridSpec(4), CoefficientField(Family.CONST))
        tau, defined = multiscale_profile(A)
        assert defined.all() and np.all(tau == 1.0)

    def test_row_multiscale_bounds(self):
        A = dense_to_csr(np.eye(2))
        with pytest.raises(IndexError):
            row_multiscale(A, 2)


class TestMultiscaleHistogram:
    def test_lower_inclusive_binning(self):
        # strengths engineered to land exactly on edges
        dense = np.eye(4)
        for i, tau in enumerate((1.0, 10.0, 100.0, 5.0)):
            dense[i, (i + 1) % 4] = 1.0
            dense[i, (i + 2) % 4] = tau
        A = dense_to_csr(dense)
        h = multiscale_histogram(A, edges=(1.0, 10.0, 100.0))
        # tau=1 and 5 -> [1,10); tau=10 -> [10,100); tau=100 -> [100,inf)
        assert h.counts == (2, 1, 1)
        assert h.undefined_count == 0
        assert h.total_rows == 4

    def test_last_bin_unbounded(self):
        dense = np.array([[1.0, 1e20, -1.0], [0.0, 1.0, 0.0],
                          [0.0, 0.0, 1.0]])
        h = multiscale_histogram(dense_to_csr(dense), edges=SMALL_RATIO_EDGES)
        assert h.counts[-1] == 1
        assert h.undefined_count == 2

    def test_counts_plus_undefined_cover_rows(self):
        rng = np.random.default_rng(107)
        dense = rng.standard_normal((30, 30))
        dense[rng.uniform(size=dense.shape) > 0.2] = 0.0
        h = multiscale_histogram(dense_to_csr(dense))
        assert sum(h.counts) + h.undefined_count == 30

    def test_percentages(self):
        A = build_matrix(GridSpec(3), CoefficientField(Family.CONST))
        h = multiscale_histogram(A)
        assert h.percentages()[0] == 100.0
        assert sum(h.percentages()) == 100.0

    def test_to_rows_shape(self):
        A = build_matrix(GridSpec(2), CoefficientField(Family.CONST))
        rows = multiscale_histogram(A, edges=SMALL_RATIO_EDGES).to_rows()
        assert len(rows) == len(SMALL_RATIO_EDGES)
        assert rows[-1][1] == np.inf
        assert rows[0][:2] == (1.0, 2.0)

    def test_decade_edges_constant(self):
        assert DECADE_EDGES[0] == 1.0
        assert DECADE_EDGES[-1] == 1e16
        assert len(DECADE_EDGES) == 17

    def test_edge_validation(self):
        A = dense_to_csr(np.eye(2))
        with pytest.raises(ValueError):
            multiscale_histogram(A, edges=())
        with pytest.raises(ValueError):
            multiscale_histogram(A, edges=(1.0, 1.0))
        with pytest.raises(ValueError):
            multiscale_histogram(A, edges=(2.0, 4.0))
        with pytest.raises(ValueError):
            multiscale_histogram(A, edges=(1.0, np.inf))

    @settings(deadline=None, max_examples=20)
    @given(st.lists(st.floats(1.0, 1e18), min_size=1, max_size=30))
    def test_every_defined_strength_lands_in_one_bin(self, taus):
        # build a matrix whose row strengths are exactly `taus`
        m = len(taus) + 1
        rows, cols, vals = [], [], []
        for i, tau in enumerate(taus):
            rows += [i, i, i]
            cols += [i, (i + 1) % m, (i + 2) % m]
            vals += [1.0, 1.0, tau]
        rows.append(m - 1)
        cols.append(m - 1)
        vals.append(1.0)
        A = SparseMatrix.from_coo(m, m, rows, cols, vals)
        h = multiscale_histogram(A)
        assert sum(h.counts) + h.undefined_count == m


class TestDominanceStats:
    def test_hand_example(self):
        A = dense_to_csr([[4.0, -1.0, 0.0],
                          [-1.0, 4.0, -1.0],
                          [0.0, -1.0, 4.0]])
        d = dominance_stats(A)
        assert d.dominance_min == 2.0
        assert d.dominance_median == 4.0
        assert d.dominance_max == 4.0
        assert d.fraction_dominant == 1.0
        assert d.row_sum_min == 2.0
        assert d.row_sum_max == 3.0

    def test_no_offdiagonals_is_infinite(self):
        d = dominance_stats(dense_to_csr(np.eye(3)))
        assert d.dominance_min == np.inf
        assert d.fraction_dominant == 1.0

    def test_zero_diag_with_offdiag(self):
        A = SparseMatrix.from_coo(2, 2, [0, 1, 1], [1, 0, 1],
                                  [3.0, 3.0, 1.0])
        d = dominance_stats(A)
        assert d.dominance_min == 0.0
        assert d.fraction_dominant == 0.0

    def test_fraction_counts_strictly_dominant(self):
        # dominance exactly 1 is not counted as dominant
        A = dense_to_csr([[1.0, -1.0], [-1.0, 2.0]])
        d = dominance_stats(A)
        assert d.fraction_dominant == 0.5


class TestSignCheck:
    def test_diffusion_matrix_passes_exactly(self):
        A = build_matrix(GridSpec(4), CoefficientField(Family.CONST))
        rep = m_matrix_sign_check(A)
        assert rep.all_pass
        assert rep.diag_samples == ()
        assert rep.offdiag_samples == ()
        assert rep.row_sum_samples == ()

    def test_dis_matrix_passes_with_roundoff_slack(self):
        A = build_matrix(GridSpec(5), CoefficientField(Family.DIS, s=1000.0))
        rep = m_matrix_sign_check(A, row_sum_rel_tol=1e-13)
        assert rep.all_pass

    def test_positive_offdiag_flagged_with_sample(self):
        A = dense_to_csr([[2.0, 0.5], [-1.0, 2.0]])
        rep = m_matrix_sign_check(A)
        assert not rep.offdiag_nonpositive
        assert rep.offdiag_samples == ((0, 1, 0.5),)
        assert rep.diag_positive

    def test_nonpositive_diag_flagged(self):
        A = dense_to_csr([[-2.0, -0.5], [-1.0, 2.0]])
        rep = m_matrix_sign_check(A)
        assert not rep.diag_positive
        assert rep.diag_samples == ((0, -2.0),)

    def test_missing_diag_counts_as_violation(self):
        A = SparseMatrix.from_coo(2, 2, [0, 0], [0, 1], [1.0, -0.5])
        rep = m_matrix_sign_check(A)
        assert not rep.diag_positive
        assert rep.diag_samples == ((1, 0.0),)

    def test_negative_row_sum_flagged(self):
        A = dense_to_csr([[1.0, -3.0], [0.0, 1.0]])
        rep = m_matrix_sign_check(A)
        assert not rep.row_sums_nonnegative
        assert rep.row_sum_samples == ((0, -2.0),)

    def test_samples_capped_at_ten(self):
        A = dense_to_csr(np.diag(-np.ones(25)))
        rep = m_matrix_sign_check(A)
        assert len(rep.diag_samples) == 10
        assert [s[0] for s in rep.diag_samples] == list(range(10))

    def test_rejects_negative_tolerance(self):
        A = dense_to_csr(np.eye(2))
        with pytest.raises(ValueError):
            m_matrix_sign_check(A, row_sum_rel_tol=-1.0)
