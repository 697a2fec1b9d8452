import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survgam.basis import build_basis, evaluate_basis, raw_design
from survgam.errors import DataValidationError


@pytest.fixture
def basis_pair(rng):
    times = rng.weibull(1.2, 400) * 8.0
    return build_basis(times, dim=10, penalty_order=2)


class TestConstruction:
    def test_null_space_dimension_matches_penalty_order(self, basis_pair):
        _, decomp = basis_pair
        assert decomp.d_fixed == 2
        assert decomp.d_random == 8

    def test_dim_too_small_rejected(self, rng):
        with pytest.raises(DataValidationError, match="too small"):
            build_basis(rng.uniform(0, 1, 50), dim=3, penalty_order=2)

    def test_identical_times_rejected(self):
        with pytest.raises(DataValidationError, match="identical"):
            build_basis(np.full(20, 2.0), dim=10)

    def test_knots_span_zero_to_upper(self, rng):
        sb, _ = build_basis(rng.uniform(1, 5, 100), dim=8, upper=9.0)
        assert sb.knots[0] == 0.0
        assert sb.knots[-1] == 9.0
        assert sb.upper == 9.0


class TestPenalty:
    def test_constant_coefficients_unpenalized(self, basis_pair):
        _, decomp = basis_pair
        ones = np.ones(10)
        assert abs(ones @ decomp.penalty @ ones) < 1e-12

    def test_random_block_penalty_is_identity(self, basis_pair, rng):
        _, decomp = basis_pair
        c_r = rng.normal(size=decomp.d_random)
        b = decomp.random_transform @ c_r
        assert abs(b @ decomp.penalty @ b - c_r @ c_r) < 1e-10 * (1 + c_r @ c_r)

    def test_fixed_block_penalty_is_zero(self, basis_pair, rng):
        _, decomp = basis_pair
        c_f = rng.normal(size=decomp.d_fixed)
        b = decomp.fixed_transform @ c_f
        assert abs(b @ decomp.penalty @ b) < 1e-12

    @given(seed=st.integers(0, 2**31))
    @settings(max_examples=25, deadline=None)
    def test_penalty_value_invariant_under_reparameterization(self, seed):
        rng = np.random.default_rng(seed)
        _, decomp = build_basis(rng.uniform(0.1, 10, 60), dim=9)
        c_f = rng.normal(size=decomp.d_fixed)
        c_r = rng.normal(size=decomp.d_random)
        b = decomp.to_raw(c_f, c_r)
        assert abs(b @ decomp.penalty @ b - c_r @ c_r) < 1e-9 * (1 + c_r @ c_r)

    def test_transforms_full_rank(self, basis_pair):
        _, decomp = basis_pair
        full = np.hstack([decomp.fixed_transform, decomp.random_transform])
        assert np.linalg.matrix_rank(full) == 10


class TestEvaluation:
    def test_partition_of_unity(self, basis_pair):
        sb, _ = basis_pair
        t = np.linspace(0, sb.upper, 200)
        np.testing.assert_allclose(raw_design(sb, t).sum(axis=1), 1.0, atol=1e-12)

    def test_evaluation_is_deterministic(self, basis_pair):
        sb, decomp = basis_pair
        t = np.array([0.3, 1.7, 4.2])
        f1, r1 = evaluate_basis(sb, decomp, t)
        f2, r2 = evaluate_basis(sb, decomp, t)
        np.testing.assert_array_equal(f1, f2)
        np.testing.assert_array_equal(r1, r2)

    def test_clamping_beyond_boundary(self, basis_pair):
        sb, decomp = basis_pair
        inside = evaluate_basis(sb, decomp, np.array([sb.upper]))
        beyond = evaluate_basis(sb, decomp, np.array([sb.upper * 3]))
        np.testing.assert_array_equal(inside[0], beyond[0])
        np.testing.assert_array_equal(inside[1], beyond[1])

    def test_affine_functions_live_in_fixed_block(self, basis_pair):
        sb, decomp = basis_pair
        t = np.linspace(0, sb.upper, 97)
        fixed, _ = evaluate_basis(sb, decomp, t)
        target = 0.37 - 0.21 * t
        coef, *_ = np.linalg.lstsq(fixed, target, rcond=None)
        assert np.abs(fixed @ coef - target).max() < 1e-10

    def test_prediction_invariant_under_decomposition(self, basis_pair, rng):
        sb, decomp = basis_pair
        t = np.linspace(0, sb.upper, 50)
        raw_coef = rng.normal(size=10)
        c_f, c_r = decomp.from_raw(raw_coef)
        fixed, random = evaluate_basis(sb, decomp, t)
        pred_raw = raw_design(sb, t) @ raw_coef
        pred_dec = fixed @ c_f + random @ c_r
        np.testing.assert_allclose(pred_raw, pred_dec, atol=1e-10)
