"""Gaussian machinery: matrix roots, samplers, expectation engine."""

import numpy as np
import pytest

from seqmix.errors import DegenerateOverlapError, McIntegrandError
from seqmix.gaussian import (
    expect_over_measure,
    gauss_hermite_nodes,
    McPlan,
    sample_energetic_measure,
    sample_joint_xy,
    standard_normals,
    sym_pinv_sqrt,
    sym_sqrt,
)
from seqmix.model import compute_fixed_statistics, OrderParameters
from seqmix.zoo import ridge_instance, two_token_instance


class TestSymSqrt:
    def test_diagonal(self):
        np.testing.assert_allclose(
            sym_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12
        )

    def test_identity(self):
        np.testing.assert_allclose(sym_sqrt(np.eye(3)), np.eye(3), atol=1e-12)

    def test_random_psd_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            M = rng.standard_normal((3, 3))
            A = M.T @ M
            B = sym_sqrt(A)
            assert np.linalg.norm(B @ B - A) <= 1e-9 * np.linalg.norm(A)

    def test_commutes_with_input(self):
        rng = np.random.default_rng(1)
        M = rng.standard_normal((4, 4))
        A = M.T @ M
        B = sym_sqrt(A)
        assert np.linalg.norm(A @ B - B @ A) <= 1e-9 * np.linalg.norm(A)

    def test_small_negative_clipped(self):
        A = np.diag([1.0, -0.5e-8])
        B = sym_sqrt(A)
        np.testing.assert_allclose(B, np.diag([1.0, 0.0]), atol=1e-12)

    def test_large_negative_raises(self):
        with pytest.raises(ValueError):
            sym_sqrt(np.diag([1.0, -1e-3]))

    def test_nonsymmetric_raises(self):
        with pytest.raises(ValueError):
            sym_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_pinv_sqrt_zeros_null_space(self):
        A = np.diag([4.0, 0.0])
        np.testing.assert_allclose(sym_pinv_sqrt(A), np.diag([0.5, 0.0]), atol=1e-12)


class TestStandardNormals:
    def test_determinism(self):
        plan = McPlan(n_samples=64, seed=9)
        a = standard_normals(plan, 0, 0, (2, 3))
        b = standard_normals(plan, 0, 5, (2, 3))  # crn: iteration ignored
        np.testing.assert_array_equal(a, b)

    def test_iteration_matters_without_crn(self):
        plan = McPlan(n_samples=64, seed=9, crn=False)
        a = standard_normals(plan, 0, 0, (2,))
        b = standard_normals(plan, 0, 1, (2,))
        assert not np.array_equal(a, b)

    def test_antithetic_pairing(self):
        plan = McPlan(n_samples=64, seed=9, antithetic=True)
        z = standard_normals(plan, 0, 0, (3,))
        np.testing.assert_array_equal(z[1::2], -z[0::2])

    def test_odd_antithetic_rejected(self):
        assert McPlan(n_samples=7, antithetic=True).violations()


class TestGaussHermite:
    def test_weights_normalized(self):
        w, x = gauss_hermite_nodes(3, 5)
        assert abs(w.sum() - 1.0) < 1e-12

    def test_quadratic_moments_exact(self):
        w, x = gauss_hermite_nodes(2, 4)
        np.testing.assert_allclose(w @ (x[:, 0] * x[:, 1]), 0.0, atol=1e-12)
        np.testing.assert_allclose(w @ (x[:, 0] ** 2), 1.0, atol=1e-12)

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            gauss_hermite_nodes(7, 3)


def _scalar_params(q, theta, m=0.0, V=1.0, v=0.0):
    return OrderParameters(
        q={(0, 0): np.array([[q]])},
        V={(0, 0): np.array([[V]])},
        m={(0, 0): np.array([m])},
        theta={(0, 0): np.array([[theta]])},
        v=np.array([[v]]),
    )


class TestEnergeticSampler:
    def setup_method(self):
        spec = ridge_instance()
        self.fixed = compute_fixed_statistics(spec.nu, spec.dims)

    def test_conditional_moments_scalar(self):
        # q = 1, theta = 0.5, rho = 1: mean 0.5 xi, variance 0.75
        params = _scalar_params(q=1.0, theta=0.5)
        plan = McPlan(n_samples=400_000, seed=4)
        Xi, Y = sample_energetic_measure(params, self.fixed, (0,), plan)
        xi = Xi[:, 0, 0]
        y = Y[:, 0, 0]
        slope = float(np.mean(xi * y) / np.mean(xi * xi))
        resid_var = float(np.var(y - 0.5 * xi))
        assert abs(slope - 0.5) < 3.0 * 2.0 / np.sqrt(len(xi))
        assert abs(resid_var - 0.75) < 3.0 * 2.0 / np.sqrt(len(xi))

    def test_theta_zero_decouples(self):
        params = _scalar_params(q=1.0, theta=0.0)
        plan = McPlan(n_samples=200_000, seed=5)
        Xi, Y = sample_energetic_measure(params, self.fixed, (0,), plan)
        corr = float(np.mean(Xi[:, 0, 0] * Y[:, 0, 0]))
        assert abs(corr) < 3.0 / np.sqrt(Xi.shape[0])
        assert abs(float(np.var(Y)) - 1.0) < 3.0 * 2.0 / np.sqrt(Xi.shape[0])

    def test_singular_q_theta_out_of_range(self):
        params = _scalar_params(q=0.0, theta=0.5)
        with pytest.raises(DegenerateOverlapError):
            sample_energetic_measure(params, self.fixed, (0,), McPlan(n_samples=8))

    def test_singular_q_theta_zero_falls_back(self):
        params = _scalar_params(q=0.0, theta=0.0)
        Xi, Y = sample_energetic_measure(
            params, self.fixed, (0,), McPlan(n_samples=200_000, seed=6)
        )
        assert abs(float(np.var(Y)) - 1.0) < 0.02

    def test_deterministic_streams(self):
        params = _scalar_params(q=0.8, theta=0.3)
        plan = McPlan(n_samples=128, seed=11)
        a = sample_energetic_measure(params, self.fixed, (0,), plan)
        b = sample_energetic_measure(params, self.fixed, (0,), plan)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestJointSampler:
    def setup_method(self):
        spec = ridge_instance()
        self.fixed = compute_fixed_statistics(spec.nu, spec.dims)

    def test_uncorrelated_when_theta_zero(self):
        params = _scalar_params(q=0.7, theta=0.0)
        X, Y = sample_joint_xy(
            params, self.fixed, (0,), McPlan(n_samples=400_000, seed=7)
        )
        n = X.shape[0]
        assert abs(float(np.mean(X[:, 0, 0] * Y[:, 0, 0]))) < 3.0 / np.sqrt(n)
        assert abs(float(np.var(X)) - 0.7) < 3.0 * 1.4 / np.sqrt(n)

    def test_perfect_correlation(self):
        params = _scalar_params(q=1.0, theta=1.0)
        X, Y = sample_joint_xy(
            params, self.fixed, (0,), McPlan(n_samples=10_000, seed=8)
        )
        np.testing.assert_allclose(X, Y, atol=1e-8)

    def test_cross_covariance_matches_theta(self):
        params = _scalar_params(q=1.0, theta=0.6)
        X, Y = sample_joint_xy(
            params, self.fixed, (0,), McPlan(n_samples=400_000, seed=9)
        )
        n = X.shape[0]
        cov = float(np.mean(X[:, 0, 0] * Y[:, 0, 0]))
        assert abs(cov - 0.6) < 3.0 * 2.0 / np.sqrt(n)


class TestExpectation:
    def setup_method(self):
        self.spec = ridge_instance()
        self.fixed = compute_fixed_statistics(self.spec.nu, self.spec.dims)
        self.params = _scalar_params(q=1.0, theta=0.0)

    def test_constant(self):
        val, se = expect_over_measure(
            lambda c, Xi, Y: 1.0, self.spec, self.params, self.fixed,
            McPlan(n_samples=512, seed=1),
        )
        assert val == pytest.approx(1.0)
        assert se == pytest.approx(0.0)

    def test_mean_zero_label(self):
        # antithetic pairing cancels the linear statistic exactly
        val, se = expect_over_measure(
            lambda c, Xi, Y: Y[0, 0], self.spec, self.params, self.fixed,
            McPlan(n_samples=100_000, seed=2),
        )
        assert abs(val) <= 3.0 * se + 1e-14

    def test_second_moment(self):
        val, se = expect_over_measure(
            lambda c, Xi, Y: Xi[0, 0] ** 2, self.spec, self.params, self.fixed,
            McPlan(n_samples=100_000, seed=3),
        )
        assert abs(val - 1.0) < 3.0 * max(se, 1e-6)

    def test_nonfinite_integrand_flagged(self):
        def bad(c, Xi, Y):
            return np.nan

        with pytest.raises(McIntegrandError):
            expect_over_measure(
                bad, self.spec, self.params, self.fixed, McPlan(n_samples=8, seed=4)
            )

    def test_stderr_scaling(self):
        # doubling the sample count shrinks stderr by sqrt(2) within 20%
        f = lambda c, Xi, Y: Xi[0, 0] ** 3 + Y[0, 0]
        _, se1 = expect_over_measure(
            f, self.spec, self.params, self.fixed,
            McPlan(n_samples=20_000, seed=5, antithetic=False),
        )
        _, se2 = expect_over_measure(
            f, self.spec, self.params, self.fixed,
            McPlan(n_samples=40_000, seed=5, antithetic=False),
        )
        ratio = float(se1 / se2)
        assert 0.8 * np.sqrt(2.0) <= ratio <= 1.2 * np.sqrt(2.0)

    def test_multitoken_support(self):
        spec = two_token_instance()
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.cold(spec.dims, eps=0.5)
        val, _ = expect_over_measure(
            lambda c, Xi, Y: np.array([Xi[0, 0] ** 2, Xi[1, 0] ** 2]),
            spec, params, fixed, McPlan(n_samples=50_000, seed=6),
        )
        np.testing.assert_allclose(val, [1.0, 1.0], atol=0.05)
