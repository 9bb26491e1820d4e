"""Gradient-descent baseline: training, test error, summary statistics."""

import numpy as np
import pytest

from seqmix.erm import empirical_test_error, erm_train, summary_statistics, TrainConfig
from seqmix.gamp import gamp_run, generate_dataset
from seqmix.model import compute_fixed_statistics
from seqmix.zoo import gmm_instance, ridge_instance


class TestErmTrain:
    def test_matches_ridge_normal_equations(self):
        spec = ridge_instance(alpha=1.5, lam=0.2)
        d, n = 60, 90
        data = generate_dataset(spec, spec.nu, d=d, n=n, seed=0)
        fit = erm_train(data, spec, config=TrainConfig(grad_tol=1e-10, max_epochs=20000))
        X = data.X[:, 0, :]
        w_exact = np.linalg.solve(
            X.T @ X / d + 0.2 * np.eye(d), X.T @ data.y[:, 0, 0] / np.sqrt(d)
        )
        np.testing.assert_allclose(fit.w_hat[:, 0], w_exact, atol=1e-8)

    def test_huge_regularizer_kills_weights(self):
        spec = ridge_instance(alpha=1.0, lam=1e6)
        data = generate_dataset(spec, spec.nu, d=40, n=40, seed=1)
        fit = erm_train(data, spec, config=TrainConfig(grad_tol=1e-9, step_size=1e-6))
        assert float(np.max(np.abs(fit.w_hat))) < 1e-3

    def test_monotone_objective(self):
        spec = gmm_instance(alpha=1.2, lam=0.05)
        data = generate_dataset(spec, spec.nu, d=80, n=96, seed=2)
        fit = erm_train(data, spec, config=TrainConfig(grad_tol=1e-6))
        diffs = np.diff(np.asarray(fit.objective_history))
        assert np.all(diffs <= 1e-12)

    def test_warm_start_is_faster(self):
        spec = gmm_instance(alpha=1.0, lam=0.05)
        data = generate_dataset(spec, spec.nu, d=100, n=100, seed=3)
        res = gamp_run(data, spec, max_iters=400, tol=1e-10, damping=0.0)
        cold = erm_train(data, spec, config=TrainConfig(grad_tol=1e-7))
        warm = erm_train(
            data, spec,
            config=TrainConfig(grad_tol=1e-7, init="warm", warm_start=res.w_hat),
        )
        assert warm.iterations < cold.iterations

    def test_gradient_at_solution_small(self):
        spec = gmm_instance(alpha=1.0, lam=0.05)
        data = generate_dataset(spec, spec.nu, d=60, n=60, seed=4)
        fit = erm_train(data, spec, config=TrainConfig(grad_tol=1e-8))
        assert fit.grad_norm <= 1e-8

    def test_inconsistent_gradient_stalls(self):
        from seqmix.errors import StalledError
        from seqmix.losses import zero_loss
        from seqmix.model import ModelSpec

        # flat objective with a fake nonzero gradient: no step ever passes
        # the decrease test, which must surface as a stall, not a hang
        liar = zero_loss()
        liar.eval_batch = None
        liar.grad_X_batch = None
        liar.grad_X = lambda Y, X, v, c: np.ones_like(X)
        spec = gmm_instance(lam=0.0)
        bad = ModelSpec(spec.dims, spec.class_law, spec.nu, liar)
        data = generate_dataset(bad, bad.nu, d=20, n=20, seed=5)
        with pytest.raises(StalledError):
            erm_train(data, bad, config=TrainConfig(grad_tol=1e-12))


class TestEmpiricalTestError:
    def test_teacher_weights_zero_error(self):
        spec = ridge_instance()
        data = generate_dataset(spec, spec.nu, d=64, n=16, seed=5)
        eg, se = empirical_test_error(data.teacher, data, spec, n_test=5000, seed=6)
        assert eg == pytest.approx(0.0, abs=1e-20)

    def test_zero_weights_label_variance(self):
        # square loss at w = 0: (1/2) E ||Y||^2 = (1/2) (tr rho + ||m*||^2)
        spec = ridge_instance()
        data = generate_dataset(spec, spec.nu, d=64, n=16, seed=7)
        eg, se = empirical_test_error(
            np.zeros((64, 1)), data, spec, n_test=400_000, seed=8
        )
        assert abs(eg - 0.5) <= 3.0 * se

    def test_stderr_positive(self):
        spec = gmm_instance()
        data = generate_dataset(spec, spec.nu, d=64, n=64, seed=9)
        rng = np.random.default_rng(10)
        eg, se = empirical_test_error(
            rng.standard_normal((64, 1)), data, spec, n_test=20_000, seed=11
        )
        assert 0.0 < eg < 1.0 and se > 0.0


class TestSummaryStatistics:
    def test_teacher_recovers_rho(self):
        spec = ridge_instance()
        data = generate_dataset(spec, spec.nu, d=100, n=10, seed=12)
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        stats = summary_statistics(data.teacher, data)
        np.testing.assert_allclose(stats["q"][(0, 0)], fixed.rho[(0, 0)], atol=1e-12)
        np.testing.assert_allclose(stats["theta"][(0, 0)], fixed.rho[(0, 0)], atol=1e-12)

    def test_zero_weights(self):
        spec = gmm_instance()
        data = generate_dataset(spec, spec.nu, d=100, n=10, seed=13)
        stats = summary_statistics(np.zeros((100, 1)), data)
        for key in spec.dims.lk_pairs():
            assert stats["q"][key][0, 0] == 0.0
            assert stats["m"][key][0] == 0.0

    def test_concentration_across_seeds(self):
        # trained statistics fluctuate at the 1/sqrt(d) scale across seeds
        spec = ridge_instance(alpha=1.0, lam=0.1)
        qs = []
        for seed in range(10):
            d = 1000
            data = generate_dataset(spec, spec.nu, d=d, n=d, seed=seed)
            X = data.X[:, 0, :]
            w = np.linalg.solve(
                X.T @ X / d + 0.1 * np.eye(d), X.T @ data.y[:, 0, 0] / np.sqrt(d)
            )
            qs.append(summary_statistics(w[:, None], data)["q"][(0, 0)][0, 0])
        assert float(np.std(qs)) <= 5.0 / np.sqrt(1000)
