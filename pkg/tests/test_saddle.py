"""Fixed-point solver: sweep algebra, convergence, scalar functionals."""

import numpy as np
import pytest

from seqmix.gaussian import McPlan
from seqmix.model import (
    compute_fixed_statistics,
    ConjugateParameters,
    ModelSpec,
    OrderParameters,
)
from seqmix.losses import zero_loss
from seqmix.oracles import ridge_asymptotics
from seqmix.saddle import (
    expected_envelope,
    free_entropy,
    solve_fixed_point,
    SolverConfig,
    train_loss,
    update_hats,
    update_overlaps,
)
from seqmix.saddle import test_error as solver_test_error
from seqmix.zoo import gmm_instance, ridge_instance, two_token_instance


GH = McPlan(gh_order=7)


class TestUpdateHats:
    def test_zero_loss_gives_zero_hats(self):
        spec = ridge_instance()
        zspec = ModelSpec(spec.dims, spec.class_law, spec.nu, zero_loss())
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.cold(spec.dims, eps=0.3)
        conj = update_hats(params, fixed, zspec, GH)
        for key in spec.dims.lk_pairs():
            np.testing.assert_allclose(conj.q_hat[key], 0.0, atol=1e-12)
            np.testing.assert_allclose(conj.m_hat[key], 0.0, atol=1e-12)
            np.testing.assert_allclose(conj.theta_hat[key], 0.0, atol=1e-12)
            np.testing.assert_allclose(conj.V_hat[key], 0.0, atol=1e-12)
        np.testing.assert_allclose(conj.v_hat, 0.0, atol=1e-12)

    def test_alpha_zero_gives_zero_hats(self):
        spec = ridge_instance(alpha=1e-300)
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.cold(spec.dims, eps=0.3)
        conj = update_hats(params, fixed, spec, GH)
        for key in spec.dims.lk_pairs():
            assert abs(conj.q_hat[key][0, 0]) < 1e-290
            assert abs(conj.V_hat[key][0, 0]) < 1e-290

    def test_vhat_forms_agree_on_smooth_instance(self):
        # the anchor-sensitivity form and the Stein-lemma form are the same
        # expectation written two ways; with exact quadrature they coincide
        spec = ridge_instance(alpha=1.3)
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.informed(spec.dims, fixed, eps=0.4)
        a = update_hats(params, fixed, spec, GH, vhat_form="jacobian")
        b = update_hats(params, fixed, spec, GH, vhat_form="stein")
        for key in spec.dims.lk_pairs():
            np.testing.assert_allclose(a.V_hat[key], b.V_hat[key], atol=1e-10)
            np.testing.assert_allclose(a.q_hat[key], b.q_hat[key], atol=1e-12)

    def test_hats_symmetric(self):
        spec = two_token_instance()
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.informed(spec.dims, fixed, eps=0.3)
        conj = update_hats(params, fixed, spec, GH)
        for key in spec.dims.lk_pairs():
            assert np.max(np.abs(conj.q_hat[key] - conj.q_hat[key].T)) <= 1e-10
        assert np.max(np.abs(conj.v_hat - conj.v_hat.T)) <= 1e-10


class TestUpdateOverlaps:
    def test_single_atom_arithmetic(self):
        # lambda = 0.5, v_hat = 0, V_hat = 0.5, m_hat = 0, theta_hat = 0.2,
        # q_hat = 0.1 at a single unit-eigenvalue atom:
        # R = 1, S = 0.2, K = 0.14, so V = 1, q = 0.14, m = 0, theta = 0.2
        spec = ridge_instance(lam=0.5)
        conj = ConjugateParameters.zeros(spec.dims)
        conj.V_hat[(0, 0)] = np.array([[0.5]])
        conj.theta_hat[(0, 0)] = np.array([[0.2]])
        conj.q_hat[(0, 0)] = np.array([[0.1]])
        params = update_overlaps(conj, spec.nu, spec)
        assert params.V[(0, 0)][0, 0] == pytest.approx(1.0)
        assert params.q[(0, 0)][0, 0] == pytest.approx(0.14)
        assert params.m[(0, 0)][0] == pytest.approx(0.0)
        assert params.theta[(0, 0)][0, 0] == pytest.approx(0.2)
        assert params.v[0, 0] == pytest.approx(0.14)

    def test_all_hats_zero(self):
        spec = ridge_instance(lam=0.25)
        conj = ConjugateParameters.zeros(spec.dims)
        params = update_overlaps(conj, spec.nu, spec)
        assert params.q[(0, 0)][0, 0] == 0.0
        assert params.theta[(0, 0)][0, 0] == 0.0
        # V = mean eigenvalue / lambda
        assert params.V[(0, 0)][0, 0] == pytest.approx(1.0 / 0.25)

    def test_two_atom_measure_is_weighted_sum(self):
        spec = two_token_instance(lam=0.3)
        rng = np.random.default_rng(2)
        conj = ConjugateParameters.zeros(spec.dims)
        for key in spec.dims.lk_pairs():
            conj.q_hat[key] = np.array([[rng.uniform(0.1, 1.0)]])
            conj.V_hat[key] = np.array([[rng.uniform(0.1, 1.0)]])
            conj.m_hat[key] = rng.standard_normal(1)
            conj.theta_hat[key] = rng.standard_normal((1, 1))
        params = update_overlaps(conj, spec.nu, spec)

        # hand-coded per-atom closed form
        lam = spec.dims.lam
        expected_q = {key: 0.0 for key in spec.dims.lk_pairs()}
        for atom in spec.nu.atoms:
            denom = lam + sum(
                atom.gamma[key] * conj.V_hat[key][0, 0] for key in spec.dims.lk_pairs()
            )
            R = 1.0 / denom
            S = sum(
                conj.m_hat[key][0] * atom.tau[key]
                + atom.gamma[key] * conj.theta_hat[key][0, 0] * atom.pi[0]
                for key in spec.dims.lk_pairs()
            )
            K = S * S + sum(
                atom.gamma[key] * conj.q_hat[key][0, 0] for key in spec.dims.lk_pairs()
            )
            for key in spec.dims.lk_pairs():
                expected_q[key] += atom.weight * atom.gamma[key] * R * K * R
        for key in spec.dims.lk_pairs():
            assert params.q[key][0, 0] == pytest.approx(expected_q[key], abs=1e-12)


class TestSolveFixedPoint:
    def test_alpha_zero_converges_fast(self):
        spec = ridge_instance(alpha=1e-300)
        cfg = SolverConfig(damping=0.0, tol=1e-12, max_iters=10, mc_plan=GH)
        rep = solve_fixed_point(spec, spec.nu, cfg)
        assert rep.converged and rep.iterations <= 2
        assert abs(rep.conj.q_hat[(0, 0)][0, 0]) < 1e-200

    def test_ridge_matches_bisection_oracle(self):
        for alpha in (0.7, 1.5):
            spec = ridge_instance(alpha=alpha, lam=0.1)
            cfg = SolverConfig(damping=0.3, tol=1e-11, max_iters=800, mc_plan=GH)
            rep = solve_fixed_point(spec, spec.nu, cfg)
            oracle = ridge_asymptotics(alpha, 0.1)
            assert rep.converged
            assert rep.params.q[(0, 0)][0, 0] == pytest.approx(oracle.q, abs=1e-8)
            assert rep.params.theta[(0, 0)][0, 0] == pytest.approx(oracle.theta, abs=1e-8)
            assert rep.test_error == pytest.approx(oracle.test_error, abs=1e-8)

    def test_deterministic_with_crn(self):
        spec = gmm_instance(alpha=0.8)
        plan = McPlan(n_samples=2000, seed=77, crn=True)
        cfg = SolverConfig(damping=0.4, tol=1e-7, max_iters=400, mc_plan=plan)
        a = solve_fixed_point(spec, spec.nu, cfg)
        b = solve_fixed_point(spec, spec.nu, cfg)
        np.testing.assert_array_equal(a.params.q[(0, 0)], b.params.q[(0, 0)])
        assert a.residual_history == b.residual_history

    def test_symmetry_preserved(self):
        spec = two_token_instance()
        cfg = SolverConfig(damping=0.3, tol=1e-10, max_iters=500, mc_plan=GH)
        rep = solve_fixed_point(spec, spec.nu, cfg)
        assert rep.params.max_asymmetry() <= 1e-10

    def test_trajectory_recorded(self):
        spec = ridge_instance()
        cfg = SolverConfig(
            damping=0.0, tol=1e-14, max_iters=7, mc_plan=GH,
            init="gamp", record_trajectory=True,
        )
        rep = solve_fixed_point(spec, spec.nu, cfg)
        assert rep.trajectory is not None and len(rep.trajectory) == 7

    def test_converged_implies_residual_below_tol(self):
        spec = ridge_instance()
        cfg = SolverConfig(damping=0.3, tol=1e-9, max_iters=500, mc_plan=GH)
        rep = solve_fixed_point(spec, spec.nu, cfg)
        assert rep.converged and rep.residual_history[-1] <= 1e-9

    def test_lambda_zero_gate(self):
        from seqmix.errors import SpecValidationError

        # logistic curvature vanishes in the tails: reject at lambda = 0
        spec = gmm_instance(alpha=1.0, lam=0.0)
        cfg = SolverConfig(damping=0.3, tol=1e-8, max_iters=50,
                           mc_plan=McPlan(gh_order=31))
        with pytest.raises(SpecValidationError):
            solve_fixed_point(spec, spec.nu, cfg)
        # square loss is strongly convex: allowed, with a warning
        spec2 = ridge_instance(alpha=1.6, lam=0.0)
        cfg2 = SolverConfig(damping=0.3, tol=1e-9, max_iters=500, mc_plan=GH)
        with pytest.warns(UserWarning):
            rep = solve_fixed_point(spec2, spec2.nu, cfg2)
        assert rep.converged

    def test_informed_init_reaches_same_point(self):
        # convex instance: one basin, so the informed start must agree
        spec = ridge_instance(alpha=1.1, lam=0.2)
        cfg = SolverConfig(damping=0.3, tol=1e-11, max_iters=800, mc_plan=GH)
        cold = solve_fixed_point(spec, spec.nu, cfg)
        informed = solve_fixed_point(
            spec, spec.nu,
            SolverConfig(damping=0.3, tol=1e-11, max_iters=800, mc_plan=GH,
                         init="informed"),
        )
        np.testing.assert_allclose(
            cold.params.q[(0, 0)], informed.params.q[(0, 0)], atol=1e-8
        )

    def test_divergence_detected(self):
        from seqmix.errors import SolverDivergenceError
        from seqmix.model import ModelSpec

        # a prox that catapults the iterate makes every sweep amplify
        spec = ridge_instance()
        runaway = zero_loss()
        runaway.prox_closed_form = lambda a, P, Y, v, c: a + 1e4
        runaway.prox_closed_form_batch = None
        bad = ModelSpec(spec.dims, spec.class_law, spec.nu, runaway)
        cfg = SolverConfig(
            damping=0.0, tol=1e-12, max_iters=50, mc_plan=GH,
            record_trajectory=True,
        )
        with pytest.raises(SolverDivergenceError) as err:
            solve_fixed_point(bad, bad.nu, cfg)
        assert err.value.trajectory  # carries the prefix for diagnosis


class TestScalarFunctionals:
    def test_free_entropy_zero_for_zero_loss(self):
        spec = ridge_instance()
        zspec = ModelSpec(spec.dims, spec.class_law, spec.nu, zero_loss())
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.cold(spec.dims, eps=0.0)
        # q = v = 0, theta = m = 0, hats all zero
        conj = ConjugateParameters.zeros(spec.dims)
        phi, _ = free_entropy(params, conj, fixed, spec.nu, zspec, GH)
        assert phi == pytest.approx(0.0, abs=1e-14)

    def test_train_loss_zero_at_alpha_zero(self):
        spec = ridge_instance(alpha=1e-300)
        cfg = SolverConfig(damping=0.0, tol=1e-12, max_iters=10, mc_plan=GH)
        rep = solve_fixed_point(spec, spec.nu, cfg)
        assert abs(rep.train_loss) < 1e-250
        assert abs(rep.free_entropy) < 1e-250

    def test_identity_at_fixed_point(self):
        # the training loss equals the negative free entropy at fixed points
        for spec in (ridge_instance(alpha=1.4), gmm_instance(alpha=0.9)):
            gh = McPlan(gh_order=7 if spec.loss.depends_on_y else 31)
            cfg = SolverConfig(damping=0.3, tol=1e-10, max_iters=900, mc_plan=gh)
            rep = solve_fixed_point(spec, spec.nu, cfg)
            assert rep.converged
            assert abs(rep.train_loss + rep.free_entropy) <= 2.0 * (
                1e-10 + rep.train_loss_stderr + rep.free_entropy_stderr
            )

    def test_perfect_learning_test_error(self):
        # theta = q = rho, m = m*: the student channel equals the teacher
        spec = ridge_instance()
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.informed(spec.dims, fixed, eps=0.0)
        eg, se = solver_test_error(params, fixed, spec, McPlan(n_samples=20_000, seed=5))
        assert abs(eg) <= 3.0 * se + 1e-12

    def test_indicator_metric_never_quadratured(self):
        # polynomial quadrature on the misclassification indicator is
        # unreliable; a quadrature plan must fall back to Monte Carlo
        spec = gmm_instance(alpha=1.0, lam=0.05)
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        cfg = SolverConfig(damping=0.4, tol=1e-9, max_iters=600,
                           mc_plan=McPlan(gh_order=31))
        rep = solve_fixed_point(spec, spec.nu, cfg)
        mc = solver_test_error(
            rep.params, fixed, spec, McPlan(n_samples=400_000, seed=21)
        )
        gh = solver_test_error(
            rep.params, fixed, spec, McPlan(gh_order=31, n_samples=400_000, seed=21)
        )
        assert gh[1] > 0.0  # a Monte Carlo estimate, not a quadrature
        assert abs(gh[0] - mc[0]) <= 3.0 * np.hypot(gh[1], mc[1]) + 1e-12

    def test_constant_test_metric(self):
        spec = ridge_instance()
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        params = OrderParameters.cold(spec.dims)
        eg, se = solver_test_error(
            params, fixed, spec, McPlan(n_samples=512, seed=6),
            loss_ts=lambda Y, X, v, c: 1.0, loss_ts_batch=None,
        )
        assert eg == pytest.approx(1.0) and se == pytest.approx(0.0)

    def test_monotone_mc_refinement(self):
        # doubling the sample count moves the envelope by a few stderr
        spec = ridge_instance(alpha=1.2)
        cfg = SolverConfig(damping=0.3, tol=1e-10, max_iters=500, mc_plan=GH)
        rep = solve_fixed_point(spec, spec.nu, cfg)
        fixed = compute_fixed_statistics(spec.nu, spec.dims)
        em1, se1 = expected_envelope(
            rep.params, fixed, spec, McPlan(n_samples=20_000, seed=3)
        )
        em2, se2 = expected_envelope(
            rep.params, fixed, spec, McPlan(n_samples=40_000, seed=3)
        )
        pooled = np.hypot(se1, se2)
        assert abs(em1 - em2) <= 3.0 * pooled
