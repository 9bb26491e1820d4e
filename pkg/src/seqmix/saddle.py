"""Fixed-point solver for the overlap self-consistency equations.

One sweep alternates two closed blocks.  The hat update evaluates Gaussian
expectations of prox displacements under the conditional (Y, Xi) measure:

    q_hat = alpha E[delta V^-1 D D^T V^-1]         D = prox - q^{1/2} xi - m
    m_hat = alpha E[delta V^-1 D]
    theta_hat = alpha E[delta V^-1 D (y - theta^T q^{-1/2} xi)^T Schur^-1]
    V_hat = -alpha E[delta V^-1 (dprox/danchor - I)]
    v_hat = 2 alpha E[d3(Y + m*, prox, v, c)]

(the V_hat form above is the anchor-sensitivity one; the equivalent
Stein-lemma form theta_hat theta^T q^-1 - alpha E[V^-1 D xi^T q^{-1/2}] is
available via SolverConfig and cross-checked in tests -- the sensitivity form
stays well-posed when q is singular, e.g. at cold starts).

The overlap update is a finite sum over spectral atoms with resolvent
R = (lambda I + v_hat + sum gamma V_hat)^-1, source S = sum(m_hat tau +
gamma theta_hat pi) and kernel K = S S^T + sum gamma q_hat:

    V = int gamma R,  q = int gamma R K R,  m = int tau R S,
    theta = int gamma R S pi^T,  v = int R K R.

Run with time indices recorded, the same sweeps are the state-evolution
dynamics of the message-passing algorithm; run to self-consistency they
characterize the trained estimator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    SingularResolventError,
    SolverDivergenceError,
    SpecValidationError,
)
from .gaussian import (
    McPlan,
    energetic_nodes,
    joint_xy_nodes,
    pairwise_sum,
    psd_clip,
    sym_pinv,
    sym_pinv_sqrt,
    sym_sqrt,
    _weighted_mean_stderr,
)
from .model import (
    compute_fixed_statistics,
    ConjugateParameters,
    Dimensions,
    FixedStatistics,
    ModelSpec,
    OrderParameters,
    SpectralMeasure,
)
from .prox import ProxProblem, moreau_prox

DIVERGENCE_LIMIT = 1e6


@dataclass
class SolverConfig:
    """Iteration schedule for the fixed-point solve.

    damping keeps a fraction of the previous iterate:
    x_new = (1 - damping) x_proposed + damping x_old.  record_trajectory
    stores every (overlaps, hats) pair, which is the state-evolution reading
    of the sweeps (use damping = 0 there so the map matches the algorithm's
    dynamics exactly).
    """

    damping: float = 0.5
    init: str = "cold"              # cold | gamp | informed | warm
    warm_start: Optional[OrderParameters] = None
    eps_init: float = 1e-3
    tol: float = 1e-8
    max_iters: int = 500
    mc_plan: McPlan = field(default_factory=McPlan)
    record_trajectory: bool = False
    vhat_form: str = "jacobian"     # jacobian | stein

    def violations(self) -> list[str]:
        out = self.mc_plan.violations()
        if not (0.0 <= self.damping < 1.0):
            out.append("SolverConfig: damping must lie in [0, 1)")
        if self.tol <= 0:
            out.append("SolverConfig: tol must be positive")
        if self.init not in ("cold", "gamp", "informed", "warm"):
            out.append(f"SolverConfig: unknown init {self.init!r}")
        if self.init == "warm" and self.warm_start is None:
            out.append("SolverConfig: warm init requires warm_start")
        if self.vhat_form not in ("jacobian", "stein"):
            out.append(f"SolverConfig: unknown vhat_form {self.vhat_form!r}")
        return out


@dataclass
class FixedPointReport:
    params: OrderParameters
    conj: ConjugateParameters
    residual_history: list[float]
    iterations: int
    converged: bool
    free_entropy: float
    free_entropy_stderr: float
    test_error: float
    test_error_stderr: float
    train_loss: float
    train_loss_stderr: float
    trajectory: Optional[list[tuple[OrderParameters, ConjugateParameters]]] = None


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


# ----------------------------------------------------------------------
# Hat updates.
# ----------------------------------------------------------------------

def _solve_prox_nodes(
    spec: ModelSpec,
    params: OrderParameters,
    anchors: np.ndarray,
    y_loss: np.ndarray,
    c: tuple,
    P_full: np.ndarray,
    precision_blocks: list[np.ndarray],
) -> np.ndarray:
    """Prox minimizers at every node; batched when the loss allows it."""
    loss = spec.loss
    S = anchors.shape[0]
    if loss.prox_closed_form_batch is not None:
        cs = np.tile(np.asarray(c), (S, 1))
        return loss.prox_closed_form_batch(anchors, P_full, y_loss, params.v, cs)
    out = np.empty_like(anchors)
    for s in range(S):
        problem = ProxProblem(anchors[s], precision_blocks, y_loss[s], params.v, c)
        out[s] = moreau_prox(problem, loss).x_star
    return out


def _anchor_jacobian_blocks(
    spec: ModelSpec,
    params: OrderParameters,
    x_stars: np.ndarray,
    y_loss: np.ndarray,
    c: tuple,
    P_full: np.ndarray,
) -> np.ndarray:
    """Diagonal (ell, ell) r x r blocks of dprox/danchor per node, (S, L, r, r)."""
    loss = spec.loss
    S, L, r = x_stars.shape
    n = L * r

    def hess_at(s: int) -> np.ndarray:
        if loss.hess_X is not None:
            return np.asarray(loss.hess_X(y_loss[s], x_stars[s], params.v, c), dtype=float)
        h = 1e-6
        H = np.zeros((n, n))
        flat = x_stars[s].reshape(-1)
        for j in range(n):
            xp, xm = flat.copy(), flat.copy()
            xp[j] += h
            xm[j] -= h
            gp = loss.grad_X(y_loss[s], xp.reshape(L, r), params.v, c).reshape(-1)
            gm = loss.grad_X(y_loss[s], xm.reshape(L, r), params.v, c).reshape(-1)
            H[:, j] = (gp - gm) / (2 * h)
        return _sym(H)

    out = np.empty((S, L, r, r))
    if loss.hess_is_constant:
        J = np.linalg.solve(P_full + hess_at(0), P_full)
        for ell in range(L):
            blk = J[ell * r : (ell + 1) * r, ell * r : (ell + 1) * r]
            out[:, ell] = blk
        return out
    for s in range(S):
        J = np.linalg.solve(P_full + hess_at(s), P_full)
        for ell in range(L):
            out[s, ell] = J[ell * r : (ell + 1) * r, ell * r : (ell + 1) * r]
    return out


def update_hats(
    params: OrderParameters,
    fixed: FixedStatistics,
    spec: ModelSpec,
    plan: McPlan,
    iteration: int = 0,
    vhat_form: str = "jacobian",
) -> ConjugateParameters:
    """One hat sweep: class-weighted Gaussian expectations of prox statistics."""
    dims = spec.dims
    loss = spec.loss
    alpha = dims.alpha
    out = ConjugateParameters.zeros(dims)

    sqrt_q = {key: sym_sqrt(params.q[key]) for key in dims.lk_pairs()}
    pinv_sqrt_q = {key: sym_pinv_sqrt(params.q[key]) for key in dims.lk_pairs()}
    V_inv = {key: np.linalg.inv(params.V[key]) for key in dims.lk_pairs()}

    vhat_acc = np.zeros((dims.r, dims.r))
    for c_index, (c, pc) in enumerate(zip(spec.class_law.support, spec.class_law.probs)):
        if pc == 0.0:
            continue
        wts, Xi, Zeta, Y = energetic_nodes(
            params, fixed, c, plan, iteration=iteration, c_index=c_index,
            with_y=loss.depends_on_y,
        )
        S = len(wts)
        anchors = np.empty((S, dims.L, dims.r))
        for ell in range(dims.L):
            key = (ell, c[ell])
            anchors[:, ell, :] = Xi[:, ell, :] @ sqrt_q[key].T + params.m[key]
        m_star_c = np.stack([fixed.m_star[(ell, c[ell])] for ell in range(dims.L)])
        y_loss = Y + m_star_c

        blocks = [V_inv[(ell, c[ell])] for ell in range(dims.L)]
        P_full = np.zeros((dims.L * dims.r, dims.L * dims.r))
        for ell, blk in enumerate(blocks):
            P_full[ell * dims.r : (ell + 1) * dims.r, ell * dims.r : (ell + 1) * dims.r] = blk

        x_stars = _solve_prox_nodes(spec, params, anchors, y_loss, c, P_full, blocks)
        D = x_stars - anchors

        if vhat_form == "jacobian":
            J_blocks = _anchor_jacobian_blocks(spec, params, x_stars, y_loss, c, P_full)

        eye_r = np.eye(dims.r)
        for ell in range(dims.L):
            key = (ell, c[ell])
            Vinv = V_inv[key]
            VD = D[:, ell, :] @ Vinv.T
            w_col = wts[:, None]
            out.m_hat[key] += pc * pairwise_sum(w_col * VD)
            out.q_hat[key] += pc * pairwise_sum(
                wts[:, None, None] * np.einsum("si,sj->sij", VD, VD)
            )
            out.theta_hat[key] += pc * pairwise_sum(
                wts[:, None, None] * np.einsum("si,sj->sij", VD, Zeta[:, ell, :])
            )
            if vhat_form == "jacobian":
                avg_J = pairwise_sum(wts[:, None, None] * J_blocks[:, ell])
                out.V_hat[key] += pc * (Vinv @ (avg_J - pairwise_sum(wts) * eye_r))
            else:
                out.V_hat[key] += pc * pairwise_sum(
                    wts[:, None, None] * np.einsum("si,sj->sij", VD, Xi[:, ell, :])
                )
        if loss.depends_on_v:
            acc = np.zeros((dims.r, dims.r))
            for s in range(S):
                acc += wts[s] * np.asarray(
                    loss.d3(y_loss[s], x_stars[s], params.v, c), dtype=float
                )
            vhat_acc += pc * acc

    # scale, convert the theta channel through the Schur root, symmetrize
    for key in dims.lk_pairs():
        cond_scale = _schur_pinv_sqrt(params, fixed, key)
        out.m_hat[key] = alpha * out.m_hat[key]
        out.q_hat[key] = _sym(alpha * out.q_hat[key])
        out.theta_hat[key] = alpha * out.theta_hat[key] @ cond_scale
        if vhat_form == "jacobian":
            out.V_hat[key] = -alpha * out.V_hat[key]
        else:
            stein = alpha * out.V_hat[key] @ pinv_sqrt_q[key]
            out.V_hat[key] = (
                out.theta_hat[key] @ params.theta[key].T @ sym_pinv(params.q[key]) - stein
            )
    out.v_hat = _sym(2.0 * alpha * vhat_acc) if loss.depends_on_v else np.zeros_like(out.v_hat)
    return out


def _schur_pinv_sqrt(params: OrderParameters, fixed: FixedStatistics, key) -> np.ndarray:
    """pinv sqrt of rho - theta^T q^+ theta; zero when the channel is degenerate."""
    theta = params.theta[key]
    rho = fixed.rho[key]
    if np.max(np.abs(theta)) == 0.0:
        S = psd_clip(rho)
    else:
        S = psd_clip(rho - theta.T @ sym_pinv(params.q[key]) @ theta)
    return sym_pinv_sqrt(S)


# ----------------------------------------------------------------------
# Overlap updates (spectral integrals).
# ----------------------------------------------------------------------

@dataclass
class AtomKernels:
    weight: float
    gamma: dict
    tau: dict
    pi: np.ndarray
    R: np.ndarray
    S: np.ndarray
    K: np.ndarray


def spectral_kernels(
    conj: ConjugateParameters,
    nu: SpectralMeasure,
    dims: Dimensions,
    lam: float,
) -> list[AtomKernels]:
    """Resolvent, source and kernel at every atom of the measure."""
    out = []
    eye = np.eye(dims.r)
    for a_idx, atom in enumerate(nu.atoms):
        A = lam * eye + conj.v_hat.copy()
        for key in dims.lk_pairs():
            A = A + atom.gamma[key] * conj.V_hat[key]
        smin = np.linalg.svd(A, compute_uv=False)[-1]
        if smin < 1e-12:
            raise SingularResolventError(a_idx, float(smin))
        R = np.linalg.inv(A)
        S = np.zeros(dims.r)
        K = np.zeros((dims.r, dims.r))
        for key in dims.lk_pairs():
            S = S + conj.m_hat[key] * atom.tau[key] + atom.gamma[key] * (
                conj.theta_hat[key] @ atom.pi
            )
            K = K + atom.gamma[key] * conj.q_hat[key]
        K = K + np.outer(S, S)
        out.append(AtomKernels(atom.weight, atom.gamma, atom.tau, atom.pi, R, S, K))
    return out


def update_overlaps(
    conj: ConjugateParameters, nu: SpectralMeasure, spec: ModelSpec
) -> OrderParameters:
    """One overlap sweep: finite atom sums against the resolvent kernels."""
    dims = spec.dims
    kernels = spectral_kernels(conj, nu, dims, dims.lam)
    q = {key: np.zeros((dims.r, dims.r)) for key in dims.lk_pairs()}
    V = {key: np.zeros((dims.r, dims.r)) for key in dims.lk_pairs()}
    m = {key: np.zeros(dims.r) for key in dims.lk_pairs()}
    theta = {key: np.zeros((dims.r, dims.t)) for key in dims.lk_pairs()}
    v = np.zeros((dims.r, dims.r))
    for ker in kernels:
        RKR = ker.R @ ker.K @ ker.R
        RS = ker.R @ ker.S
        v = v + ker.weight * RKR
        for key in dims.lk_pairs():
            g = ker.gamma[key]
            V[key] += ker.weight * g * ker.R
            q[key] += ker.weight * g * RKR
            m[key] += ker.weight * ker.tau[key] * RS
            theta[key] += ker.weight * g * np.outer(RS, ker.pi)
    for key in dims.lk_pairs():
        q[key] = _sym(q[key])
        V[key] = _sym(V[key])
    return OrderParameters(q=q, V=V, m=m, theta=theta, v=_sym(v))


# ----------------------------------------------------------------------
# Scalar functionals of a (params, conj) pair.
# ----------------------------------------------------------------------

def expected_envelope(
    params: OrderParameters,
    fixed: FixedStatistics,
    spec: ModelSpec,
    plan: McPlan,
    iteration: int = 0,
) -> tuple[float, float]:
    """E_{c,Y,Xi} of the Moreau envelope value at the current overlaps."""
    dims = spec.dims
    loss = spec.loss
    sqrt_q = {key: sym_sqrt(params.q[key]) for key in dims.lk_pairs()}
    V_inv = {key: np.linalg.inv(params.V[key]) for key in dims.lk_pairs()}
    total = 0.0
    var = 0.0
    for c_index, (c, pc) in enumerate(zip(spec.class_law.support, spec.class_law.probs)):
        if pc == 0.0:
            continue
        wts, Xi, _, Y = energetic_nodes(
            params, fixed, c, plan, iteration=iteration, c_index=c_index,
            with_y=loss.depends_on_y,
        )
        S = len(wts)
        anchors = np.empty((S, dims.L, dims.r))
        for ell in range(dims.L):
            key = (ell, c[ell])
            anchors[:, ell, :] = Xi[:, ell, :] @ sqrt_q[key].T + params.m[key]
        m_star_c = np.stack([fixed.m_star[(ell, c[ell])] for ell in range(dims.L)])
        y_loss = Y + m_star_c
        blocks = [V_inv[(ell, c[ell])] for ell in range(dims.L)]
        P_full = np.zeros((dims.L * dims.r, dims.L * dims.r))
        for ell, blk in enumerate(blocks):
            P_full[ell * dims.r : (ell + 1) * dims.r, ell * dims.r : (ell + 1) * dims.r] = blk
        x_stars = _solve_prox_nodes(spec, params, anchors, y_loss, c, P_full, blocks)
        D = (x_stars - anchors).reshape(S, -1)
        quad = 0.5 * np.einsum("si,ij,sj->s", D, P_full, D)
        if loss.eval_batch is not None:
            cs = np.tile(np.asarray(c), (S, 1))
            vals = quad + loss.eval_batch(y_loss, x_stars, params.v, cs)
        else:
            vals = quad + np.array(
                [loss.eval(y_loss[s], x_stars[s], params.v, c) for s in range(S)]
            )
        mean_c, se_c = _weighted_mean_stderr(
            wts, vals[:, None], plan.antithetic, plan.gh_order > 0
        )
        total += pc * float(mean_c[0])
        var += (pc * float(se_c[0])) ** 2
    return total, float(np.sqrt(var))


def _trace_terms(params: OrderParameters, conj: ConjugateParameters) -> float:
    total = 0.0
    for key in params.q:
        total += 0.5 * float(
            np.trace(params.q[key] @ conj.V_hat[key].T)
            - np.trace(params.V[key] @ conj.q_hat[key].T)
        )
        total -= float(np.trace(params.theta[key] @ conj.theta_hat[key].T))
        total -= float(conj.m_hat[key] @ params.m[key])
    total += 0.5 * float(np.trace(params.v @ conj.v_hat))
    return total


def free_entropy(
    params: OrderParameters,
    conj: ConjugateParameters,
    fixed: FixedStatistics,
    nu: SpectralMeasure,
    spec: ModelSpec,
    plan: McPlan,
    envelope: Optional[tuple[float, float]] = None,
) -> tuple[float, float]:
    """Extremized low-dimensional functional; its negative is the training loss."""
    dims = spec.dims
    kernels = spectral_kernels(conj, nu, dims, dims.lam)
    spectral = 0.5 * sum(k.weight * float(np.trace(k.R @ k.K)) for k in kernels)
    em, se = envelope if envelope is not None else expected_envelope(params, fixed, spec, plan)
    value = _trace_terms(params, conj) + spectral - dims.alpha * em
    return value, dims.alpha * se


def train_loss(
    params: OrderParameters,
    conj: ConjugateParameters,
    fixed: FixedStatistics,
    nu: SpectralMeasure,
    spec: ModelSpec,
    plan: McPlan,
    envelope: Optional[tuple[float, float]] = None,
) -> tuple[float, float]:
    """Per-dimension training loss (regularizer included) at the fixed point."""
    dims = spec.dims
    kernels = spectral_kernels(conj, nu, dims, dims.lam)
    ridge_term = 0.5 * dims.lam * sum(
        k.weight * float(np.trace(k.R @ k.R @ k.K)) for k in kernels
    )
    hat_term = 0.5 * sum(
        float(np.trace(conj.q_hat[key] @ params.V[key])) for key in params.q
    )
    em, se = envelope if envelope is not None else expected_envelope(params, fixed, spec, plan)
    return ridge_term + dims.alpha * em - hat_term, dims.alpha * se


def test_error(
    params: OrderParameters,
    fixed: FixedStatistics,
    spec: ModelSpec,
    plan: McPlan,
    loss_ts=None,
    loss_ts_batch=None,
    iteration: int = 0,
) -> tuple[float, float]:
    """Class-weighted expectation of the test metric over the joint (X, Y) law.

    Quadrature plans are honored only for smooth metrics; indicator metrics
    (misclassification) are integrated by Monte Carlo regardless, since
    polynomial quadrature on a discontinuous integrand is unreliable.
    """
    loss = spec.loss
    if loss_ts is None:
        loss_ts = loss.test_eval
        loss_ts_batch = loss.test_eval_batch
        if plan.gh_order > 0 and not loss.test_metric_smooth:
            plan = replace(plan, gh_order=0)
    total = 0.0
    var = 0.0
    for c_index, (c, pc) in enumerate(zip(spec.class_law.support, spec.class_law.probs)):
        if pc == 0.0:
            continue
        wts, X, Y = joint_xy_nodes(
            params, fixed, c, plan, iteration=iteration, c_index=c_index
        )
        S = len(wts)
        if loss_ts_batch is not None:
            cs = np.tile(np.asarray(c), (S, 1))
            vals = np.asarray(loss_ts_batch(Y, X, params.v, cs), dtype=float)
        else:
            vals = np.array([loss_ts(Y[s], X[s], params.v, c) for s in range(S)])
        mean_c, se_c = _weighted_mean_stderr(
            wts, vals[:, None], plan.antithetic, plan.gh_order > 0
        )
        total += pc * float(mean_c[0])
        var += (pc * float(se_c[0])) ** 2
    return total, float(np.sqrt(var))


# ----------------------------------------------------------------------
# The fixed-point loop.
# ----------------------------------------------------------------------

def _damp_struct(new, old, eta: float):
    if eta == 0.0 or old is None:
        return new
    out = new.copy()
    for name in out.__dict__:
        nv = getattr(new, name)
        ov = getattr(old, name)
        if isinstance(nv, dict):
            setattr(out, name, {k: (1 - eta) * nv[k] + eta * ov[k] for k in nv})
        else:
            setattr(out, name, (1 - eta) * nv + eta * ov)
    return out


def _block_residual(new, old, skip: tuple[str, ...] = ()) -> float:
    worst = 0.0
    nb = new.blocks()
    ob = old.blocks()
    for name, arr in nb.items():
        if name in skip:
            continue
        delta = np.linalg.norm(arr - ob[name])
        worst = max(worst, float(delta / (1.0 + np.linalg.norm(ob[name]))))
    return worst


def _initial_params(spec: ModelSpec, nu: SpectralMeasure, fixed, config: SolverConfig):
    if config.init == "cold":
        return OrderParameters.cold(spec.dims, config.eps_init)
    if config.init == "gamp":
        return OrderParameters.gamp_matched(spec.dims, nu)
    if config.init == "informed":
        return OrderParameters.informed(spec.dims, fixed, config.eps_init)
    return config.warm_start.copy()


def solve_fixed_point(
    spec: ModelSpec, nu: SpectralMeasure, config: SolverConfig
) -> FixedPointReport:
    """Iterate hat and overlap sweeps to self-consistency.

    Hats go first (overlaps come from the initialization).  Convergence is
    declared on the raw (undamped) proposed change, relative per block.  The
    reported pair is the exact one-sweep image of the converged iterate, so
    identities that hold at exact fixed points hold for the report up to
    floating point.
    """
    bad = config.violations()
    if bad:
        raise ValueError("; ".join(bad))
    dims = spec.dims
    if dims.lam == 0.0:
        # the resolvent is lambda I + v_hat + sum gamma V_hat; without a
        # strongly convex loss nothing keeps it away from singular
        if not spec.loss.strongly_convex:
            raise SpecValidationError(
                f"lambda = 0 with loss {spec.loss.name!r}, which is not "
                "strongly convex; the spectral resolvent may be singular"
            )
        warnings.warn(
            "lambda = 0: resolvent invertibility rests on the loss curvature",
            stacklevel=2,
        )
    fixed = compute_fixed_statistics(nu, dims)
    plan = config.mc_plan
    skip = () if spec.loss.depends_on_v else ("v", "v_hat")

    params = _initial_params(spec, nu, fixed, config)
    # the first hat sweep is undamped: hats have no previous value, and
    # mixing toward zero would only inject a transient
    conj = None
    conj_ref = ConjugateParameters.zeros(dims)
    residual_history: list[float] = []
    trajectory = [] if config.record_trajectory else None
    converged = False
    it = 0

    for it in range(1, config.max_iters + 1):
        conj_prop = update_hats(
            params, fixed, spec, plan, iteration=it, vhat_form=config.vhat_form
        )
        res_hat = _block_residual(conj_prop, conj if conj is not None else conj_ref, skip=skip)
        conj = _damp_struct(conj_prop, conj, config.damping)

        params_prop = update_overlaps(conj, nu, spec)
        res_par = _block_residual(params_prop, params, skip=skip)
        params = _damp_struct(params_prop, params, config.damping)

        residual = max(res_hat, res_par)
        residual_history.append(residual)
        if trajectory is not None:
            trajectory.append((params.copy(), conj.copy()))
        if residual > DIVERGENCE_LIMIT or not np.isfinite(residual):
            raise SolverDivergenceError(residual, trajectory)
        if residual <= config.tol:
            converged = True
            break

    # exact one-sweep image: hats from the converged overlaps, overlaps from
    # those hats, undamped
    conj = update_hats(params, fixed, spec, plan, iteration=0, vhat_form=config.vhat_form)
    params = update_overlaps(conj, nu, spec)

    envelope = expected_envelope(params, fixed, spec, plan)
    phi, phi_se = free_entropy(params, conj, fixed, nu, spec, plan, envelope=envelope)
    et, et_se = train_loss(params, conj, fixed, nu, spec, plan, envelope=envelope)
    eg, eg_se = test_error(params, fixed, spec, plan)
    return FixedPointReport(
        params=params,
        conj=conj,
        residual_history=residual_history,
        iterations=it,
        converged=converged,
        free_entropy=phi,
        free_entropy_stderr=phi_se,
        test_error=eg,
        test_error_stderr=eg_se,
        train_loss=et,
        train_loss_stderr=et_se,
        trajectory=trajectory,
    )
