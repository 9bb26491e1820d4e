"""Moreau envelope evaluation and its minimizer.

The inner problem is

    min_X  (1/2) (X - anchor)^T P (X - anchor) + ell(Y, X, v, c)

with X an L x r matrix flattened to length Lr and P a positive-definite
precision, either block-diagonal per token or a full Lr x Lr block (the
message-passing variant).  The minimization is over X only; the v slot is a
constant and the loss's v-derivative is evaluated at the minimizer afterward.

The solver is damped Newton (Levenberg shift on the loss Hessian, Armijo
backtracking); losses that register a specialized prox take that path, with
an optional cross-check against the generic solver.  The problem is
low-dimensional and called millions of times, so second-order convergence
dominates runtime.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import LossBlowupError, ProxConvergenceError
from .model import LossModel

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100
FD_STEP = 1e-5

# When set, dispatching to a specialized prox also runs the generic Newton
# path and asserts agreement; used by the test suite.
DEBUG_CROSS_CHECK = bool(os.environ.get("SEQMIX_PROX_DEBUG", ""))


@dataclass
class ProxProblem:
    anchor: np.ndarray                                   # L x r
    precision: Union[np.ndarray, Sequence[np.ndarray]]   # full Lr x Lr or per-token r x r list
    y: np.ndarray                                        # L x t, passed to the loss as-is
    v: np.ndarray                                        # r x r constant slot
    c: tuple
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS

    def precision_full(self) -> np.ndarray:
        if isinstance(self.precision, np.ndarray) and self.precision.ndim == 2 \
                and self.precision.shape[0] == self.anchor.size:
            return self.precision
        L, r = self.anchor.shape
        P = np.zeros((L * r, L * r))
        for ell, block in enumerate(self.precision):
            P[ell * r : (ell + 1) * r, ell * r : (ell + 1) * r] = block
        return P

    def violations(self) -> list[str]:
        P = self.precision_full()
        out = []
        if np.max(np.abs(P - P.T)) > 1e-8 * (1.0 + np.max(np.abs(P))):
            out.append("ProxProblem: precision not symmetric")
        else:
            w = np.linalg.eigvalsh(0.5 * (P + P.T))
            if w.min() <= 1e-12:
                out.append("ProxProblem: precision not positive definite")
        return out


@dataclass
class ProxResult:
    x_star: np.ndarray        # L x r
    value: float              # envelope value at the minimizer
    grad_norm: float          # stationarity residual
    iterations: int = 0
    used_closed_form: bool = False
    fd_fallback: bool = False


def _objective(problem: ProxProblem, P: np.ndarray, loss: LossModel, X: np.ndarray) -> float:
    d = (X - problem.anchor).reshape(-1)
    val = 0.5 * float(d @ P @ d) + loss.eval(problem.y, X, problem.v, problem.c)
    if not np.isfinite(val):
        raise LossBlowupError(f"non-finite envelope objective at class {problem.c}")
    return val


def _residual(problem: ProxProblem, P: np.ndarray, loss: LossModel, X: np.ndarray) -> np.ndarray:
    d = (X - problem.anchor).reshape(-1)
    return P @ d + loss.grad_X(problem.y, X, problem.v, problem.c).reshape(-1)


def _loss_hessian(loss: LossModel, problem: ProxProblem, X: np.ndarray) -> np.ndarray:
    if loss.hess_X is not None:
        return np.asarray(loss.hess_X(problem.y, X, problem.v, problem.c), dtype=float)
    # central differences of grad_X; the problem dimension is tiny
    n = X.size
    H = np.zeros((n, n))
    h = 1e-6 * (1.0 + float(np.max(np.abs(X))))
    flat = X.reshape(-1)
    for j in range(n):
        xp = flat.copy()
        xm = flat.copy()
        xp[j] += h
        xm[j] -= h
        gp = loss.grad_X(problem.y, xp.reshape(X.shape), problem.v, problem.c).reshape(-1)
        gm = loss.grad_X(problem.y, xm.reshape(X.shape), problem.v, problem.c).reshape(-1)
        H[:, j] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def _newton(problem: ProxProblem, P: np.ndarray, loss: LossModel) -> ProxResult:
    X = problem.anchor.copy()
    shape = X.shape
    tol = problem.tol * (1.0 + float(np.linalg.norm(problem.anchor)))
    res = _residual(problem, P, loss, X)
    obj = _objective(problem, P, loss, X)
    mu = 0.0
    for it in range(problem.max_iters):
        rnorm = float(np.linalg.norm(res))
        if rnorm <= tol:
            return ProxResult(X, obj, rnorm, iterations=it)
        H = _loss_hessian(loss, problem, X)
        M = P + H + mu * np.eye(X.size)
        try:
            step = np.linalg.solve(M, -res)
        except np.linalg.LinAlgError:
            mu = max(10.0 * mu, 1e-6)
            continue
        # Armijo backtracking on the envelope objective
        t = 1.0
        accepted = False
        for _ in range(40):
            X_new = (X.reshape(-1) + t * step).reshape(shape)
            obj_new = _objective(problem, P, loss, X_new)
            if obj_new <= obj + 1e-4 * t * float(res @ step):
                accepted = True
                break
            t *= 0.5
        if accepted:
            X = X_new
            obj = obj_new
            res = _residual(problem, P, loss, X)
            mu = 0.1 * mu if mu > 1e-12 else 0.0
        else:
            # Hessian model is unreliable here; add curvature and retry
            mu = max(10.0 * mu, 1e-6 * (1.0 + float(np.trace(P)) / P.shape[0]))
            if mu > 1e12:
                break
    rnorm = float(np.linalg.norm(_residual(problem, P, loss, X)))
    if rnorm <= tol:
        return ProxResult(X, obj, rnorm, iterations=problem.max_iters)
    raise ProxConvergenceError(X, rnorm, problem.max_iters)


def moreau_prox(problem: ProxProblem, loss: LossModel) -> ProxResult:
    """Minimizer, envelope value, and stationarity residual.

    For convex losses the returned point is the global minimizer; the
    residual postcondition ||P (X - anchor) + grad ell|| <= tol (1 + ||anchor||)
    holds on every return.
    """
    P = problem.precision_full()
    if loss.prox_closed_form is not None:
        X = loss.prox_closed_form(problem.anchor, P, problem.y, problem.v, problem.c)
        res = float(np.linalg.norm(_residual(problem, P, loss, X)))
        out = ProxResult(
            X,
            _objective(problem, P, loss, X),
            res,
            used_closed_form=True,
        )
        if DEBUG_CROSS_CHECK:
            ref = _newton(problem, P, loss)
            if not np.allclose(ref.x_star, out.x_star, atol=1e-7, rtol=1e-7):
                raise AssertionError(
                    f"specialized prox of {loss.name!r} disagrees with the generic solver"
                )
        return out
    return _newton(problem, P, loss)


def gamp_resolvent(problem: ProxProblem, loss: LossModel) -> np.ndarray:
    """Minimizer under the full Lr x Lr quadratic form; same contract as
    moreau_prox, which it reproduces bit-for-bit on block-diagonal precision."""
    return moreau_prox(problem, loss).x_star


def _fd_jacobians(
    problem: ProxProblem, loss: LossModel, want_y: bool
) -> tuple[np.ndarray, np.ndarray]:
    n = problem.anchor.size
    m = problem.y.size
    J_w = np.zeros((n, n))
    for j in range(n):
        dp = problem.anchor.reshape(-1).copy()
        dm = dp.copy()
        dp[j] += FD_STEP
        dm[j] -= FD_STEP
        xp = moreau_prox(
            ProxProblem(dp.reshape(problem.anchor.shape), problem.precision,
                        problem.y, problem.v, problem.c, problem.tol,
                        problem.max_iters),
            loss,
        ).x_star
        xm = moreau_prox(
            ProxProblem(dm.reshape(problem.anchor.shape), problem.precision,
                        problem.y, problem.v, problem.c, problem.tol,
                        problem.max_iters),
            loss,
        ).x_star
        J_w[:, j] = (xp - xm).reshape(-1) / (2 * FD_STEP)
    J_y = np.zeros((n, m))
    if want_y:
        for j in range(m):
            yp = problem.y.reshape(-1).copy()
            ym = yp.copy()
            yp[j] += FD_STEP
            ym[j] -= FD_STEP
            xp = moreau_prox(
                ProxProblem(problem.anchor, problem.precision,
                            yp.reshape(problem.y.shape), problem.v, problem.c,
                            problem.tol, problem.max_iters),
                loss,
            ).x_star
            xm = moreau_prox(
                ProxProblem(problem.anchor, problem.precision,
                            ym.reshape(problem.y.shape), problem.v, problem.c,
                            problem.tol, problem.max_iters),
                loss,
            ).x_star
            J_y[:, j] = (xp - xm).reshape(-1) / (2 * FD_STEP)
    return J_w, J_y


def _cross_derivative(loss: LossModel, problem: ProxProblem, X: np.ndarray) -> np.ndarray:
    """d(grad_X)/dY at fixed X, flattened Lr x Lt."""
    if loss.cross_XY is not None:
        return np.asarray(loss.cross_XY(problem.y, X, problem.v, problem.c), dtype=float)
    if not loss.depends_on_y:
        return np.zeros((X.size, problem.y.size))
    m = problem.y.size
    C = np.zeros((X.size, m))
    h = 1e-6 * (1.0 + float(np.max(np.abs(problem.y))))
    flat = problem.y.reshape(-1)
    for j in range(m):
        yp = flat.copy()
        ym = flat.copy()
        yp[j] += h
        ym[j] -= h
        gp = loss.grad_X(yp.reshape(problem.y.shape), X, problem.v, problem.c).reshape(-1)
        gm = loss.grad_X(ym.reshape(problem.y.shape), X, problem.v, problem.c).reshape(-1)
        C[:, j] = (gp - gm) / (2 * h)
    return C


@dataclass
class ProxJacobians:
    d_anchor: np.ndarray      # Lr x Lr
    d_y: np.ndarray           # Lr x Lt
    fd_fallback: bool = False


def prox_jacobians(
    problem: ProxProblem, loss: LossModel, x_star: np.ndarray
) -> ProxJacobians:
    """Sensitivities of the minimizer to the anchor and to Y.

    Smooth losses use the implicit-function relations
        (P + H) dX/danchor = P,    (P + H) dX/dY = -d(grad ell)/dY;
    a singular system falls back to central differences of the prox map
    (step 1e-5) and flags the result.
    """
    P = problem.precision_full()
    want_y = loss.depends_on_y
    try:
        H = _loss_hessian(loss, problem, x_star)
        M = P + H
        J_w = np.linalg.solve(M, P)
        if want_y:
            J_y = np.linalg.solve(M, -_cross_derivative(loss, problem, x_star))
        else:
            J_y = np.zeros((x_star.size, problem.y.size))
        return ProxJacobians(J_w, J_y)
    except np.linalg.LinAlgError:
        J_w, J_y = _fd_jacobians(problem, loss, want_y)
        return ProxJacobians(J_w, J_y, fd_fallback=True)
