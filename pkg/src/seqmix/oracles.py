"""Independent references for the ridge instance.

Two routes that never touch the fixed-point solver:

1. A scalar self-consistent equation from random-matrix theory.  For the
   sample covariance W = X^T X / d of n = alpha d isotropic rows, the
   normalized resolvent trace g = (1/d) Tr (W + lam)^-1 satisfies

       g = 1 / (lam + alpha / (1 + g)),

   solved here by bisection.  The ridge estimator w = (W + lam)^-1 W w*
   then has deterministic overlaps
       theta = rho (1 - lam g),
       q     = rho (1 - 2 lam g + lam^2 g2),    g2 = -dg/dlam,
   giving test error  (1/2)(rho - 2 theta + q) = (1/2) rho lam^2 g2  and
   per-dimension training loss  (lam / 2) theta.

2. Finite-d ridge via the normal equations, averaged over seeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import blas, cho_solve, cholesky


def resolvent_trace(alpha: float, lam: float, tol: float = 1e-14) -> float:
    """Bisection solve of g = 1 / (lam + alpha / (1 + g)) on g > 0."""
    if lam <= 0:
        raise ValueError("requires lam > 0")

    def F(g: float) -> float:
        return g * (lam + alpha / (1.0 + g)) - 1.0

    lo, hi = 0.0, 1.0 / lam
    # F(0) = -1 < 0 and F(1/lam) >= 0, so the root is bracketed
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * (1.0 + hi):
            break
    return 0.5 * (lo + hi)


@dataclass
class RidgeAsymptotics:
    alpha: float
    lam: float
    rho: float
    q: float
    theta: float
    test_error: float
    train_loss: float


def ridge_asymptotics(alpha: float, lam: float, rho: float = 1.0) -> RidgeAsymptotics:
    """Deterministic ridge overlaps and errors from the resolvent trace."""
    g = resolvent_trace(alpha, lam)
    # g2 = -dg/dlam by implicit differentiation of the self-consistency
    g2 = g**2 * (1.0 + g) ** 2 / ((1.0 + g) ** 2 - alpha * g**2)
    theta = rho * (1.0 - lam * g)
    q = rho * (1.0 - 2.0 * lam * g + lam**2 * g2)
    return RidgeAsymptotics(
        alpha=alpha,
        lam=lam,
        rho=rho,
        q=q,
        theta=theta,
        test_error=0.5 * rho * lam**2 * g2,
        train_loss=0.5 * lam * theta,
    )


def _one_ridge_fit(alpha: float, lam: float, d: int, seed: int) -> tuple[float, float]:
    # single precision: the fit enters a 3-sigma comparison at ~1e-3, far
    # above float32 roundoff, and the Gram work dominates the runtime
    n = int(round(alpha * d))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x41D6E]))
    X = rng.standard_normal((n, d), dtype=np.float32)
    w_star = np.ones(d, dtype=np.float32)
    y = X @ w_star / np.float32(np.sqrt(d))
    # Gram matrices via symmetric rank-k updates (half the flops of a full
    # product); the regularized systems are positive definite, so Cholesky
    if n <= d:
        # dual form: w = X^T (X X^T / d + lam I)^-1 y / sqrt(d)
        G = blas.ssyrk(1.0 / d, X, lower=1)
        G[np.diag_indices(n)] += lam
        w = X.T @ cho_solve((cholesky(G, lower=True), True), y) / np.sqrt(d)
    else:
        A = blas.ssyrk(1.0 / d, X, trans=1, lower=1)
        A[np.diag_indices(d)] += lam
        w = cho_solve((cholesky(A, lower=True), True), X.T @ y / np.sqrt(d))
    resid = (y - X @ w.astype(np.float32) / np.float32(np.sqrt(d))).astype(np.float64)
    w = w.astype(np.float64)
    eg = 0.5 * float(np.sum((w - 1.0) ** 2)) / d
    et = (0.5 * float(resid @ resid) + 0.5 * lam * float(w @ w)) / d
    return eg, et


def finite_d_ridge(
    alpha: float, lam: float, d: int, seeds: range | list[int]
) -> tuple[float, float, float, float]:
    """Exact-population test error and training loss of finite-d ridge fits.

    Returns (eg_mean, eg_stderr, et_mean, et_stderr) over the seeds.  The
    test error uses the population identity (1/2)||w - w*||^2 / d for
    isotropic covariance, so the only randomness is the train set.
    """
    pairs = [_one_ridge_fit(alpha, lam, d, s) for s in seeds]
    egs = np.asarray([p[0] for p in pairs])
    ets = np.asarray([p[1] for p in pairs])
    k = len(egs)
    return (
        float(egs.mean()),
        float(egs.std(ddof=1) / np.sqrt(k)),
        float(ets.mean()),
        float(ets.std(ddof=1) / np.sqrt(k)),
    )
