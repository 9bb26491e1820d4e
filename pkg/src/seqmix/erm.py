"""Ground-truth baseline: full-batch gradient descent on the empirical risk.

Armijo backtracking, no momentum; the claims being verified concern critical
points of the risk, not optimizer trajectories, so the simplest monotone
method keeps the message-passing comparison clean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import StalledError
from .gamp import Dataset, empirical_risk_and_grad, empirical_statistics
from .model import LossModel, ModelSpec


@dataclass
class TrainConfig:
    step_size: float = 1.0            # initial trial step for backtracking
    backtracking: bool = True
    max_epochs: int = 5000
    grad_tol: float = 1e-7            # stop when ||grad||_inf falls below
    init: str = "zero"                # zero | gaussian | warm
    init_sigma: float = 1.0
    warm_start: Optional[np.ndarray] = None
    seed: int = 0

    def violations(self) -> list[str]:
        out = []
        if self.step_size <= 0:
            out.append("TrainConfig: step size must be positive")
        if self.grad_tol <= 0:
            out.append("TrainConfig: gradient threshold must be positive")
        if self.init not in ("zero", "gaussian", "warm"):
            out.append(f"TrainConfig: unknown init {self.init!r}")
        if self.init == "warm" and self.warm_start is None:
            out.append("TrainConfig: warm init requires warm_start")
        return out


@dataclass
class TrainResult:
    w_hat: np.ndarray
    train_loss_per_d: float           # R(w)/d including the regularizer
    grad_norm: float
    iterations: int
    objective_history: list


def erm_train(
    data: Dataset,
    spec: ModelSpec,
    loss: Optional[LossModel] = None,
    config: Optional[TrainConfig] = None,
) -> TrainResult:
    """Minimize the empirical risk by monotone full-batch gradient descent.

    Returns the iterate with ||grad||_inf <= grad_tol, or the best found.
    The reported loss is R(w)/d, the same per-dimension normalization the
    solver uses for its training-loss output.
    """
    config = config or TrainConfig()
    bad = config.violations()
    if bad:
        raise ValueError("; ".join(bad))
    loss = loss or spec.loss
    d = data.d
    r = spec.dims.r

    if config.init == "zero":
        w = np.zeros((d, r))
    elif config.init == "gaussian":
        rng = np.random.default_rng(config.seed)
        w = config.init_sigma * rng.standard_normal((d, r))
    else:
        w = config.warm_start.copy()

    obj, grad = empirical_risk_and_grad(w, data, spec, loss)
    history = [obj]
    step = config.step_size
    stalls = 0
    it = 0
    for it in range(1, config.max_epochs + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= config.grad_tol:
            break
        accepted = False
        t = step
        g2 = float(np.sum(grad * grad))
        for _ in range(60):
            w_new = w - t * grad
            obj_new, grad_new = empirical_risk_and_grad(w_new, data, spec, loss)
            if obj_new <= obj - 1e-4 * t * g2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stalls += 1
            if stalls >= 50:
                raise StalledError(
                    f"objective stuck at {obj:.6e} after {it} epochs "
                    f"(grad norm {gnorm:.3e})"
                )
            continue
        stalls = 0
        w, obj, grad = w_new, obj_new, grad_new
        history.append(obj)
        # gentle step growth so backtracking stays cheap
        step = min(2.0 * t, config.step_size * 16)
    return TrainResult(
        w_hat=w,
        train_loss_per_d=obj / d,
        grad_norm=float(np.max(np.abs(grad))),
        iterations=it,
        objective_history=history,
    )


def empirical_test_error(
    w_hat: np.ndarray,
    data: Dataset,
    spec: ModelSpec,
    loss_ts=None,
    loss_ts_batch=None,
    n_test: int = 200_000,
    seed: int = 1,
) -> tuple[float, float]:
    """Fresh-sample Monte Carlo estimate of the test metric, with stderr.

    Test tokens are drawn from the generator's declared population (the
    same means, covariance diagonals and teacher the train set realized).
    """
    loss = spec.loss
    if loss_ts is None:
        loss_ts = loss.test_eval
        loss_ts_batch = loss.test_eval_batch
    dims = spec.dims
    d = data.d
    sqd = np.sqrt(d)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E57]))
    c = spec.class_law.sample(rng, n_test)
    Z = np.empty((n_test, dims.L, dims.r))
    Y = np.empty((n_test, dims.L, dims.t))
    # project first: only the L x (r + t) channel of each token matters
    for ell in range(dims.L):
        for k in range(dims.K[ell]):
            mask = c[:, ell] == k
            if not np.any(mask):
                continue
            key = (ell, k)
            gam = data.meta.eigenvalues[key]
            mu = data.meta.means[key]
            nmask = int(mask.sum())
            g = rng.standard_normal((nmask, d))
            x = mu + g * np.sqrt(gam)
            Z[mask, ell, :] = x @ w_hat / sqd
            Y[mask, ell, :] = x @ data.teacher / sqd
    v = w_hat.T @ w_hat / d
    if loss_ts_batch is not None:
        vals = np.asarray(loss_ts_batch(Y, Z, v, c), dtype=float)
    else:
        vals = np.array([loss_ts(Y[s], Z[s], v, tuple(c[s])) for s in range(n_test)])
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_test))


def summary_statistics(w_hat: np.ndarray, data: Dataset) -> dict:
    """Exact quadratic forms of the weights against the declared population."""
    return empirical_statistics(w_hat, data)
