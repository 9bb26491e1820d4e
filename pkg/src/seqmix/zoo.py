"""Shipped problem instances.

Three families, each with an independent handle on correctness:
ridge regression (closed-form random-matrix oracle), binary Gaussian-mixture
classification (known phenomenology, convex losses), and a two-token
square-loss teacher-student with distinct token covariances (exercises the
token-summation paths).
"""

from __future__ import annotations

from .losses import (
    logistic_gmm_loss,
    square_gmm_loss,
    square_loss,
)
from .model import ClassLaw, Dimensions, ModelSpec, SpectralMeasure, make_atom


def ridge_instance(alpha: float = 1.0, lam: float = 0.1, d: int | None = None) -> ModelSpec:
    """Isotropic teacher-student square-loss regression, L = 1, K = 1, r = t = 1."""
    dims = Dimensions(L=1, r=1, t=1, K=(1,), alpha=alpha, lam=lam, d=d)
    nu = SpectralMeasure((make_atom(dims, 1.0, gamma=1.0, tau=0.0, pi=1.0),))
    return ModelSpec(
        dims=dims,
        class_law=ClassLaw.single((0,)),
        nu=nu,
        loss=square_loss(),
        name="ridge",
    )


def gmm_instance(
    alpha: float = 1.0,
    lam: float = 0.05,
    sigma2: float = 0.5,
    loss: str = "logistic",
    d: int | None = None,
) -> ModelSpec:
    """Binary classification of a symmetric mixture, means +-mu with ||mu|| = 1.

    Supervision is the cluster sign, so the instance carries no teacher
    (pi = 0); the mean projections are +-1 on every coordinate of the shared
    basis, which realizes ||mu|| = 1 at any d.
    """
    dims = Dimensions(L=1, r=1, t=1, K=(2,), alpha=alpha, lam=lam, d=d)
    nu = SpectralMeasure(
        (make_atom(dims, 1.0, gamma=[sigma2, sigma2], tau=[1.0, -1.0], pi=0.0),)
    )
    loss_model = logistic_gmm_loss() if loss == "logistic" else square_gmm_loss()
    return ModelSpec(
        dims=dims,
        class_law=ClassLaw.uniform([(0,), (1,)]),
        nu=nu,
        loss=loss_model,
        name=f"{loss}_gmm",
    )


def two_token_instance(
    alpha: float = 1.0, lam: float = 0.1, d: int | None = None
) -> ModelSpec:
    """Square-loss teacher-student on L = 2 tokens with distinct covariances.

    Token 0 is isotropic; token 1 has a two-atom spectrum {0.5, 1.5}.
    """
    dims = Dimensions(L=2, r=1, t=1, K=(1, 1), alpha=alpha, lam=lam, d=d)
    nu = SpectralMeasure(
        (
            make_atom(dims, 0.5, gamma=[1.0, 0.5], tau=0.0, pi=1.0),
            make_atom(dims, 0.5, gamma=[1.0, 1.5], tau=0.0, pi=1.0),
        )
    )
    return ModelSpec(
        dims=dims,
        class_law=ClassLaw.single((0, 0)),
        nu=nu,
        loss=square_loss(),
        name="two_token",
    )


INSTANCES = {
    "ridge": ridge_instance,
    "logistic_gmm": lambda **kw: gmm_instance(loss="logistic", **kw),
    "square_gmm": lambda **kw: gmm_instance(loss="square", **kw),
    "two_token": two_token_instance,
}


def instance_by_name(name: str, **kwargs) -> ModelSpec:
    if name not in INSTANCES:
        raise KeyError(f"unknown instance {name!r}; known: {sorted(INSTANCES)}")
    return INSTANCES[name](**kwargs)
