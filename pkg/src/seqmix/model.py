"""Problem definition for learning on sequences of Gaussian-mixture tokens.

A sample is a length-L sequence of d-dimensional tokens; token ell is drawn
from a K_ell-cluster Gaussian mixture, and the joint cluster assignment
c = (c_1, ..., c_L) follows an arbitrary discrete law.  All covariances share
one eigenbasis, so in the large-d limit the data is summarized by a discrete
spectral measure over (eigenvalue gamma, scaled mean projection tau, teacher
projection pi) triples.  Trained weights are described by per-(token, cluster)
overlap matrices; this module holds those types plus the pluggable loss
interface consumed by the solver, the message-passing simulators and the
gradient-descent lab.

Index convention: tokens and clusters are 0-based, maps over (ell, k) are
total, and iteration order is row-major in (ell, k).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SpecValidationError

Key = tuple[int, int]

# Tolerances used by structural invariants.
PROB_TOL = 1e-12
SYM_TOL = 1e-10
SCHUR_TOL = 1e-8


@dataclass(frozen=True)
class Dimensions:
    """Static sizes and scalar knobs of one problem instance.

    L: sequence length, r/t: student/teacher hidden units, K: clusters per
    token, alpha: sample complexity n/d, lam: l2 regularization strength.
    d is only used by finite-dimensional modules (dataset generation, ERM).
    """

    L: int
    r: int
    t: int
    K: tuple[int, ...]
    alpha: float
    lam: float
    d: Optional[int] = None

    def lk_pairs(self) -> list[Key]:
        """All (token, cluster) keys in row-major order."""
        return [(ell, k) for ell in range(self.L) for k in range(self.K[ell])]

    def violations(self) -> list[str]:
        out = []
        if self.L < 1 or self.r < 1 or self.t < 1:
            out.append("Dimensions: L, r, t must be positive")
        if len(self.K) != self.L:
            out.append("Dimensions: len(K) must equal L")
        if any(k < 1 for k in self.K):
            out.append("Dimensions: every K_ell must be >= 1")
        if not self.alpha > 0:
            out.append("Dimensions: alpha must be positive")
        if self.lam < 0:
            out.append("Dimensions: lambda must be nonnegative")
        if self.d is not None and self.d < 1:
            out.append("Dimensions: d must be positive when given")
        return out


@dataclass(frozen=True)
class ClassLaw:
    """Joint distribution of the per-token cluster assignments."""

    support: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    @staticmethod
    def single(c: tuple[int, ...]) -> "ClassLaw":
        return ClassLaw(support=(tuple(c),), probs=(1.0,))

    @staticmethod
    def uniform(support: list[tuple[int, ...]]) -> "ClassLaw":
        p = 1.0 / len(support)
        return ClassLaw(tuple(tuple(c) for c in support), tuple(p for _ in support))

    def violations(self, dims: Dimensions) -> list[str]:
        out = []
        if len(self.support) != len(self.probs):
            out.append("ClassLaw: support and probs lengths differ")
            return out
        if abs(sum(self.probs) - 1.0) > PROB_TOL:
            out.append(f"ClassLaw: probs sum to {sum(self.probs)!r}, not 1")
        if any(p < 0 for p in self.probs):
            out.append("ClassLaw: negative probability")
        for c in self.support:
            if len(c) != dims.L:
                out.append(f"ClassLaw: tuple {c} has wrong length")
            elif any(not (0 <= c[ell] < dims.K[ell]) for ell in range(dims.L)):
                out.append(f"ClassLaw: tuple {c} outside per-token cluster ranges")
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. class tuples, shape (n, L)."""
        idx = rng.choice(len(self.support), size=n, p=np.asarray(self.probs))
        return np.asarray(self.support)[idx]


@dataclass(frozen=True)
class SpectralAtom:
    """One atom of the joint spectral measure.

    gamma[(ell, k)] is a covariance eigenvalue, tau[(ell, k)] a sqrt(d)-scaled
    mean projection, pi the teacher projections on the shared eigenvector.
    """

    weight: float
    gamma: dict[Key, float]
    tau: dict[Key, float]
    pi: np.ndarray


@dataclass(frozen=True)
class SpectralMeasure:
    """Discrete joint law of (gamma, tau, pi) over the shared eigenbasis.

    A finite atom list is exact for finite-d instances and approximates any
    continuous measure by quadrature, so every spectral integral in the
    solver is a finite sum.
    """

    atoms: tuple[SpectralAtom, ...]

    def violations(self, dims: Dimensions) -> list[str]:
        out = []
        keys = set(dims.lk_pairs())
        total = sum(a.weight for a in self.atoms)
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"SpectralMeasure: weights sum to {total!r}, not 1")
        for i, a in enumerate(self.atoms):
            if a.weight < 0:
                out.append(f"SpectralMeasure: atom {i} has negative weight")
            if set(a.gamma) != keys or set(a.tau) != keys:
                out.append(f"SpectralMeasure: atom {i} keys do not match dimensions")
            elif any(g < 0 for g in a.gamma.values()):
                out.append(f"SpectralMeasure: atom {i} has negative eigenvalue")
            if np.shape(a.pi) != (dims.t,):
                out.append(f"SpectralMeasure: atom {i} pi has wrong shape")
        return out

    def mixed(self, other: "SpectralMeasure", w: float) -> "SpectralMeasure":
        """Convex combination w * self + (1 - w) * other."""
        atoms = [
            SpectralAtom(w * a.weight, a.gamma, a.tau, a.pi) for a in self.atoms
        ] + [
            SpectralAtom((1 - w) * a.weight, a.gamma, a.tau, a.pi)
            for a in other.atoms
        ]
        return SpectralMeasure(tuple(atoms))


def make_atom(
    dims: Dimensions,
    weight: float,
    gamma,
    tau=0.0,
    pi=0.0,
) -> SpectralAtom:
    """Build an atom from scalars, per-key dicts, or row-major sequences."""

    def as_map(x) -> dict[Key, float]:
        pairs = dims.lk_pairs()
        if isinstance(x, dict):
            return {k: float(x[k]) for k in pairs}
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        if arr.size == 1:
            return {k: float(arr[0]) for k in pairs}
        if arr.size != len(pairs):
            raise SpecValidationError(
                f"atom entry of size {arr.size} does not match {len(pairs)} (ell, k) keys"
            )
        return {k: float(arr[i]) for i, k in enumerate(pairs)}

    pi_vec = np.atleast_1d(np.asarray(pi, dtype=float))
    if pi_vec.size == 1 and dims.t > 1:
        pi_vec = np.full(dims.t, float(pi_vec[0]))
    if pi_vec.shape != (dims.t,):
        raise SpecValidationError(f"atom pi has shape {pi_vec.shape}, expected ({dims.t},)")
    return SpectralAtom(float(weight), as_map(gamma), as_map(tau), pi_vec)


@dataclass(frozen=True)
class FixedStatistics:
    """Teacher-side second moments: rho[(ell,k)] (t x t) and m_star[(ell,k)] (t,)."""

    rho: dict[Key, np.ndarray]
    m_star: dict[Key, np.ndarray]


def compute_fixed_statistics(nu: SpectralMeasure, dims: Dimensions) -> FixedStatistics:
    """Teacher overlaps and mean projections as atom sums over the measure.

    rho_{ell,k} = sum_a w_a gamma_a pi_a pi_a^T and
    m*_{ell,k}  = sum_a w_a tau_a pi_a; symmetry of rho holds by construction.
    """
    bad = nu.violations(dims)
    if bad:
        raise SpecValidationError("; ".join(bad))
    rho: dict[Key, np.ndarray] = {}
    m_star: dict[Key, np.ndarray] = {}
    for key in dims.lk_pairs():
        r_acc = np.zeros((dims.t, dims.t))
        m_acc = np.zeros(dims.t)
        for a in nu.atoms:
            outer = np.outer(a.pi, a.pi)
            r_acc += a.weight * a.gamma[key] * 0.5 * (outer + outer.T)
            m_acc += a.weight * a.tau[key] * a.pi
        rho[key] = r_acc
        m_star[key] = m_acc
    return FixedStatistics(rho=rho, m_star=m_star)


@dataclass
class OrderParameters:
    """RS overlaps: q, V, m, theta per (ell, k), plus the global v = w^T w / d.

    theta is stored r x t (student rows against teacher columns); transposes
    at use sites are explicit.
    """

    q: dict[Key, np.ndarray]
    V: dict[Key, np.ndarray]
    m: dict[Key, np.ndarray]
    theta: dict[Key, np.ndarray]
    v: np.ndarray

    def copy(self) -> "OrderParameters":
        return OrderParameters(
            q={k: a.copy() for k, a in self.q.items()},
            V={k: a.copy() for k, a in self.V.items()},
            m={k: a.copy() for k, a in self.m.items()},
            theta={k: a.copy() for k, a in self.theta.items()},
            v=self.v.copy(),
        )

    def blocks(self) -> dict[str, np.ndarray]:
        """Named flat view of every block, for residuals and reports."""
        out: dict[str, np.ndarray] = {}
        for key in sorted(self.q):
            ell, k = key
            out[f"q_{ell}_{k}"] = self.q[key]
            out[f"V_{ell}_{k}"] = self.V[key]
            out[f"m_{ell}_{k}"] = self.m[key]
            out[f"theta_{ell}_{k}"] = self.theta[key]
        out["v"] = self.v
        return out

    def max_asymmetry(self) -> float:
        worst = 0.0
        for blocks in (self.q, self.V):
            for a in blocks.values():
                worst = max(worst, float(np.max(np.abs(a - a.T))))
        worst = max(worst, float(np.max(np.abs(self.v - self.v.T))))
        return worst

    @staticmethod
    def cold(dims: Dimensions, eps: float = 1e-3) -> "OrderParameters":
        """Uninformed start: q = eps I, V = I, m = 0, theta = 0, v = eps I."""
        eye = np.eye(dims.r)
        return OrderParameters(
            q={key: eps * eye.copy() for key in dims.lk_pairs()},
            V={key: eye.copy() for key in dims.lk_pairs()},
            m={key: np.zeros(dims.r) for key in dims.lk_pairs()},
            theta={key: np.zeros((dims.r, dims.t)) for key in dims.lk_pairs()},
            v=eps * eye.copy(),
        )

    @staticmethod
    def gamp_matched(dims: Dimensions, nu: SpectralMeasure) -> "OrderParameters":
        """Start mirroring uninformed message passing: w_hat = 0, c_hat = I.

        q = m = theta = v = 0 and V_{ell,k} = (mean eigenvalue) I, which is
        what the first message-passing iteration sees before any update.
        """
        eye = np.eye(dims.r)
        V = {}
        for key in dims.lk_pairs():
            gbar = sum(a.weight * a.gamma[key] for a in nu.atoms)
            V[key] = gbar * eye.copy()
        return OrderParameters(
            q={key: np.zeros((dims.r, dims.r)) for key in dims.lk_pairs()},
            V=V,
            m={key: np.zeros(dims.r) for key in dims.lk_pairs()},
            theta={key: np.zeros((dims.r, dims.t)) for key in dims.lk_pairs()},
            v=np.zeros((dims.r, dims.r)),
        )

    @staticmethod
    def informed(dims: Dimensions, fixed: FixedStatistics, eps: float = 1e-3) -> "OrderParameters":
        """Teacher-seeded start (requires r == t): q = rho + eps I, theta = rho."""
        if dims.r != dims.t:
            raise SpecValidationError("informed init requires r == t")
        eye = np.eye(dims.r)
        return OrderParameters(
            q={key: fixed.rho[key] + eps * eye for key in dims.lk_pairs()},
            V={key: eye.copy() for key in dims.lk_pairs()},
            m={key: fixed.m_star[key].copy() for key in dims.lk_pairs()},
            theta={key: fixed.rho[key].copy() for key in dims.lk_pairs()},
            v=fixed.rho[dims.lk_pairs()[0]] + eps * eye,
        )


@dataclass
class ConjugateParameters:
    """Hatted (dual) parameters entering the spectral resolvent."""

    q_hat: dict[Key, np.ndarray]
    V_hat: dict[Key, np.ndarray]
    m_hat: dict[Key, np.ndarray]
    theta_hat: dict[Key, np.ndarray]
    v_hat: np.ndarray

    def copy(self) -> "ConjugateParameters":
        return ConjugateParameters(
            q_hat={k: a.copy() for k, a in self.q_hat.items()},
            V_hat={k: a.copy() for k, a in self.V_hat.items()},
            m_hat={k: a.copy() for k, a in self.m_hat.items()},
            theta_hat={k: a.copy() for k, a in self.theta_hat.items()},
            v_hat=self.v_hat.copy(),
        )

    def blocks(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for key in sorted(self.q_hat):
            ell, k = key
            out[f"q_hat_{ell}_{k}"] = self.q_hat[key]
            out[f"V_hat_{ell}_{k}"] = self.V_hat[key]
            out[f"m_hat_{ell}_{k}"] = self.m_hat[key]
            out[f"theta_hat_{ell}_{k}"] = self.theta_hat[key]
        out["v_hat"] = self.v_hat
        return out

    @staticmethod
    def zeros(dims: Dimensions) -> "ConjugateParameters":
        return ConjugateParameters(
            q_hat={key: np.zeros((dims.r, dims.r)) for key in dims.lk_pairs()},
            V_hat={key: np.zeros((dims.r, dims.r)) for key in dims.lk_pairs()},
            m_hat={key: np.zeros(dims.r) for key in dims.lk_pairs()},
            theta_hat={key: np.zeros((dims.r, dims.t)) for key in dims.lk_pairs()},
            v_hat=np.zeros((dims.r, dims.r)),
        )


@dataclass
class LossModel:
    """Behavioral loss interface: ell(Y, X, v, c) with its derivatives.

    Y is L x t (label-channel argument, teacher means included), X is L x r,
    v is the r x r weight self-overlap slot, c the class tuple.  grad_X and
    d3 are the exact partials used by the solver; test_eval is the metric
    reported as test error.  Optional hooks speed up or stabilize the inner
    prox solves; everything works from (eval, grad_X, d3) alone.
    """

    name: str
    eval: Callable[[np.ndarray, np.ndarray, np.ndarray, tuple], float]
    grad_X: Callable[[np.ndarray, np.ndarray, np.ndarray, tuple], np.ndarray]
    d3: Callable[[np.ndarray, np.ndarray, np.ndarray, tuple], np.ndarray]
    test_eval: Callable[[np.ndarray, np.ndarray, np.ndarray, tuple], float]
    depends_on_v: bool = False
    # False for losses that never read the label channel (e.g. mixture
    # classification, where supervision comes from the class tuple); the
    # solver then freezes theta_hat at zero and skips label sampling.
    depends_on_y: bool = True
    # False when test_eval is discontinuous (an indicator such as
    # misclassification): quadrature is unreliable there and the test-error
    # evaluation falls back to Monte Carlo.
    test_metric_smooth: bool = True
    # strong convexity in X keeps the spectral resolvent invertible at
    # lambda = 0; losses without it require a positive regularizer
    strongly_convex: bool = False
    hess_X: Optional[Callable] = None
    # True when hess_X does not depend on (Y, X): prox sensitivities are then
    # shared across expectation nodes.
    hess_is_constant: bool = False
    cross_XY: Optional[Callable] = None
    prox_closed_form: Optional[Callable] = None
    prox_closed_form_batch: Optional[Callable] = None
    eval_batch: Optional[Callable] = None
    grad_X_batch: Optional[Callable] = None
    test_eval_batch: Optional[Callable] = None
    params: dict = field(default_factory=dict)


@dataclass
class ModelSpec:
    """Complete problem instance handed to every pipeline entry point."""

    dims: Dimensions
    class_law: ClassLaw
    nu: SpectralMeasure
    loss: LossModel
    name: str = ""


def _finite_diff_grad(f, X: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(X, dtype=float)
    it = np.nditer(X, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        Xp = X.copy()
        Xm = X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        g[idx] = (f(Xp) - f(Xm)) / (2 * h)
        it.iternext()
    return g


def check_loss_gradients(
    loss: LossModel, dims: Dimensions, c: tuple, rng: np.random.Generator,
    rel_tol: float = 1e-5,
) -> list[str]:
    """Spot-check grad_X and d3 against central finite differences."""
    out = []
    Y = rng.standard_normal((dims.L, dims.t))
    X = 0.5 * rng.standard_normal((dims.L, dims.r))
    A = rng.standard_normal((dims.r, dims.r))
    v = 0.5 * np.eye(dims.r) + 0.05 * (A + A.T)

    g = loss.grad_X(Y, X, v, c)
    g_fd = _finite_diff_grad(lambda Z: loss.eval(Y, Z, v, c), X)
    scale = max(1.0, float(np.max(np.abs(g_fd))))
    if np.max(np.abs(g - g_fd)) > rel_tol * scale:
        out.append(f"LossModel {loss.name}: grad_X disagrees with finite differences")

    d3 = loss.d3(Y, X, v, c)
    if loss.depends_on_v:
        d3_fd = _finite_diff_grad(lambda vv: loss.eval(Y, X, 0.5 * (vv + vv.T), c), v)
        d3_fd = 0.5 * (d3_fd + d3_fd.T)
        scale = max(1.0, float(np.max(np.abs(d3_fd))))
        if np.max(np.abs(d3 - d3_fd)) > rel_tol * scale:
            out.append(f"LossModel {loss.name}: d3 disagrees with finite differences")
    else:
        if np.any(d3 != 0.0):
            out.append(f"LossModel {loss.name}: d3 must be identically zero when depends_on_v is false")
    return out


def validate_spec(spec: ModelSpec) -> list[str]:
    """Report-valued validation; the instance is runnable iff the list is empty."""
    out = spec.dims.violations()
    if out:
        return out
    out += spec.class_law.violations(spec.dims)
    out += spec.nu.violations(spec.dims)
    if not out:
        rng = np.random.default_rng(20240)
        c = spec.class_law.support[0]
        out += check_loss_gradients(spec.loss, spec.dims, c, rng)
    return out
