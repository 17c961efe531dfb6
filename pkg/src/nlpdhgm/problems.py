"""Saddle-point problems ``min_x max_y G(x) + <K(x), y> - F*(y)``.

A problem supplies ``K``, the Jacobian action ``dK(x) h`` and its adjoint
``dK(x)^* w``, and the proximal maps of ``G`` and ``F*``.  Inner products
are diagonally weighted; ``x_weights``/``y_weights`` of ``None`` mean the
Euclidean product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .prox import prox_nonneg_linear, prox_scaled_quadratic

__all__ = [
    "PrimalDualPoint",
    "SaddleProblem",
    "CallableSaddleProblem",
    "ComplexToyProblem",
    "ToyReference",
    "DegenerateReferenceWarning",
    "toy_reference_solution",
    "ThreePointReport",
    "sample_three_point_condition",
    "adjoint_defect",
]


@dataclass
class PrimalDualPoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        self.y = np.array(self.y, dtype=float)

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(self.x.copy(), self.y.copy())

    def __sub__(self, other: "PrimalDualPoint") -> "PrimalDualPoint":
        return PrimalDualPoint(self.x - other.x, self.y - other.y)


class SaddleProblem:
    """Base class; subclasses implement the six maps below."""

    primal_dim: int
    dual_dim: int
    x_weights: np.ndarray | None = None
    y_weights: np.ndarray | None = None
    reference: PrimalDualPoint | None = None

    def apply_K(self, x):
        raise NotImplementedError

    def apply_dK(self, x, h):
        raise NotImplementedError

    def apply_dK_adjoint(self, x, w):
        raise NotImplementedError

    def prox_G(self, tau, v):
        raise NotImplementedError

    def prox_Fstar(self, sigma, v):
        raise NotImplementedError

    # weighted geometry

    def inner_x(self, a, b) -> float:
        if self.x_weights is None:
            return float(np.dot(a, b))
        return float(np.dot(self.x_weights * a, b))

    def inner_y(self, a, b) -> float:
        if self.y_weights is None:
            return float(np.dot(a, b))
        return float(np.dot(self.y_weights * a, b))

    def norm_sq_x(self, a) -> float:
        return self.inner_x(a, a)

    def norm_sq_y(self, a) -> float:
        return self.inner_y(a, a)

    def norm_sq(self, u: PrimalDualPoint) -> float:
        return self.norm_sq_x(u.x) + self.norm_sq_y(u.y)

    def check_point(self, u: PrimalDualPoint):
        if u.x.shape != (self.primal_dim,) or u.y.shape != (self.dual_dim,):
            raise ValueError(
                f"point has shapes x{u.x.shape}, y{u.y.shape}; problem expects "
                f"x({self.primal_dim},), y({self.dual_dim},)")


@dataclass
class CallableSaddleProblem(SaddleProblem):
    """Saddle problem assembled from plain functions."""

    primal_dim: int
    dual_dim: int
    K: Callable
    dK: Callable
    dK_adjoint: Callable
    proxG: Callable
    proxFstar: Callable
    x_weights: np.ndarray | None = None
    y_weights: np.ndarray | None = None
    reference: PrimalDualPoint | None = None

    def apply_K(self, x):
        return np.asarray(self.K(x), dtype=float)

    def apply_dK(self, x, h):
        return np.asarray(self.dK(x, h), dtype=float)

    def apply_dK_adjoint(self, x, w):
        return np.asarray(self.dK_adjoint(x, w), dtype=float)

    def prox_G(self, tau, v):
        return np.asarray(self.proxG(tau, v), dtype=float)

    def prox_Fstar(self, sigma, v):
        return np.asarray(self.proxFstar(sigma, v), dtype=float)


def adjoint_defect(problem: SaddleProblem, x, h, w) -> float:
    """``|<dK h, w> - <h, dK^* w>| / (1 + |<dK h, w>|)``."""
    lhs = problem.inner_y(problem.apply_dK(x, h), w)
    rhs = problem.inner_x(h, problem.apply_dK_adjoint(x, w))
    return abs(lhs - rhs) / (1.0 + abs(lhs))


# -- phase and amplitude of a complex number ---------------------------------


class DegenerateReferenceWarning(UserWarning):
    """The toy's stationary point has zero amplitude; its phase is not unique."""


@dataclass(frozen=True)
class ToyReference:
    point: PrimalDualPoint
    unique: bool
    residual: float


@dataclass
class ComplexToyProblem(SaddleProblem):
    """Recover ``t e^{i v}`` from data ``z`` with penalty ``alpha t`` on ``t >= 0``.

    Primal ``x = (t, v)``, dual ``y = (lam, mu)``, ``F*(y) = |y|^2 / 2``.
    """

    z: tuple[float, float] = (2.0, 0.0)
    alpha: float = 0.1
    primal_dim: int = field(default=2, init=False)
    dual_dim: int = field(default=2, init=False)
    reference: PrimalDualPoint | None = field(default=None, init=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        self.z = (float(self.z[0]), float(self.z[1]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateReferenceWarning)
            self.reference = toy_reference_solution(self.z, self.alpha).point

    def jacobian(self, x) -> np.ndarray:
        t, v = x
        c, s = np.cos(v), np.sin(v)
        return np.array([[c, -t * s], [s, t * c]])

    def apply_K(self, x):
        t, v = x
        return np.array([t * np.cos(v) - self.z[0], t * np.sin(v) - self.z[1]])

    def apply_dK(self, x, h):
        return self.jacobian(x) @ np.asarray(h, dtype=float)

    def apply_dK_adjoint(self, x, w):
        return self.jacobian(x).T @ np.asarray(w, dtype=float)

    def prox_G(self, tau, v):
        v = np.asarray(v, dtype=float)
        return np.array([prox_nonneg_linear(tau, self.alpha, v[0]), v[1]])

    def prox_Fstar(self, sigma, v):
        return prox_scaled_quadratic(sigma, v)


def _toy_residual(z, alpha, t, v, lam, mu) -> float:
    # 0 in H(u): y = K(x) for F* = |.|^2/2, and -dK(x)^* y in dG(x)
    r_dual = np.hypot(t * np.cos(v) - z[0] - lam, t * np.sin(v) - z[1] - mu)
    g_t = -(lam * np.cos(v) + mu * np.sin(v))
    r_t = abs(g_t - alpha) if t > 0 else max(0.0, g_t - alpha)
    r_v = abs(mu * t * np.cos(v) - lam * t * np.sin(v))
    return float(max(r_dual, r_t, r_v))


def toy_reference_solution(z, alpha: float) -> ToyReference:
    """Closed-form stationary point of the complex toy.

    For ``|z| > alpha``: ``t = |z| - alpha``, ``v = arg z``,
    ``(lam, mu) = -alpha (cos v, sin v)``.  Otherwise the amplitude is zero,
    the phase is taken as ``arg z`` and ``(lam, mu) = -z``; this branch is
    flagged non-unique and emits :class:`DegenerateReferenceWarning`.
    """
    z = (float(z[0]), float(z[1]))
    modulus = float(np.hypot(*z))
    v = float(np.arctan2(z[1], z[0]))
    if modulus > alpha:
        t = modulus - alpha
        lam, mu = -alpha * np.cos(v), -alpha * np.sin(v)
        unique = True
    else:
        t = 0.0
        lam, mu = -z[0], -z[1]
        unique = False
        warnings.warn(
            f"|z| = {modulus:g} <= alpha = {alpha:g}: zero amplitude, phase not unique",
            DegenerateReferenceWarning, stacklevel=2)
    residual = _toy_residual(z, alpha, t, v, lam, mu)
    if residual > 1e-10:
        raise ArithmeticError(f"reference residual {residual:.3e} exceeds 1e-10")
    return ToyReference(PrimalDualPoint([t, v], [lam, mu]), unique, residual)


@dataclass(frozen=True)
class ThreePointReport:
    n_samples: int
    violations: int
    worst_margin: float
    eps: float
    theta: float
    L: float


def sample_three_point_condition(problem: ComplexToyProblem, eps: float, theta: float,
                                 L: float, n_samples: int, seed: int = 0) -> ThreePointReport:
    """Sample the toy's three-point inequality on the ball ``B(x_hat, eps)``.

    Checks, for ``x, x'`` drawn uniformly from the ball,

        <[dK(x') - dK(x_hat)]^* y_hat, x - x_hat>
            >= theta |K(x_hat) - K(x) - dK(x)(x_hat - x)|^2 - L (v - v')^2

    and counts the pairs where it fails.  The margin is lhs - rhs.
    """
    ref = problem.reference
    x_hat, y_hat = ref.x, ref.y
    rng = np.random.default_rng(seed)

    def ball(n):
        r = eps * np.sqrt(rng.uniform(size=n))
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return x_hat + np.column_stack([r * np.cos(phi), r * np.sin(phi)])

    xs, xps = ball(n_samples), ball(n_samples)
    if n_samples > 0:
        xs[0] = xps[0] = x_hat

    J_hat = problem.jacobian(x_hat)
    K_hat = problem.apply_K(x_hat)
    margins = np.empty(n_samples)
    for k in range(n_samples):
        x, xp = xs[k], xps[k]
        lhs = (problem.jacobian(xp) - J_hat).T @ y_hat @ (x - x_hat)
        remainder = K_hat - problem.apply_K(x) - problem.jacobian(x) @ (x_hat - x)
        rhs = theta * remainder @ remainder - L * (x[1] - xp[1]) ** 2
        margins[k] = lhs - rhs
    # exact equality at x = x' = x_hat; tolerate rounding only
    tol = 1e-14
    violations = int(np.sum(margins < -tol))
    worst = float(margins.min()) if n_samples else 0.0
    return ThreePointReport(n_samples, violations, worst, eps, theta, L)
