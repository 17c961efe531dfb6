"""Diagnostic suites shared by ``nlpdhgm check`` and the acceptance tests.

Each suite returns a :class:`CheckResult` carrying the measured quantity,
the threshold it is compared against, and a pass flag.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import pde
from .problems import ComplexToyProblem, PrimalDualPoint, sample_three_point_condition
from .prox import (
    prox_linf_ball,
    prox_linf_ball_moreau_yosida,
    prox_nonneg_linear,
    prox_scaled_quadratic,
    prox_state_constraint,
    prox_state_constraint_conjugate,
)
from .solver import (
    Accelerated,
    ConstantWeak,
    check_descent_inequality,
    solve,
    step_bound_report,
)

__all__ = [
    "CheckResult",
    "adjoint_check",
    "taylor_slope",
    "taylor_check",
    "constant_solution_check",
    "dense_oracle_check",
    "prox_checks",
    "descent_checks",
    "three_point_check",
    "run_all",
    "DI_VALID_RULES",
    "di_adversarial_rule",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(passed=bool(self.passed), value=float(self.value),
                   threshold=float(self.threshold))
        return out

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: value={self.value:.6g} threshold={self.threshold:.6g}"
        return f"{text} ({self.detail})" if self.detail else text


def _random_coefficient(rng, n, low=0.5, high=2.0):
    return rng.uniform(low, high, size=n)


# -- PDE operator --------------------------------------------------------------


def adjoint_check(n_trials: int = 100, mesh_n: int = 100, seed: int = 0,
                  tol: float = 1e-10) -> CheckResult:
    """Worst relative defect of ``<S'(x)h, w> = <h, S'(x)^* w>`` over random triples."""
    rng = np.random.default_rng(seed)
    mesh = pde.UniformMesh1D(-1.0, 1.0, mesh_n)
    xw, yw = pde.element_weights(mesh), pde.node_weights(mesh)
    worst = 0.0
    for _ in range(n_trials):
        x = _random_coefficient(rng, mesh.n_elements)
        h = rng.standard_normal(mesh.n_elements)
        w = rng.standard_normal(mesh.n_nodes)
        system = pde.assemble_system(mesh, x)
        z = pde.solve_state(mesh, x, system=system)
        lhs = np.dot(yw * pde.apply_dS(mesh, x, z, h, system=system), w)
        rhs = np.dot(xw * h, pde.apply_dS_adjoint(mesh, x, z, w, system=system))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return CheckResult("adjoint_identity", worst <= tol, worst, tol,
                       f"{n_trials} trials, mesh_n={mesh_n}")


def taylor_slope(F, dF, x, h, eps=(1e-2, 1e-3, 1e-4, 1e-5), norm=np.linalg.norm) -> float:
    """Log-log slope of ``||F(x + e h) - F(x) - e dF(x) h||`` against ``e``."""
    Fx, dFh = F(x), dF(x, h)
    eps = np.asarray(eps, dtype=float)
    rem = np.array([norm(F(x + e * h) - Fx - e * dFh) for e in eps])
    return float(np.polyfit(np.log(eps), np.log(rem), 1)[0])


def taylor_check(seed: int = 0, mesh_n: int = 100, threshold: float = 1.9) -> CheckResult:
    """Second-order Taylor remainder of ``S`` and of the toy ``K``."""
    rng = np.random.default_rng(seed)
    mesh = pde.UniformMesh1D(-1.0, 1.0, mesh_n)
    x = _random_coefficient(rng, mesh.n_elements)
    h = rng.standard_normal(mesh.n_elements)

    def S(v):
        return pde.solve_state(mesh, v)

    def dS(v, d):
        return pde.apply_dS(mesh, v, S(v), d)

    slope_S = taylor_slope(S, dS, x, h)
    toy = ComplexToyProblem()
    xt, ht = np.array([1.3, 0.4]), rng.standard_normal(2)
    slope_K = taylor_slope(toy.apply_K, toy.apply_dK, xt, ht)
    worst = min(slope_S, slope_K)
    return CheckResult("taylor_order", worst >= threshold, worst, threshold,
                       f"S slope {slope_S:.4f}, toy K slope {slope_K:.4f}")


def constant_solution_check(tol: float = 1e-12, mesh_n: int = 50) -> CheckResult:
    """Constant coefficient ``x`` and load ``f`` give the nodal solution ``f / x``."""
    mesh = pde.UniformMesh1D(-1.0, 1.0, mesh_n)
    worst = 0.0
    for xc, fc in [(1.0, 1.0), (2.0, 1.0), (0.5, 3.0), (7.0, -2.0), (1e-3, 1e-3)]:
        z = pde.solve_state(mesh, np.full(mesh.n_elements, xc), fc)
        worst = max(worst, float(np.max(np.abs(z - fc / xc)) / abs(fc / xc)))
    return CheckResult("constant_solution", worst <= tol, worst, tol)


def _dense_oracle_system(x, a=-1.0, b=1.0):
    # element-by-element assembly written out from the local 2x2 matrices
    n = len(x)
    h = (b - a) / n
    A = np.zeros((n + 1, n + 1))
    F = np.zeros(n + 1)
    for e in range(n):
        local = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h + x[e] * h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        A[e:e + 2, e:e + 2] += local
        F[e:e + 2] += h / 2.0
    return A, F


def dense_oracle_check(tol: float = 1e-12, seed: int = 0) -> CheckResult:
    """n = 4 tridiagonal solve against a dense LU solve of the same system."""
    rng = np.random.default_rng(seed)
    x = _random_coefficient(rng, 4)
    A, F = _dense_oracle_system(x)
    z_ref = np.linalg.solve(A, F)
    z = pde.solve_state(pde.UniformMesh1D(-1.0, 1.0, 4), x)
    err = float(np.max(np.abs(z - z_ref)) / np.max(np.abs(z_ref)))
    return CheckResult("dense_oracle_n4", err <= tol, err, tol)


# -- proximal maps ---------------------------------------------------------------


def _soft_threshold(w, t):
    return np.sign(w) * np.maximum(np.abs(w) - t, 0.0)


def prox_checks(n_points: int = 1000, seed: int = 0, tol: float = 1e-10) -> list[CheckResult]:
    """Moreau identity and variational residuals for the five prox maps.

    The Moreau identity ``prox_{sF*}(v) + s prox_{F/s}(v/s) = v`` is checked
    with an independent closed form for the primal-side prox.  The variational
    residual measures the distance of ``v - prox(v)`` to ``s dG(prox(v))``.
    """
    rng = np.random.default_rng(seed)
    v = 5.0 * rng.standard_normal(n_points)
    s = rng.uniform(0.05, 5.0, size=n_points)
    alpha = 0.7
    bound = 1.0 / alpha
    gamma = 0.6
    zd = rng.standard_normal(n_points)
    c = 0.3
    results = []

    def both(name, identity_defect, residual):
        worst = max(identity_defect, residual)
        results.append(CheckResult(f"prox_{name}", worst <= tol, worst, tol,
                                   f"moreau {identity_defect:.2e}, residual {residual:.2e}"))

    # 1/2 |.|^2 is self-conjugate
    p = prox_scaled_quadratic(s, v)
    ident = np.max(np.abs(p + s * (v / s) / (1.0 + 1.0 / s) - v))
    both("scaled_quadratic", ident, np.max(np.abs(v - p - s * p)))

    # G(t) = alpha t + indicator(t >= 0); G* = indicator(. <= alpha)
    p = prox_nonneg_linear(s, alpha, v)
    ident = np.max(np.abs(p + s * np.minimum(v / s, alpha) - v))
    g = v - p
    res = np.where(p > 0, np.abs(g - s * alpha), np.maximum(0.0, g - s * alpha))
    both("nonneg_linear", ident, np.max(res))

    # F = |.|/alpha and F* = indicator of the ball of radius 1/alpha
    p = np.array([prox_linf_ball(bound, vi) for vi in v])
    ident = np.max(np.abs(p + s * _soft_threshold(v / s, 1.0 / (alpha * s)) - v))
    g = v - p
    res = np.where(np.abs(p) < bound, np.abs(g),
                   np.where(p >= bound, np.maximum(0.0, -g), np.maximum(0.0, g)))
    both("linf_ball", ident, np.max(res))

    # F*_gamma = indicator + gamma/2 |.|^2, F_gamma = Moreau envelope of |.|/alpha
    p = np.array([prox_linf_ball_moreau_yosida(si, gamma, bound, vi) for si, vi in zip(s, v)])
    t = 1.0 / s
    w = v / s
    prox_env = w + t / (gamma + t) * (_soft_threshold(w, (gamma + t) / alpha) - w)
    ident = np.max(np.abs(p + s * prox_env - v))
    g = v - p - s * gamma * p
    res = np.where(np.abs(p) < bound, np.abs(g),
                   np.where(p >= bound, np.maximum(0.0, -g), np.maximum(0.0, g)))
    both("linf_ball_moreau_yosida", ident, np.max(res))

    # F(w) = |w - zd|^2/(2 alpha) + indicator(w <= c)
    p = np.array([prox_state_constraint_conjugate(si, alpha, c, zi, vi)
                  for si, zi, vi in zip(s, zd, v)])
    w = (v - p) / s
    ident = np.max(np.abs(p + s * prox_state_constraint(1.0 / s, alpha, c, zd, v / s) - v))
    # v - p in s dF*(p)  <=>  p in dF(w):  w <= c, p = (w - zd)/alpha if w < c, p >= (c - zd)/alpha if w = c
    scale = 1.0 + np.abs(v)
    active = np.abs(w - c) <= 1e-12 * scale
    res = np.where(active, np.maximum(0.0, (c - zd) / alpha - p),
                   np.abs(p - (w - zd) / alpha) + np.maximum(0.0, w - c))
    both("state_constraint_conjugate", ident, float(np.max(res / scale)))
    return results


# -- descent inequality ----------------------------------------------------------


# toy step rules that satisfy the step bounds of TOY_ANALYSIS with small
# (or zero) acceleration; the toy's G is only linear in t
DI_VALID_RULES = (
    ConstantWeak(0.1, 0.02),
    ConstantWeak(0.05, 0.05),
    Accelerated(0.02, 0.1, 0.01),
)


def di_adversarial_rule(params) -> ConstantWeak:
    """Constant steps with ``tau`` at ten times the primal step bound."""
    return ConstantWeak(10.0 * params.primal_step_bound(1.0), 0.001)


def descent_checks(n_iter: int = 1000, start=(1.0, 0.5)) -> list[CheckResult]:
    """Descent-inequality suite on the complex toy."""
    from .experiments import TOY_ANALYSIS

    problem = ComplexToyProblem()
    u0 = PrimalDualPoint(list(start), [0.0, 0.0])
    results = []
    for rule in DI_VALID_RULES:
        bounds = step_bound_report(TOY_ANALYSIS, rule.initial_state())
        run = solve(problem, u0, rule, n_iter, reference=problem.reference, params=TOY_ANALYSIS)
        report = check_descent_inequality(run.column("metric_err_sq"))
        n_bad = len(report.di_violations) + len(report.monotone_violations)
        results.append(CheckResult(
            f"descent_{rule.name}", bounds.passed and n_bad == 0, float(n_bad), 0.0,
            f"{rule}, bounds {'ok' if bounds.passed else 'violated: ' + ','.join(bounds.violated)}"))
    rule = di_adversarial_rule(TOY_ANALYSIS)
    run = solve(problem, u0, rule, n_iter, reference=problem.reference, params=TOY_ANALYSIS)
    report = check_descent_inequality(run.column("metric_err_sq"))
    n_bad = len(report.di_violations) + len(report.monotone_violations)
    results.append(CheckResult(
        "descent_adversarial_detected", n_bad >= 1, float(n_bad), 1.0,
        f"{rule}, first violation at {report.first_violation}"))
    return results


def three_point_check(n_samples: int = 10_000, eps: float = 1e-2, theta: float = 1.0,
                      L: float = 1.0, seed: int = 0) -> CheckResult:
    report = sample_three_point_condition(ComplexToyProblem((2.0, 0.0), 0.1), eps, theta, L,
                                          n_samples, seed)
    return CheckResult("three_point_condition", report.violations == 0, float(report.violations),
                       0.0, f"{n_samples} samples, worst margin {report.worst_margin:.3e}")


def run_all(seed: int = 0) -> list[CheckResult]:
    """Every suite, in a fixed order."""
    out = [adjoint_check(seed=seed), taylor_check(seed=seed), constant_solution_check(),
           dense_oracle_check(seed=seed)]
    out += prox_checks(seed=seed)
    out += descent_checks()
    out.append(three_point_check(seed=seed))
    return out
