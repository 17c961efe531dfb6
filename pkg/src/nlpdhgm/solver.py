"""Exact NL-PDHGM iteration with scalar step-length rules and testing diagnostics.

One step from ``(x, y)`` with step state ``(tau, sigma, omega)``::

    x+    = prox_{tau G}(x - tau dK(x)^* y)
    xbar  = x+ + omega (x+ - x)
    y+    = prox_{sigma F*}(y + sigma K(xbar))

:class:`StepState` at iteration ``i`` stores the values used by step ``i``:
``tau = tau_i``, ``sigma = sigma_{i+1}``, ``omega = omega_i``, together with
the testing ledger ``phi = phi_i``, ``psi = psi_{i+1}``, ``eta = eta_i``.
The ledger satisfies ``phi tau = eta = psi sigma omega`` and defines the
local metric

    ||u||^2_{ZM} = phi ||x||^2 - 2 eta <dK(x_i) x, y> + psi ||y||^2.

The ledger never feeds back into the iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .problems import PrimalDualPoint, SaddleProblem

__all__ = [
    "StepState",
    "ConstantWeak",
    "Accelerated",
    "LinearRate",
    "StepRule",
    "AnalysisParams",
    "IterationRecord",
    "nlpdhgm_step",
    "advance_constant",
    "advance_accelerated",
    "advance_linear",
    "make_constant",
    "make_accelerated",
    "make_linear_rate",
    "ledger_defect",
    "metric_inner",
    "metric_norm_sq",
    "MetricValue",
    "DescentReport",
    "check_descent_inequality",
    "BoundCheck",
    "BoundReport",
    "step_bound_report",
    "SolveResult",
    "solve",
]

LEDGER_RTOL = 1e-12
BILINEAR_RTOL = 1e-10


@dataclass(frozen=True)
class StepState:
    tau: float
    sigma: float
    omega: float
    phi: float
    psi: float
    eta: float
    # sigma_i, the dual step of the previous iteration (sigma_i tau_i enters the step bound)
    sigma_prev: float
    iteration: int = 0

    def __post_init__(self):
        for name in ("tau", "sigma", "omega"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")


def ledger_defect(state: StepState) -> float:
    """Largest relative defect of ``phi tau = eta`` and ``psi sigma omega = eta``."""
    # divide first: the linear-rate ledger grows geometrically towards overflow
    return max(abs(state.phi / state.eta * state.tau - 1.0),
               abs(state.psi / state.eta * state.sigma * state.omega - 1.0))


# -- step-length rules ---------------------------------------------------------


def make_constant(tau: float, sigma: float) -> StepState:
    """Constant steps, ``omega = 1``, ledger ``phi = 1/tau``, ``psi = 1/sigma``."""
    return StepState(tau=tau, sigma=sigma, omega=1.0, phi=1.0 / tau, psi=1.0 / sigma,
                     eta=1.0, sigma_prev=sigma)


def advance_constant(state: StepState) -> StepState:
    return replace(state, iteration=state.iteration + 1)


def _accel_omega(tau, gamma):
    return 1.0 / math.sqrt(1.0 + 2.0 * tau * gamma)


def make_accelerated(tau0: float, sigma0: float, gammaG_tilde: float) -> StepState:
    """Initial state of the accelerated rule from ``(tau_0, sigma_0)``.

    ``omega_0 = 1/sqrt(1 + 2 tau_0 gamma)`` and the stored dual step is
    ``sigma_1 = sigma_0 / omega_0``.  Ledger: ``eta_i = sigma_i``,
    ``psi = 1``, ``phi_i = sigma_0 tau_0 / tau_i^2``.
    """
    if gammaG_tilde < 0:
        raise ValueError(f"gammaG_tilde must be nonnegative, got {gammaG_tilde}")
    omega = _accel_omega(tau0, gammaG_tilde)
    return StepState(tau=tau0, sigma=sigma0 / omega, omega=omega, phi=sigma0 / tau0,
                     psi=1.0, eta=sigma0, sigma_prev=sigma0)


def advance_accelerated(state: StepState, gammaG_tilde: float) -> StepState:
    """``tau <- tau omega``, ``sigma <- sigma / omega`` with a fresh ``omega``."""
    tau = state.tau * state.omega
    omega = _accel_omega(tau, gammaG_tilde)
    return StepState(
        tau=tau,
        sigma=state.sigma / omega,
        omega=omega,
        phi=state.phi * (1.0 + 2.0 * state.tau * gammaG_tilde),
        psi=state.psi,
        eta=state.eta / state.omega,
        sigma_prev=state.sigma,
        iteration=state.iteration + 1,
    )


def make_linear_rate(tau: float, gammaG_tilde: float, gammaFstar_tilde: float) -> StepState:
    """Constant steps for linear convergence.

    ``sigma = (gammaG/gammaF*) tau``, ``omega = 1/(1 + 2 gammaG tau)``;
    the ledger grows by ``1 + 2 gammaG tau`` per iteration.
    """
    for name, value in (("tau", tau), ("gammaG_tilde", gammaG_tilde),
                        ("gammaFstar_tilde", gammaFstar_tilde)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    sigma = gammaG_tilde / gammaFstar_tilde * tau
    growth = 1.0 + 2.0 * gammaG_tilde * tau
    return StepState(tau=tau, sigma=sigma, omega=1.0 / growth, phi=1.0 / tau,
                     psi=growth / sigma, eta=1.0, sigma_prev=sigma)


def advance_linear(state: StepState, gammaG_tilde: float) -> StepState:
    growth = 1.0 + 2.0 * gammaG_tilde * state.tau
    return replace(state, phi=state.phi * growth, psi=state.psi * growth,
                   eta=state.eta * growth, iteration=state.iteration + 1)


@dataclass(frozen=True)
class ConstantWeak:
    """Constant steps with ``omega = 1``.

    Weak convergence of this rule needs monotonicity and continuity
    properties of ``K`` that are not checked here; the rule simply runs.
    """

    tau: float
    sigma: float

    name = "constant"

    def initial_state(self) -> StepState:
        return make_constant(self.tau, self.sigma)

    def advance(self, state: StepState) -> StepState:
        return advance_constant(state)


@dataclass(frozen=True)
class Accelerated:
    tau0: float
    sigma0: float
    gammaG_tilde: float

    name = "accelerated"

    def initial_state(self) -> StepState:
        return make_accelerated(self.tau0, self.sigma0, self.gammaG_tilde)

    def advance(self, state: StepState) -> StepState:
        return advance_accelerated(state, self.gammaG_tilde)


@dataclass(frozen=True)
class LinearRate:
    tau: float
    gammaG_tilde: float
    gammaFstar_tilde: float

    name = "linear"

    @property
    def sigma(self) -> float:
        return self.gammaG_tilde / self.gammaFstar_tilde * self.tau

    @property
    def ratio(self) -> float:
        """Contraction factor ``(1 + 2 gammaG tau)^-1`` of the rate bound."""
        return 1.0 / (1.0 + 2.0 * self.gammaG_tilde * self.tau)

    def initial_state(self) -> StepState:
        return make_linear_rate(self.tau, self.gammaG_tilde, self.gammaFstar_tilde)

    def advance(self, state: StepState) -> StepState:
        return advance_linear(state, self.gammaG_tilde)


StepRule = ConstantWeak | Accelerated | LinearRate


# -- the iteration -------------------------------------------------------------


def nlpdhgm_step(problem: SaddleProblem, u: PrimalDualPoint, state: StepState):
    """One NL-PDHGM step.

    Returns
    -------
    u_next : PrimalDualPoint
    x_bar : ndarray
        The over-relaxed primal point at which ``K`` was evaluated.
    """
    problem.check_point(u)
    tau, sigma, omega = state.tau, state.sigma, state.omega
    x_next = problem.prox_G(tau, u.x - tau * problem.apply_dK_adjoint(u.x, u.y))
    x_bar = x_next + omega * (x_next - u.x)
    y_next = problem.prox_Fstar(sigma, u.y + sigma * problem.apply_K(x_bar))
    return PrimalDualPoint(x_next, y_next), x_bar


# -- local metric --------------------------------------------------------------


class MetricValue(NamedTuple):
    value: float
    coercive: bool | None


def metric_inner(problem: SaddleProblem, at: PrimalDualPoint, u: PrimalDualPoint,
                 v: PrimalDualPoint, state: StepState) -> float:
    """Bilinear form of ``Z_{i+1} M_{i+1}`` linearized at ``at.x``."""
    x_at = at.x
    cross = (problem.inner_y(problem.apply_dK(x_at, u.x), v.y)
             + problem.inner_y(problem.apply_dK(x_at, v.x), u.y))
    return (state.phi * problem.inner_x(u.x, v.x) - state.eta * cross
            + state.psi * problem.inner_y(u.y, v.y))


def metric_norm_sq(problem: SaddleProblem, at: PrimalDualPoint, u: PrimalDualPoint,
                   state: StepState, R_K: float | None = None) -> MetricValue:
    """``||u||^2_{ZM}``; may be negative when the step bounds fail.

    With ``R_K`` (a bound on ``||dK||``) the result also reports whether
    ``phi psi >= eta^2 R_K^2``, which makes the form positive semidefinite.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        value = (state.phi * problem.norm_sq_x(u.x)
                 - 2.0 * state.eta * problem.inner_y(problem.apply_dK(at.x, u.x), u.y)
                 + state.psi * problem.norm_sq_y(u.y))
    coercive = None
    if R_K is not None:
        coercive = bool(state.phi * state.psi >= (state.eta * R_K) ** 2)
    return MetricValue(float(value), coercive)


@dataclass(frozen=True)
class DescentReport:
    n: int
    di_violations: list[int]
    monotone_violations: list[int]
    max_excess: float

    @property
    def first_violation(self) -> int | None:
        both = self.di_violations + self.monotone_violations
        return min(both) if both else None

    @property
    def ok(self) -> bool:
        return not self.di_violations and not self.monotone_violations


def check_descent_inequality(values: Sequence[float], rtol: float = BILINEAR_RTOL) -> DescentReport:
    """Check a sequence of tested errors ``||u^i - u_hat||^2_{Z_{i+1}M_{i+1}}``.

    Two checks, both with absolute slack ``rtol * |values[0]|``:
    ``values[N] <= values[0]`` for every ``N`` (the descent inequality with
    nonpositive gaps), and ``values[N+1] <= values[N]`` (the same inequality
    restarted at every iterate).  Non-finite entries are skipped.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return DescentReport(0, [], [], 0.0)
    slack = rtol * abs(v[0])
    finite = np.isfinite(v)
    di = np.flatnonzero(finite & (v > v[0] + slack))
    step_ok = finite[1:] & finite[:-1]
    mono = np.flatnonzero(step_ok & (v[1:] > v[:-1] + slack)) + 1
    excess = 0.0
    if v.size > 1 and np.any(step_ok):
        excess = float(np.max(np.where(step_ok, v[1:] - v[:-1], -np.inf)))
    return DescentReport(int(v.size), di.tolist(), mono.tolist(), excess)


# -- step bounds ---------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisParams:
    """Problem constants entering the step bounds.

    ``L`` Lipschitz factor of ``dK``, ``R_K`` bound on ``||dK||``, ``rho_y``
    dual radius, ``lam`` the three-point factor; ``delta <= kappa < 1``.
    """

    L: float = 0.0
    R_K: float = 1.0
    rho_y: float = 0.0
    lam: float = 0.0
    theta: float = 0.0
    p: float = 2.0
    zeta: float = 1.0
    delta: float = 0.5
    kappa: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.delta <= self.kappa < 1.0:
            raise ValueError(f"need 0 <= delta <= kappa < 1, got delta={self.delta}, kappa={self.kappa}")
        if not 1.0 <= self.p <= 2.0:
            raise ValueError(f"p must lie in [1, 2], got {self.p}")
        if min(self.L, self.rho_y, self.lam, self.theta) < 0:
            raise ValueError("L, rho_y, lam and theta must be nonnegative")
        if not (self.R_K > 0 and self.zeta > 0):
            raise ValueError("R_K and zeta must be positive")

    def primal_step_bound(self, omega: float) -> float:
        denom = self.lam + (omega + 2.0) * self.L * self.rho_y
        return math.inf if denom == 0.0 else self.delta / denom

    def product_bound(self) -> float:
        return (1.0 - self.kappa) / self.R_K**2

    def linear_rate_tau_max(self, gammaG_tilde: float, gammaFstar_tilde: float) -> float:
        """Largest admissible constant ``tau`` for the linear-rate rule."""
        denom = 3.0 * self.L * self.rho_y + self.lam
        first = math.inf if denom == 0.0 else self.delta / denom
        second = math.sqrt((1.0 - self.kappa) * gammaFstar_tilde / gammaG_tilde) / self.R_K
        return min(first, second)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    value: float
    bound: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.bound - self.value


@dataclass(frozen=True)
class BoundReport:
    checks: list[BoundCheck]
    r_max: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violated(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violated": self.violated,
            "checks": {c.name: {"value": c.value, "bound": c.bound, "passed": c.passed,
                                "margin": c.margin} for c in self.checks},
            "r_max": self.r_max,
        }


def step_bound_report(params: AnalysisParams, state: StepState, *,
                      problem: SaddleProblem | None = None,
                      u0: PrimalDualPoint | None = None,
                      reference: PrimalDualPoint | None = None) -> BoundReport:
    """Evaluate ``tau_i <= delta/(lam + (omega_i+2) L rho_y)`` and
    ``sigma_i tau_i <= (1-kappa)/R_K^2``.

    When ``u0`` and ``reference`` are given, also computes the initial
    radius ``r_max = sqrt(2/delta (|x0-x_hat|^2 + |y0-y_hat|^2/mu))`` with
    ``mu = sigma_1 omega_0 / tau_0`` taken from ``state`` (pass the initial
    state).  Norms are those of ``problem`` if given, Euclidean otherwise.
    """
    tau_bound = params.primal_step_bound(state.omega)
    product = state.sigma_prev * state.tau
    prod_bound = params.product_bound()
    checks = [
        BoundCheck("primal_step", state.tau, tau_bound, bool(state.tau <= tau_bound)),
        BoundCheck("sigma_tau_product", product, prod_bound, bool(product <= prod_bound)),
    ]
    r_max = None
    if u0 is not None and reference is not None:
        d = u0 - reference
        if problem is not None:
            dx2, dy2 = problem.norm_sq_x(d.x), problem.norm_sq_y(d.y)
        else:
            dx2, dy2 = float(d.x @ d.x), float(d.y @ d.y)
        mu = state.sigma * state.omega / state.tau
        if params.delta == 0.0:
            r_max = 0.0 if dx2 + dy2 == 0.0 else math.inf
        else:
            r_max = math.sqrt(2.0 / params.delta * (dx2 + dy2 / mu))
    return BoundReport(checks, r_max)


# -- driver --------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    tau: float
    sigma: float
    omega: float
    err_x_sq: float
    err_u_sq: float
    metric_err_sq: float
    theoretical_bound: float


@dataclass
class SolveResult:
    u: PrimalDualPoint
    records: list[IterationRecord]
    state: StepState
    diverged: bool = False
    iterates: list[PrimalDualPoint] | None = field(default=None, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _theoretical_bound(rule, state, initial_metric, params):
    # tested-metric lower bound combined with the descent inequality
    if initial_metric is None or not np.isfinite(initial_metric):
        return math.nan
    delta, kappa = params.delta, params.kappa
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if isinstance(rule, Accelerated):
            return float(initial_metric / (delta * state.phi))
        lower = min(delta * state.phi, (kappa - delta) / (1.0 - delta) * state.psi)
        return float(initial_metric / lower) if lower > 0 else math.inf


def solve(problem: SaddleProblem, u0: PrimalDualPoint, rule: StepRule, n_iter: int, *,
          reference: PrimalDualPoint | None = None,
          params: AnalysisParams | None = None,
          divergence_threshold: float = 1e12,
          keep_iterates: bool = False,
          callback: Callable[[int, PrimalDualPoint, StepState], None] | None = None) -> SolveResult:
    """Run ``n_iter`` NL-PDHGM steps and record one :class:`IterationRecord` per iterate.

    Errors and metric values are ``nan`` without a reference.  The run stops
    early, flagged ``diverged``, once the squared error exceeds
    ``divergence_threshold`` or an iterate turns non-finite.
    """
    if n_iter < 0:
        raise ValueError(f"n_iter must be nonnegative, got {n_iter}")
    params = params or AnalysisParams()
    problem.check_point(u0)
    u = u0.copy()
    state = rule.initial_state()
    records = []
    iterates = [u.copy()] if keep_iterates else None
    initial_metric = None
    diverged = False

    def record(i, u, state):
        nonlocal initial_metric
        if reference is None:
            nan = math.nan
            records.append(IterationRecord(i, state.tau, state.sigma, state.omega,
                                           nan, nan, nan, nan))
            return nan
        d = u - reference
        ex = problem.norm_sq_x(d.x)
        eu = ex + problem.norm_sq_y(d.y)
        metric = metric_norm_sq(problem, u, d, state).value
        if initial_metric is None:
            initial_metric = metric
        bound = _theoretical_bound(rule, state, initial_metric, params)
        records.append(IterationRecord(i, state.tau, state.sigma, state.omega,
                                       ex, eu, metric, bound))
        return eu

    err = record(0, u, state)
    for i in range(n_iter):
        if callback is not None:
            callback(i, u, state)
        u, _ = nlpdhgm_step(problem, u, state)
        state = rule.advance(state)
        if keep_iterates:
            iterates.append(u.copy())
        err = record(i + 1, u, state)
        finite = np.all(np.isfinite(u.x)) and np.all(np.isfinite(u.y))
        if not finite or (np.isfinite(err) and err > divergence_threshold):
            diverged = True
            break
    return SolveResult(u, records, state, diverged, iterates)
