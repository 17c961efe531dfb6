"""PDE-constrained test problems, the complex toy, and rate analysis.

Both PDE problems use ``K(x) = S(x) - shift`` with ``S`` the potential-to-state
map of :mod:`nlpdhgm.pde`, ``G(x) = ||x||^2/2`` restricted to
``x >= coefficient_floor``, ground truth ``x_dag(t) = 2 - |t|``, ``f = 1``,
``x0 = 1`` and ``y0 = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import pde
from .problems import ComplexToyProblem, PrimalDualPoint, SaddleProblem
from .prox import (
    prox_conjugate_moreau_yosida,
    prox_linf_ball,
    prox_linf_ball_moreau_yosida,
    prox_state_constraint_conjugate,
)
from .solver import (
    Accelerated,
    AnalysisParams,
    BoundReport,
    ConstantWeak,
    IterationRecord,
    LinearRate,
    SolveResult,
    solve,
    step_bound_report,
)

__all__ = [
    "EXPERIMENTS",
    "RULES",
    "ExperimentConfig",
    "ConfigError",
    "PotentialProblem",
    "L1FitProblem",
    "StateConstraintProblem",
    "generate_ground_truth",
    "apply_impulsive_noise",
    "build_l1fit_problem",
    "build_state_constraint_problem",
    "build_problem",
    "make_rule",
    "initial_point",
    "lipschitz_scale",
    "analysis_params",
    "ExperimentResult",
    "run_experiment",
    "RateFit",
    "fit_power_rate",
    "fit_linear_rate",
    "DominanceReport",
    "linear_rate_dominance",
    "TOY_ANALYSIS",
]

EXPERIMENTS = ("l1fit", "state_constraint", "complex_toy")
RULES = ("constant", "accelerated", "linear")

DEFAULT_ALPHA = {"l1fit": 1e-2, "state_constraint": 1e-3, "complex_toy": 0.1}

# Toy constants near (t, v) = (1.9, 0): |dK| <= max(1, t) ~ 2 on the working
# region, the three-point factor L = 1 of the sampler gives lam = 2 L.
TOY_ANALYSIS = AnalysisParams(L=2.0, R_K=2.0, rho_y=0.1, lam=2.0, delta=0.5, kappa=0.99)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "complex_toy"
    mesh_n: int = 200
    alpha: float | None = None
    moreau_gamma: float = 0.0
    c: float = 0.68
    rule: str = "accelerated"
    gammaG_tilde: float = 0.5
    gammaFstar_tilde: float | None = None
    tau: float | None = None
    sigma: float | None = None
    n_max: int = 2000
    ref_multiplier: int = 2
    seed: int = 0
    noise_fraction: float = 0.3
    coefficient_floor: float = pde.DEFAULT_COEFFICIENT_FLOOR
    toy_z_re: float = 2.0
    toy_z_im: float = 0.0
    toy_t0: float = 1.0
    toy_upsilon0: float = 0.5

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: expected one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.rule not in RULES:
            raise ConfigError(f"rule: expected one of {RULES}, got {self.rule!r}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", DEFAULT_ALPHA[self.experiment])
        if self.gammaFstar_tilde is None and self.rule == "linear":
            default = 1.0 if self.experiment == "complex_toy" else self.moreau_gamma
            object.__setattr__(self, "gammaFstar_tilde", default)
        self.validate()

    def validate(self):
        def fail(name, why):
            raise ConfigError(f"{name}: {why}, got {getattr(self, name)!r}")

        if not self.alpha > 0:
            fail("alpha", "must be positive")
        if self.mesh_n < 2:
            fail("mesh_n", "must be at least 2")
        if self.moreau_gamma < 0:
            fail("moreau_gamma", "must be nonnegative")
        if self.n_max < 0:
            fail("n_max", "must be nonnegative")
        if self.ref_multiplier < 1:
            fail("ref_multiplier", "must be at least 1")
        if not 0.0 <= self.noise_fraction <= 1.0:
            fail("noise_fraction", "must lie in [0, 1]")
        if self.gammaG_tilde < 0:
            fail("gammaG_tilde", "must be nonnegative")
        if not self.coefficient_floor > 0:
            fail("coefficient_floor", "must be positive")
        for name in ("tau", "sigma"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                fail(name, "must be positive")
        if self.rule == "linear":
            if not self.gammaG_tilde > 0:
                fail("gammaG_tilde", "must be positive for the linear rule")
            if not self.gammaFstar_tilde > 0:
                fail("gammaFstar_tilde",
                     "must be positive for the linear rule (set moreau_gamma > 0 for PDE runs)")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}


# -- data ----------------------------------------------------------------------


def generate_ground_truth(mesh: pde.UniformMesh1D, f=1.0):
    """``x_dag(t) = 2 - |t|`` at element midpoints and ``z_dag = S(x_dag)``."""
    x_dag = 2.0 - np.abs(mesh.midpoints)
    return x_dag, pde.solve_state(mesh, x_dag, f)


def apply_impulsive_noise(z, fraction: float, seed: int) -> np.ndarray:
    """Replace each value with probability ``fraction`` by a uniform draw on ``[min z, max z]``."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    z = np.array(z, dtype=float)
    rng = np.random.default_rng(seed)
    hit = rng.uniform(size=z.shape) < fraction
    values = rng.uniform(z.min(), z.max(), size=z.shape)
    z[hit] = values[hit]
    return z


# -- PDE-backed problems -------------------------------------------------------


class PotentialProblem(SaddleProblem):
    """``K(x) = S(x) - shift`` and ``G = ||.||^2/2 + indicator(x >= floor)``."""

    def __init__(self, mesh: pde.UniformMesh1D, shift, *, f=1.0,
                 coefficient_floor: float = pde.DEFAULT_COEFFICIENT_FLOOR):
        self.mesh = mesh
        self.shift = np.asarray(shift, dtype=float)
        self.f = f
        self.coefficient_floor = coefficient_floor
        self.primal_dim = mesh.n_elements
        self.dual_dim = mesh.n_nodes
        self.x_weights = pde.element_weights(mesh)
        self.y_weights = pde.node_weights(mesh)
        self.reference = None
        self._cache = None

    def _linearize(self, x):
        # one-entry cache: the metric at u^{i+1} and the next step share x^{i+1}
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1]
        # the over-relaxed point may leave the floor; positive definiteness is still checked
        system = pde.assemble_system(self.mesh, x, lower_bound=None)
        value = (system, pde.solve_state(self.mesh, x, self.f, system=system))
        self._cache = (key, value)
        return value

    def state(self, x):
        return self._linearize(x)[1]

    def apply_K(self, x):
        return self.state(x) - self.shift

    def apply_dK(self, x, h):
        system, z = self._linearize(x)
        return pde.apply_dS(self.mesh, x, z, h, system=system)

    def apply_dK_adjoint(self, x, w):
        system, z = self._linearize(x)
        return pde.apply_dS_adjoint(self.mesh, x, z, w, system=system)

    def prox_G(self, tau, v):
        return np.maximum(self.coefficient_floor, np.asarray(v, dtype=float) / (1.0 + tau))


class L1FitProblem(PotentialProblem):
    """``F = (1/alpha) ||.||_1``; ``F*`` optionally plus ``moreau_gamma/2 ||.||^2``."""

    def __init__(self, mesh, z_delta, alpha: float, moreau_gamma: float = 0.0, **kw):
        super().__init__(mesh, z_delta, **kw)
        self.alpha = alpha
        self.moreau_gamma = moreau_gamma

    def prox_Fstar(self, sigma, v):
        if self.moreau_gamma > 0:
            return prox_linf_ball_moreau_yosida(sigma, self.moreau_gamma, 1.0 / self.alpha, v)
        return prox_linf_ball(1.0 / self.alpha, v)


class StateConstraintProblem(PotentialProblem):
    """``F(y) = 1/(2 alpha) ||y - z_d||^2 + indicator(y <= c)`` with ``K = S``."""

    def __init__(self, mesh, z_d, alpha: float, c: float, moreau_gamma: float = 0.0, **kw):
        super().__init__(mesh, np.zeros(mesh.n_nodes), **kw)
        self.z_d = np.asarray(z_d, dtype=float)
        self.alpha = alpha
        self.c = c
        self.moreau_gamma = moreau_gamma

    def _prox_plain(self, sigma, v):
        return prox_state_constraint_conjugate(sigma, self.alpha, self.c, self.z_d, v)

    def prox_Fstar(self, sigma, v):
        if self.moreau_gamma > 0:
            return prox_conjugate_moreau_yosida(self._prox_plain, sigma, self.moreau_gamma, v)
        return self._prox_plain(sigma, v)


def build_l1fit_problem(cfg: ExperimentConfig) -> L1FitProblem:
    mesh = pde.UniformMesh1D(-1.0, 1.0, cfg.mesh_n)
    _, z_dag = generate_ground_truth(mesh)
    z_delta = apply_impulsive_noise(z_dag, cfg.noise_fraction, cfg.seed)
    return L1FitProblem(mesh, z_delta, cfg.alpha, cfg.moreau_gamma,
                        coefficient_floor=cfg.coefficient_floor)


def build_state_constraint_problem(cfg: ExperimentConfig) -> StateConstraintProblem:
    mesh = pde.UniformMesh1D(-1.0, 1.0, cfg.mesh_n)
    _, z_d = generate_ground_truth(mesh)
    if not np.max(z_d) > cfg.c:
        warnings.warn(
            f"state bound c={cfg.c} is not violated by the target (max {np.max(z_d):.4f}); "
            "the experiment reduces to unconstrained tracking", RuntimeWarning, stacklevel=2)
    return StateConstraintProblem(mesh, z_d, cfg.alpha, cfg.c, cfg.moreau_gamma,
                                  coefficient_floor=cfg.coefficient_floor)


def build_problem(cfg: ExperimentConfig) -> SaddleProblem:
    if cfg.experiment == "l1fit":
        return build_l1fit_problem(cfg)
    if cfg.experiment == "state_constraint":
        return build_state_constraint_problem(cfg)
    return ComplexToyProblem((cfg.toy_z_re, cfg.toy_z_im), cfg.alpha)


def initial_point(cfg: ExperimentConfig, problem: SaddleProblem) -> PrimalDualPoint:
    if cfg.experiment == "complex_toy":
        return PrimalDualPoint([cfg.toy_t0, cfg.toy_upsilon0], [0.0, 0.0])
    return PrimalDualPoint(np.ones(problem.primal_dim), np.zeros(problem.dual_dim))


def lipschitz_scale(cfg: ExperimentConfig, problem: SaddleProblem, u0: PrimalDualPoint) -> float:
    if isinstance(problem, PotentialProblem):
        return pde.estimate_L_tilde(problem.mesh, u0.x, problem.f)
    return 1.0


def make_rule(cfg: ExperimentConfig, L_tilde: float):
    """Step rule with initial steps ``tau = 1/(4L)``, ``sigma = 1/(2L)``, or
    ``tau = sqrt(gF/gG)/L``, ``sigma = (gG/gF) tau`` for the linear rule.
    Explicit ``tau``/``sigma`` in the config take precedence."""
    if cfg.rule == "linear":
        gG, gF = cfg.gammaG_tilde, cfg.gammaFstar_tilde
        tau = cfg.tau if cfg.tau is not None else math.sqrt(gF / gG) / L_tilde
        return LinearRate(tau, gG, gF)
    tau = cfg.tau if cfg.tau is not None else 1.0 / (4.0 * L_tilde)
    sigma = cfg.sigma if cfg.sigma is not None else 1.0 / (2.0 * L_tilde)
    if cfg.rule == "constant" or cfg.gammaG_tilde == 0.0:
        return ConstantWeak(tau, sigma)
    return Accelerated(tau, sigma, cfg.gammaG_tilde)


def analysis_params(cfg: ExperimentConfig, problem: SaddleProblem) -> AnalysisParams:
    if cfg.experiment == "complex_toy":
        return TOY_ANALYSIS
    # R_K is taken as the L2-scale used for the steps; L and lam are not known a priori
    return AnalysisParams(R_K=1.0)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[IterationRecord]
    reference: PrimalDualPoint | None
    L_tilde: float
    rule: object
    bound_report: BoundReport
    diverged: bool = False
    diagnostic: str | None = None
    final: PrimalDualPoint | None = field(default=None, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Build, compute a reference, then record ``n_max`` iterations against it.

    The toy uses its closed-form stationary point.  PDE problems use
    ``u_hat := u^{ref_multiplier * n_max}`` from an identical run.
    """
    problem = build_problem(cfg)
    u0 = initial_point(cfg, problem)
    L_tilde = lipschitz_scale(cfg, problem, u0)
    rule = make_rule(cfg, L_tilde)
    params = analysis_params(cfg, problem)

    if problem.reference is not None:
        reference = problem.reference
    else:
        ref_run = solve(problem, u0, rule, cfg.ref_multiplier * cfg.n_max)
        if ref_run.diverged:
            report = step_bound_report(params, rule.initial_state())
            return ExperimentResult(cfg, ref_run.records, None, L_tilde, rule, report, True,
                                    "reference run diverged", ref_run.u)
        reference = ref_run.u

    run = solve(problem, u0, rule, cfg.n_max, reference=reference, params=params)
    report = step_bound_report(params, rule.initial_state(), problem=problem, u0=u0,
                               reference=reference)
    diagnostic = None
    if run.diverged:
        last = run.records[-1]
        diagnostic = f"diverged at iteration {last.iter}: err_u_sq={last.err_u_sq:.3e}"
    return ExperimentResult(cfg, run.records, reference, L_tilde, rule, report,
                            run.diverged, diagnostic, run.u)


# -- rate fits -----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    ratio: float
    window: tuple[int, int]


def _window(errors, window):
    errors = np.asarray(errors, dtype=float)
    lo, hi = window if window is not None else (1, errors.size - 1)
    if hi - lo + 1 < 10:
        raise ValueError(f"window {lo}..{hi} shorter than 10 points")
    if lo < 0 or hi >= errors.size:
        raise ValueError(f"window {lo}..{hi} outside 0..{errors.size - 1}")
    n = np.arange(lo, hi + 1)
    e = errors[lo:hi + 1]
    if np.any(~(e > 0)):
        raise ValueError("errors must be positive on the fit window")
    return n, e, (int(lo), int(hi))


def fit_power_rate(errors, window=None) -> RateFit:
    """Least-squares slope of ``log err`` against ``log N`` (``errors[N]``)."""
    n, e, window = _window(errors, window)
    if n[0] < 1:
        raise ValueError("power fit needs N >= 1")
    slope = np.polyfit(np.log(n), np.log(e), 1)[0]
    return RateFit(float(slope), math.nan, window)


def fit_linear_rate(errors, window=None) -> RateFit:
    """Least-squares slope of ``log err`` against ``N``; ``ratio = exp(slope)``."""
    n, e, window = _window(errors, window)
    slope = np.polyfit(n, np.log(e), 1)[0]
    return RateFit(float(slope), float(np.exp(slope)), window)


@dataclass(frozen=True)
class DominanceReport:
    theoretical_ratio: float
    constant: float
    worst_local_ratio: float
    window: tuple[int, int]
    tolerance: float
    passed: bool


def linear_rate_dominance(errors, theoretical_ratio: float, *, start: int = 10,
                          span: int = 10, tolerance: float = 0.05,
                          floor: float | None = None) -> DominanceReport:
    """Does ``errors[N]`` decay at least like ``C * ratio^N`` from ``N = start`` on?

    ``C`` is fixed by ``errors[start]``.  Local ratios
    ``(errors[N + span] / errors[N])^(1/span)`` must stay below
    ``(1 + tolerance) * ratio`` on every window, and every error must stay
    below ``C * ((1 + tolerance) * ratio)^N``.  The check ends where the
    errors first reach ``floor`` (default ``1e-20 * errors[0]``, i.e. a
    relative distance of about ``1e-10``), below which they are dominated by
    rounding in the iterates and the reference.
    """
    e = np.asarray(errors, dtype=float)
    if floor is None:
        floor = 1e-20 * e[0]
    above = np.flatnonzero(~(e[start:] > floor))
    end = start + int(above[0]) - 1 if above.size else e.size - 1
    if end - start < span:
        raise ValueError(f"only {end - start + 1} informative points after N={start}")
    n = np.arange(start, end + 1)
    seg = e[start:end + 1]
    constant = float(seg[0] / theoretical_ratio**start)
    local = (seg[span:] / seg[:-span]) ** (1.0 / span)
    worst = float(local.max())
    slack = (1.0 + tolerance) * theoretical_ratio
    envelope = seg[0] * slack ** (n - start)
    passed = bool(worst <= slack and np.all(seg <= envelope * (1.0 + 1e-12)))
    return DominanceReport(theoretical_ratio, constant, worst, (start, end), tolerance, passed)
