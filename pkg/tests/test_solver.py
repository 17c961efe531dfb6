import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlpdhgm.checks import descent_checks
from nlpdhgm.problems import CallableSaddleProblem, ComplexToyProblem, PrimalDualPoint
from nlpdhgm.solver import (
    Accelerated,
    AnalysisParams,
    ConstantWeak,
    LinearRate,
    StepState,
    advance_accelerated,
    check_descent_inequality,
    ledger_defect,
    make_accelerated,
    make_constant,
    make_linear_rate,
    metric_inner,
    metric_norm_sq,
    nlpdhgm_step,
    solve,
    step_bound_report,
)


def iterate(rule, n):
    state = rule.initial_state()
    states = [state]
    for _ in range(n):
        state = rule.advance(state)
        states.append(state)
    return states


# -- step rules ------------------------------------------------------------------


def test_accelerated_first_step_example():
    state = make_accelerated(0.25, 0.5, 0.5)
    assert state.omega == pytest.approx(1 / math.sqrt(1.25), abs=1e-15)
    assert state.omega == pytest.approx(0.8944272, abs=1e-7)
    assert state.sigma == pytest.approx(0.5590170, abs=1e-7)
    nxt = advance_accelerated(state, 0.5)
    assert nxt.tau == pytest.approx(0.2236068, abs=1e-7)
    assert nxt.sigma_prev == pytest.approx(0.5590170, abs=1e-7)


def test_accelerated_without_acceleration_is_constant():
    states = iterate(Accelerated(0.25, 0.5, 0.0), 5)
    for s in states:
        assert (s.tau, s.sigma, s.omega) == (0.25, 0.5, 1.0)


def test_accelerated_tau_decays_like_one_over_n():
    state = make_accelerated(0.25, 0.5, 0.5)
    for _ in range(10_000):
        state = advance_accelerated(state, 0.5)
    # tau_N ~ 1/(gamma N) = 2/N asymptotically
    assert 1.5 <= state.tau * 10_000 <= 2.5


def test_accelerated_invariants():
    states = iterate(Accelerated(0.25, 0.5, 0.5), 2000)
    for a, b in zip(states, states[1:]):
        assert b.tau < a.tau and a.omega < 1.0
        assert b.phi >= a.phi and b.psi >= a.psi
    for s in states:
        assert s.sigma_prev * s.tau == pytest.approx(0.125, rel=1e-12)
        assert ledger_defect(s) <= 1e-12


def test_linear_rate_example():
    state = make_linear_rate(math.sqrt(2.0), 0.5, 1.0)
    assert state.sigma == pytest.approx(0.7071068, abs=1e-7)
    assert state.omega == pytest.approx(0.4142136, abs=1e-7)
    assert state.omega == pytest.approx(1 / (1 + math.sqrt(2)), rel=1e-14)


def test_linear_rate_symmetric_case():
    state = make_linear_rate(1.0, 0.3, 0.3)
    assert state.sigma == 1.0
    assert state.omega == pytest.approx(1 / 1.6)


def test_linear_rate_ledger_closed_form():
    tau, gG = 0.4, 0.5
    rule = LinearRate(tau, gG, 2.0)
    states = iterate(rule, 60)
    q = 1 + 2 * gG * tau
    for n, s in enumerate(states):
        assert s.phi * s.tau == pytest.approx(q**n, rel=1e-10)
        assert ledger_defect(s) <= 1e-12
        assert (s.tau, s.sigma, s.omega) == (tau, rule.sigma, 1 / q)
    assert rule.ratio == pytest.approx(1 / q)
    with pytest.raises(ValueError):
        make_linear_rate(1.0, 0.0, 1.0)


def test_constant_rule_is_constant():
    states = iterate(ConstantWeak(0.25, 0.5), 100)
    for s in states:
        assert (s.tau, s.sigma, s.omega) == (0.25, 0.5, 1.0)
        assert (s.phi, s.psi) == (4.0, 2.0)
        assert s.phi * s.tau == pytest.approx(s.eta, rel=1e-15)


def test_step_state_rejects_nonpositive_steps():
    with pytest.raises(ValueError):
        StepState(tau=0.0, sigma=1.0, omega=1.0, phi=1, psi=1, eta=1, sigma_prev=1)


rules = st.one_of(
    st.builds(ConstantWeak, st.floats(1e-3, 10), st.floats(1e-3, 10)),
    st.builds(Accelerated, st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(0, 10)),
    st.builds(LinearRate, st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(1e-3, 10)),
)


@settings(max_examples=200, deadline=None)
@given(rules, st.integers(0, 200))
def test_ledger_identity_and_monotone_tests(rule, n):
    states = iterate(rule, n)
    for a, b in zip(states, states[1:]):
        if not all(math.isfinite(v) for v in (b.phi, b.psi, b.eta)):
            break
        assert ledger_defect(b) <= 1e-12
        assert b.phi >= a.phi and b.psi >= a.psi


# -- the iteration ---------------------------------------------------------------


def linear_identity_problem(n=3):
    return CallableSaddleProblem(
        primal_dim=n, dual_dim=n,
        K=lambda x: x, dK=lambda x, h: h, dK_adjoint=lambda x, w: w,
        proxG=lambda tau, v: v / (1 + tau), proxFstar=lambda sigma, v: v / (1 + sigma))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.floats(0.01, 2), st.floats(0.01, 2),
       st.floats(0.1, 1))
def test_linear_identity_step_matches_literal_formulas(vals, tau, sigma, omega):
    x0, y0 = np.array(vals[:3]), np.array(vals[3:])
    problem = linear_identity_problem()
    state = StepState(tau=tau, sigma=sigma, omega=omega, phi=1, psi=1, eta=1, sigma_prev=sigma)
    u1, x_bar = nlpdhgm_step(problem, PrimalDualPoint(x0, y0), state)
    # separate transcription of the three update lines
    x1 = (x0 - tau * y0) / (1 + tau)
    xb = x1 + omega * (x1 - x0)
    y1 = (y0 + sigma * xb) / (1 + sigma)
    np.testing.assert_allclose(u1.x, x1, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(x_bar, xb, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(u1.y, y1, rtol=1e-14, atol=1e-14)


def test_solve_records_and_zero_iterations():
    problem = ComplexToyProblem()
    u0 = PrimalDualPoint([1.0, 0.5], [0.0, 0.0])
    run = solve(problem, u0, ConstantWeak(0.1, 0.1), 0, reference=problem.reference)
    assert len(run.records) == 1 and run.records[0].iter == 0
    run = solve(problem, u0, ConstantWeak(0.1, 0.1), 5)
    assert len(run.records) == 6
    assert all(math.isnan(r.err_u_sq) for r in run.records)
    with pytest.raises(ValueError):
        solve(problem, u0, ConstantWeak(0.1, 0.1), -1)


def test_solve_flags_divergence():
    # K = 3x with identity prox on G and F*: the iteration blows up
    problem = CallableSaddleProblem(
        primal_dim=1, dual_dim=1, K=lambda x: 3 * x, dK=lambda x, h: 3 * h,
        dK_adjoint=lambda x, w: 3 * w, proxG=lambda t, v: v, proxFstar=lambda s, v: v)
    ref = PrimalDualPoint([0.0], [0.0])
    run = solve(problem, PrimalDualPoint([1.0], [0.0]), ConstantWeak(2.0, 2.0), 1000,
                reference=ref)
    assert run.diverged
    assert run.records[-1].err_u_sq > 1e12
    assert len(run.records) < 1001


def test_toy_accelerated_converges_to_closed_form():
    problem = ComplexToyProblem((2.0, 0.0), 0.1)
    run = solve(problem, PrimalDualPoint([1.0, 0.5], [0.0, 0.0]), Accelerated(0.25, 0.5, 0.5),
                10_000, reference=problem.reference)
    assert run.records[-1].err_x_sq < 1e-8


# -- metric ----------------------------------------------------------------------


def test_metric_matches_explicit_4x4_assembly():
    problem = ComplexToyProblem((1.0, 0.0), 0.1)
    at = PrimalDualPoint([1.0, 0.0], [0.0, 0.0])
    state = StepState(tau=0.3, sigma=0.4, omega=0.9, phi=2.5, psi=3.0, eta=0.75, sigma_prev=0.4)
    J = problem.jacobian(at.x)
    Z = np.block([[state.phi * np.eye(2), -state.eta * J.T], [-state.eta * J, state.psi * np.eye(2)]])
    rng = np.random.default_rng(0)
    for _ in range(20):
        vec = rng.standard_normal(4)
        u = PrimalDualPoint(vec[:2], vec[2:])
        assert metric_norm_sq(problem, at, u, state).value == pytest.approx(vec @ Z @ vec, rel=1e-12)


def test_metric_off_axis_4x4_assembly():
    problem = ComplexToyProblem((2.0, 0.3), 0.1)
    at = PrimalDualPoint([1.7, 0.6], [0.0, 0.0])
    state = make_accelerated(0.25, 0.5, 0.5)
    J = problem.jacobian(at.x)
    Z = np.block([[state.phi * np.eye(2), -state.eta * J.T], [-state.eta * J, state.psi * np.eye(2)]])
    vec = np.array([0.3, -1.2, 0.8, 0.1])
    u = PrimalDualPoint(vec[:2], vec[2:])
    assert metric_norm_sq(problem, at, u, state).value == pytest.approx(vec @ Z @ vec, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=10, max_size=10))
def test_metric_polarization(vals):
    problem = ComplexToyProblem()
    at = PrimalDualPoint(vals[:2], [0.0, 0.0])
    u = PrimalDualPoint(vals[2:4], vals[4:6])
    v = PrimalDualPoint(vals[6:8], vals[8:10])
    state = make_accelerated(0.25, 0.5, 0.5)
    plus = PrimalDualPoint(u.x + v.x, u.y + v.y)
    polar = 0.25 * (metric_norm_sq(problem, at, plus, state).value
                    - metric_norm_sq(problem, at, u - v, state).value)
    direct = metric_inner(problem, at, u, v, state)
    scale = 1.0 + abs(metric_norm_sq(problem, at, u, state).value) + abs(
        metric_norm_sq(problem, at, v, state).value)
    assert abs(polar - direct) <= 1e-10 * scale


def test_metric_diagonal_case_and_zero():
    problem = ComplexToyProblem()
    state = make_constant(0.2, 0.5)
    at = PrimalDualPoint([0.0, 0.0], [0.0, 0.0])
    # at t = 0 the upsilon direction has zero derivative
    u = PrimalDualPoint([0.0, 1.3], [0.4, -0.2])
    assert metric_norm_sq(problem, at, u, state).value == pytest.approx(
        state.phi * 1.3**2 + state.psi * 0.2)
    zero = PrimalDualPoint([0.0, 0.0], [0.0, 0.0])
    assert metric_norm_sq(problem, at, zero, state).value == 0.0


def test_metric_positive_when_coercivity_bound_holds():
    problem = ComplexToyProblem()
    rng = np.random.default_rng(1)
    R_K = 2.0
    state = make_constant(0.1, 0.02)  # phi psi = 500 >= eta^2 R_K^2 = 4
    for _ in range(200):
        t = rng.uniform(0.0, 2.0)
        at = PrimalDualPoint([t, rng.uniform(-3, 3)], [0.0, 0.0])
        vec = rng.standard_normal(4)
        m = metric_norm_sq(problem, at, PrimalDualPoint(vec[:2], vec[2:]), state, R_K=R_K)
        assert m.coercive
        assert m.value >= 0
    weak = make_constant(1.0, 1.0)  # phi psi = 1 < 4
    bad = metric_norm_sq(problem, PrimalDualPoint([2.0, 0.0], [0, 0]),
                         PrimalDualPoint([0.0, 1.0], [0.0, 1.0]), weak, R_K=R_K)
    assert bad.coercive is False
    assert bad.value < 0


# -- step bounds -----------------------------------------------------------------


def test_bound_report_linear_K_degeneration():
    params = AnalysisParams(L=0.0, lam=0.0, delta=0.9, kappa=0.9, R_K=1.0)
    report = step_bound_report(params, make_constant(0.1, 0.5))
    checks = {c.name: c for c in report.checks}
    assert checks["primal_step"].bound == math.inf
    assert checks["sigma_tau_product"].value == pytest.approx(0.05)
    assert checks["sigma_tau_product"].bound == pytest.approx(0.1)
    assert report.passed and report.violated == []


def test_primal_bound_example():
    params = AnalysisParams(delta=0.5, lam=1.0, L=1.0, rho_y=1.0)
    assert params.primal_step_bound(1.0) == pytest.approx(0.125)


def test_bound_report_names_violations():
    params = AnalysisParams(R_K=1.0, kappa=0.99)
    report = step_bound_report(params, make_constant(0.25, 0.5))
    assert report.violated == ["sigma_tau_product"]
    assert report.as_dict()["checks"]["sigma_tau_product"]["margin"] < 0


def test_r_max_zero_at_reference_and_positive_elsewhere():
    problem = ComplexToyProblem()
    state = make_accelerated(0.25, 0.5, 0.5)
    ref = problem.reference
    assert step_bound_report(AnalysisParams(), state, problem=problem, u0=ref,
                             reference=ref).r_max == 0.0
    u0 = PrimalDualPoint([1.0, 0.5], [0.0, 0.0])
    r = step_bound_report(AnalysisParams(), state, problem=problem, u0=u0, reference=ref).r_max
    mu = state.sigma * state.omega / state.tau
    expected = math.sqrt(2 / 0.5 * (0.9**2 + 0.5**2 + 0.1**2 / mu))
    assert r == pytest.approx(expected)


def test_analysis_params_validation():
    with pytest.raises(ValueError):
        AnalysisParams(delta=0.9, kappa=0.5)
    with pytest.raises(ValueError):
        AnalysisParams(R_K=0.0)


# -- descent inequality ----------------------------------------------------------


def test_descent_inequality_constant_zero_sequence():
    report = check_descent_inequality(np.zeros(50))
    assert report.ok and report.first_violation is None


def test_descent_inequality_reports_first_violation():
    report = check_descent_inequality([5.0, 4.0, 4.5, 3.0, 6.0])
    assert report.monotone_violations == [2, 4]
    assert report.di_violations == [4]
    assert report.first_violation == 2
    assert not report.ok


def test_descent_inequality_skips_nonfinite():
    assert check_descent_inequality([1.0, 0.5, np.nan, np.inf, 0.1]).ok


@pytest.mark.parametrize("result", descent_checks(), ids=lambda r: r.name)
def test_toy_descent_suite(result):
    assert result.passed, result.line()
