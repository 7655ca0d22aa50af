import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hermitian_ma.errors import ConfigurationError, IterationLimitError, SubsolutionError
from hermitian_ma.forms import MeasureField, ma_density
from hermitian_ma.geometry import build_ball_domain, build_shell_domain, conformal_metric, identity_metric
from hermitian_ma.masolver import (DirichletProblem, RhsFunction, Tolerances, _closed_form, bounded_rhs_subsolution,
                                   check_subsolution, lambda_limit_study, node_root_bisection, perron_solve,
                                   picard_solve, solve_exponential, solve_fixed_rhs, solve_maximal)
from hermitian_ma.verify import manufactured_problem

D1 = build_ball_domain(1.0, 1 / 32, 1)
G1 = identity_metric(D1)
D2 = build_ball_domain(1.0, 0.25, 2)
G2 = identity_metric(D2)


def sq(z):
    return np.sum(np.abs(z) ** 2, axis=1)


@given(st.floats(-3, 3), st.floats(0, 4), st.floats(0, 10), st.sampled_from([1, 2]))
def test_closed_form_matches_bisection(l1, gap, c, n):
    l1, l2, c = np.array([l1]), np.array([l1 + gap]), np.array([c])
    assert _closed_form(l1, l2, c, n) == pytest.approx(node_root_bisection(l1, l2, c, n), abs=1e-9)


def test_maximal_solution_of_the_ball():
    for d, g in ((D1, G1), (D2, G2)):
        u, rep = solve_maximal(g, d, 0.0, return_report=True)
        exact = d.evaluate(lambda z: 1 - sq(z))
        assert np.max(np.abs(u - exact)[d.interior]) <= 5 * d.h
        assert rep.residual_sup <= 1e-4


def test_maximal_solution_from_node_values_is_exact():
    exact = D2.evaluate(lambda z: 1 - sq(z))
    u = solve_maximal(G2, D2, exact)
    assert np.max(np.abs(u - exact)[D2.interior]) < 1e-5


def test_fixed_rhs_reproduces_a_quadratic():
    exact = D2.evaluate(lambda z: 2 * sq(z) - 1)
    nu = ma_density(exact, G2, D2)
    u, rep = solve_fixed_rhs(G2, D2, nu, exact)
    assert np.max(np.abs(u - exact)[D2.interior]) < 1e-6
    assert rep.converged


def test_accelerated_and_plain_iterations_agree():
    nu = MeasureField.from_density(D1, 3.0)
    a, _ = solve_fixed_rhs(G1, D1, nu, 0.0, accelerate=True)
    b, _ = solve_fixed_rhs(G1, D1, nu, 0.0, accelerate=False)
    assert np.max(np.abs(a - b)[D1.interior]) < 1e-5


def test_picard_and_perron_agree_on_the_shell():
    d = build_shell_domain(0.5, 1.0, 1 / 16, 1)
    g = identity_metric(d)
    prob = manufactured_problem(lambda z: sq(z) ** 2 / 4 - 0.5, RhsFunction.exponential(1.0), g, d)
    u, rep = picard_solve(prob)
    v, prep = perron_solve(prob)
    tol = prob.tolerances.tol_cmp
    assert np.max(np.abs(u - v)[d.interior]) <= tol
    assert prep.notes["rounds"] >= 1


def test_picard_iterates_sit_below_the_maximal_solution():
    prob = DirichletProblem(D1, G1, MeasureField.from_density(D1, 1.0), RhsFunction.constant(2.0), 0.0)
    # zero-trace psh witness with (dd^c v)^n = 4 >= F mu = 2
    witness = D1.evaluate(lambda z: 2 * (sq(z) - 1))
    u, rep = picard_solve(prob, witness=witness)
    assert rep.sandwich_violations == 0


def test_subsolution_checks():
    prob = DirichletProblem(D1, G1, MeasureField.from_density(D1, 1.0), RhsFunction.constant(1.0), 0.0)
    bad = D1.evaluate(lambda z: -3 * sq(z) + 0.0)
    ok, rep = check_subsolution(bad, prob)
    assert not ok and not rep["omega_psh"]
    good = bounded_rhs_subsolution(prob)
    assert check_subsolution(good, prob)[0]
    with pytest.raises(SubsolutionError):
        perron_solve(prob)
    with pytest.raises(SubsolutionError):
        dataclasses.replace(prob, subsolution=bad)


def test_exponential_uniqueness_and_lambda_family():
    mu = MeasureField.from_density(D1, 2.0)
    u, rep = solve_exponential(1.0, mu, 0.0, G1, D1)
    assert rep.notes["uniqueness_gap"] <= 1e-6
    prob = DirichletProblem(D1, G1, mu, RhsFunction.exponential(1.0), 0.0)
    sub = bounded_rhs_subsolution(prob)
    study = lambda_limit_study(mu, 0.0, G1, D1, [1.0, 0.5, 0.25, 0.1], sub)
    assert study.monotone_violation <= 1e-12
    assert study.limit_gap <= 5 * D1.h
    with pytest.raises(ConfigurationError):
        solve_exponential(0.0, mu, 0.0, G1, D1)
    with pytest.raises(ConfigurationError):
        lambda_limit_study(mu, 0.0, G1, D1, [0.1, 0.5], sub)


def test_sweep_budget_is_enforced():
    nu = MeasureField.from_density(D1, 3.0)
    with pytest.raises(IterationLimitError):
        solve_fixed_rhs(G1, D1, nu, 0.0, max_sweeps=2, accelerate=False)


def test_tolerance_defaults():
    phi = np.array([0.0, 2.0])
    t = Tolerances.for_problem(D1, phi, density_sup=3.0)
    assert t.tol_fix == pytest.approx(2e-6 + 1e-10)
    assert t.tol_cmp == pytest.approx(max(10 * t.tol_fix, 5 * D1.h * 2))
    assert t.tol_ma == pytest.approx(4e-4)
    assert t.tol_b == pytest.approx(4 * D1.h * 2)


def test_rhs_validation():
    with pytest.raises(ConfigurationError):
        RhsFunction.constant(-1.0)
    with pytest.raises(ConfigurationError):
        RhsFunction.tabulated([0.0, 1.0], [2.0, 1.0])
    with pytest.raises(ConfigurationError):
        RhsFunction("cubic")
    F = RhsFunction.tabulated([0.0, 1.0], [0.0, 1.0])
    F.validate(D1)
    assert F.evaluate(np.array([-1.0, 0.5, 2.0])).tolist() == [0.0, 0.5, 1.0]
    assert RhsFunction.exponential(2.0).bound(0.5) == pytest.approx(np.e)


def test_non_kahler_background_solves():
    d = build_ball_domain(1.0, 0.25, 2)
    g = conformal_metric(d, lambda z: np.exp(z[:, 0].real))
    prob = DirichletProblem(d, g, MeasureField.from_density(d, 1.0), RhsFunction.constant(1.0), 0.0)
    u, rep = picard_solve(prob, accelerate=True)
    assert rep.residual_sup <= prob.tolerances.tol_ma * 10


@given(st.integers(0, 10_000))
def test_comparison_property(seed):
    d = build_ball_domain(1.0, 1 / 8, 1)
    g = identity_metric(d)
    rng = np.random.default_rng(seed)
    small = rng.uniform(0, 2, d.size)
    big = small + rng.uniform(0, 2, d.size)
    phi = rng.uniform(-0.5, 0.5, d.boundary.size)
    F = RhsFunction.exponential(0.5)
    u = picard_solve(DirichletProblem(d, g, MeasureField.from_density(d, small), F, phi), accelerate=True)[0]
    v = picard_solve(DirichletProblem(d, g, MeasureField.from_density(d, big), F, phi), accelerate=True)[0]
    assert np.all(u[d.interior] >= v[d.interior] - 1e-8)


def test_maximal_solution_with_quadratic_trace():
    # trace |z|^2 = 1 on the sphere, so the maximal solution is 2 - |z|^2
    u = solve_maximal(G1, D1, sq)
    assert np.max(np.abs(u - D1.evaluate(lambda z: 2 - sq(z)))[D1.interior]) <= 5 * D1.h
