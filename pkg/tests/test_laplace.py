import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, strategies as st

from hermitian_ma.forms import stencil_matrix
from hermitian_ma.geometry import build_ball_domain, build_shell_domain, conformal_metric, identity_metric
from hermitian_ma.laplace import (SMALL_SYSTEM, apply_laplacian, ball_cover, ball_mask, global_barrier,
                                  hoelder_barrier, hoelder_modulus, linear_solve, perron_laplace, solve_laplace,
                                  solve_trace_equation)


def sq(z):
    return np.sum(np.abs(z) ** 2, axis=1)


def test_harmonic_quadratic_is_reproduced_from_node_values():
    d = build_ball_domain(1.0, 0.125, 2)
    g = identity_metric(d)
    exact = d.evaluate(lambda z: np.real(z[:, 0] ** 2) + np.abs(z[:, 0]) ** 2 - np.abs(z[:, 1]) ** 2)
    u = solve_laplace(g, d, exact)
    assert np.max(np.abs(u - exact)[d.interior]) < 1e-9


def test_trace_equation_exact_solution():
    d = build_ball_domain(1.0, 1 / 32, 1)
    g = identity_metric(d)
    exact = d.evaluate(lambda z: 1 - sq(z))
    u = solve_trace_equation(g, d, exact)
    assert np.max(np.abs(u - exact)[d.interior]) < 1e-9
    assert np.allclose(apply_laplacian(u, g, d), -1.0)


def test_projected_data_error_is_first_order():
    errs = []
    for h in (1 / 16, 1 / 32):
        d = build_ball_domain(1.0, h, 1)
        u = solve_trace_equation(identity_metric(d), d, 0.0)
        exact = d.evaluate(lambda z: 1 - sq(z))
        errs.append(np.max(np.abs(u - exact)[d.interior]))
    assert errs[1] < errs[0]
    assert errs[1] <= 5 * (1 / 32)


def test_iterative_and_direct_routes_agree():
    d = build_ball_domain(1.0, 0.2, 2)
    g = conformal_metric(d, lambda z: np.exp(z[:, 0].real))
    A, _ = stencil_matrix(d, g.inverse)
    assert A.shape[0] > SMALL_SYSTEM
    f = np.random.default_rng(0).standard_normal(A.shape[0])
    x_amg = linear_solve(A, f, dim=4)
    x_lu = spla.spsolve(sp.csc_matrix(A), f)
    assert np.max(np.abs(x_amg - x_lu)) <= 1e-8 * np.max(np.abs(x_lu))


def test_perron_lifts_reach_the_dirichlet_solution():
    d = build_ball_domain(1.0, 1 / 16, 1)
    g = identity_metric(d)
    phi = lambda z: np.real(z[:, 0]) ** 3
    target = solve_laplace(g, d, phi)
    start = d.evaluate(lambda z: np.full(z.shape[0], -2.0))
    u, rounds = perron_laplace(g, d, phi, ball_cover(d, 0.4), start)
    assert rounds >= 1
    assert np.max(np.abs(u - target)[d.interior]) < 1e-7


@given(st.floats(0.1, 0.6))
def test_ball_cover_covers(radius):
    d = build_ball_domain(1.0, 0.1, 1)
    covered = np.zeros(d.size, dtype=bool)
    for c, r in ball_cover(d, radius):
        covered |= ball_mask(d, c, r)
    assert covered[d.interior].all()


def test_point_barrier_properties():
    d = build_ball_domain(1.0, 1 / 32, 1)
    g = identity_metric(d)
    phi = lambda z: np.sqrt(np.abs(z[:, 0].real - 0.3))
    xi = int(d.boundary[5])
    barrier, v = hoelder_barrier(xi, phi, 0.5, 0.5, d, g)
    assert np.isfinite(barrier.k)
    assert np.all(apply_laplacian(v, g, d, barrier.neighborhood) <= 0)
    phi_b = d.boundary_values(phi)
    assert np.all(v[d.boundary] >= phi_b - 1e-12)


def test_global_barriers_sandwich_the_harmonic_solution():
    d = build_ball_domain(1.0, 1 / 16, 1)
    g = identity_metric(d)
    phi = lambda z: np.sqrt(np.abs(z[:, 0].real - 0.3))
    upper, lower = global_barrier(phi, 0.5, d, g)
    u = solve_laplace(g, d, phi)
    I = d.interior
    assert np.all(lower[I] <= u[I] + 1e-9) and np.all(u[I] <= upper[I] + 1e-9)


def test_hoelder_modulus_of_square_root():
    d = build_shell_domain(0.5, 1.0, 1 / 16, 1)
    u = d.evaluate(lambda z: np.sqrt(np.abs(z[:, 0].real)))
    full, bdry = hoelder_modulus(u, 0.5, d)
    assert 0.5 <= full <= 1.0 + 1e-9
    assert bdry <= full
