import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hermitian_ma.errors import ConfigurationError, InvalidMetricError
from hermitian_ma.geometry import (build_ball_domain, build_shell_domain, conformal_metric, identity_metric,
                                   ma_constant, metric_bound_B, metric_from_callable, standard_defining_function,
                                   stencil_steps)
from hermitian_ma.forms import ddc_hessian

import frozen


def test_ball_small_grid_interior_is_the_open_disc():
    d = build_ball_domain(1.0, 0.5, 1)
    pts = d.points[d.interior]
    assert np.all(np.linalg.norm(pts, axis=1) < 1.0)
    inside = np.linalg.norm(d.points, axis=1) < 1.0
    assert set(np.flatnonzero(inside)) == set(d.interior.tolist())
    assert d.neighbors_classified()


def test_ball_area_count_matches_lattice_enumeration():
    d = build_ball_domain(1.0, 0.01, 1)
    assert d.interior.size == frozen.DISC_LATTICE_COUNT[0.01]
    assert 0.95 <= d.interior.size / (math.pi / 0.01**2) <= 1.05


def test_four_dimensional_ball_stencil_is_classified():
    d = build_ball_domain(1.0, 0.3, 2)
    assert d.dim == 4
    assert d.neighbors_classified()
    steps = {tuple(s) for s in stencil_steps(2)}
    assert all(tuple(-x for x in s) in steps for s in steps)


def test_shell_topology():
    d = build_shell_domain(0.5, 1.0, 0.05, 1)
    assert d.components == 2
    r = np.linalg.norm(d.points[d.interior], axis=1)
    exact = np.minimum(r - 0.5, 1.0 - r)
    assert np.all(np.abs(d.boundary_distance[d.interior] - exact) <= d.h)
    assert build_shell_domain(0.5, 1.0, 0.2, 2).interior_connected()


def test_bad_domains_rejected():
    with pytest.raises(ConfigurationError):
        build_ball_domain(1.0, -0.1, 1)
    with pytest.raises(ConfigurationError):
        build_shell_domain(1.0, 0.5, 0.1, 1)
    with pytest.raises(ConfigurationError):
        build_shell_domain(0.5, 1.0, 0.3, 1)


def test_defining_function():
    d = build_ball_domain(1.0, 0.1, 2)
    rho = standard_defining_function(d).values
    centre = int(np.flatnonzero(np.all(d.index == 0, axis=1))[0])
    assert rho[centre] == -1.0
    # boundary nodes sit at most a diagonal step outside the sphere
    reach = math.sqrt(2) * d.h
    assert np.max(np.abs(rho[d.boundary])) <= 2 * reach + reach**2 + 1e-12
    H = ddc_hessian(rho, d)
    assert np.allclose(H, np.eye(2)[None], atol=1e-10)


def test_ma_constant():
    assert ma_constant(1) == 2
    assert ma_constant(2) == 8


def test_metric_bound_kahler_and_n1():
    d = build_ball_domain(1.0, 0.2, 2)
    assert metric_bound_B(identity_metric(d), d) == 0.0
    assert metric_bound_B(identity_metric(d, 3.0), d) == 0.0
    d1 = build_ball_domain(1.0, 0.1, 1)
    assert metric_bound_B(conformal_metric(d1, lambda z: np.exp(z[:, 0].real)), d1) == 0.0


def test_metric_bound_conformal_matches_symbolic_ratio():
    # the leftmost interior node sits at x1 = -0.8 (h = 0.2) and -0.9 (h = 0.1)
    for h, x1 in ((0.2, -0.8), (0.1, -0.9)):
        want = frozen.CONFORMAL_EXP_RATIO[x1]
        d = build_ball_domain(1.0, h, 2)
        B = metric_bound_B(conformal_metric(d, lambda z: np.exp(z[:, 0].real)), d)
        assert B == pytest.approx(want, rel=0.01)


@pytest.mark.slow
def test_metric_bound_conformal_stable_under_refinement():
    Bs = []
    for h in (0.1, 0.05):
        d = build_ball_domain(1.0, h, 2)
        Bs.append(metric_bound_B(conformal_metric(d, lambda z: np.exp(z[:, 0].real)), d))
    assert abs(Bs[1] / Bs[0] - 1) <= 0.10


def test_invalid_metric_rejected():
    d = build_ball_domain(1.0, 0.25, 1)
    with pytest.raises(InvalidMetricError):
        conformal_metric(d, lambda z: z[:, 0].real)
    with pytest.raises(InvalidMetricError):
        metric_from_callable(d, lambda z: np.tile(np.array([[1.0 + 1j]]), (z.shape[0], 1, 1)))


@given(st.floats(0.05, 0.4), st.floats(0.5, 2.0))
def test_ball_invariants(h, radius):
    d = build_ball_domain(radius, h, 1)
    assert d.neighbors_classified()
    assert np.all(np.linalg.norm(d.points[d.interior], axis=1) < radius)
    # boundary nodes are within a diagonal step of the boundary
    assert np.all(np.abs(np.linalg.norm(d.points[d.boundary], axis=1) - radius) <= math.sqrt(2) * h + 1e-12)
    # colour classes partition the interior and no stencil step stays inside a class
    colours = d.colors
    assert sum(c.size for c in colours) == d.interior.size
    for c in colours:
        members = set(c.tolist())
        for s in stencil_steps(1):
            assert not members & set((c + d.offset(s)).tolist())
