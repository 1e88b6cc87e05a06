import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharptrace.constants import beta
from sharptrace.bubbles import psi_hat_laplacian
from sharptrace.geometry import sphere_area
from sharptrace.measures import monomial_values, multi_indices, sphere_monomial_moment
from sharptrace.quadrature import (annulus_grid, ball_grid, cap_grid, graded_edges, integrate_ball,
                                   integrate_quadrant, integrate_sphere, panel_rule, sphere_rule)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("degree", [4, 9, 12])
def test_sphere_rule_exactness(n, degree):
    pts, wts = sphere_rule(n, degree)
    alphas = multi_indices(n, degree, 0)
    exact = np.array([sphere_monomial_moment(a) for a in alphas])
    assert np.max(np.abs(wts @ monomial_values(pts, alphas) - exact)) < 1e-12


@given(st.integers(1, 30), st.floats(-3, 3), st.floats(0.1, 4))
def test_panel_rule_polynomials(degree, a, length):
    edges = np.linspace(a, a + length, 4)
    x, w = panel_rule(edges, 12)
    if degree <= 23:
        exact = ((a + length) ** (degree + 1) - a ** (degree + 1)) / (degree + 1)
        assert math.isclose(np.sum(w * x**degree), exact, rel_tol=1e-10, abs_tol=1e-10)


@given(st.floats(0.01, 2.0), st.floats(1e-8, 1e-2))
def test_graded_edges_cover_interval(length, finest):
    e = graded_edges(length, finest * length, knots=(0.5 * length,))
    assert e[0] == 0.0 and e[-1] == pytest.approx(length)
    assert np.all(np.diff(e) > 0)
    assert np.any(np.isclose(e, 0.5 * length))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_ball_volume(n):
    vol = integrate_ball(lambda x: np.ones(len(x)), n, ball_grid(n, 4))
    assert vol == pytest.approx(sphere_area(n - 1) / n, rel=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_sphere_integral_of_quadratic(n):
    assert integrate_sphere(lambda x: x[:, 0] ** 2, n) == pytest.approx(sphere_area(n - 1) / n, rel=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_cap_area(n):
    c = np.ones(n) / math.sqrt(n)
    g = cap_grid(c, np.linspace(0.0, 0.7, 5), fiber_degree=6)
    exact = sphere_area(n - 2) * _sin_power_integral(n - 2, 0.7)
    assert g.integrate(np.ones(len(g.weights))) == pytest.approx(exact, rel=1e-12)
    assert np.allclose(np.arccos(np.clip(g.points @ c, -1, 1)), g.rho, atol=1e-7)


def _sin_power_integral(k, upper):
    x, w = panel_rule(np.linspace(0, upper, 9), 20)
    return float(np.sum(w * np.sin(x) ** k))


@pytest.mark.parametrize("n", [3, 4, 5])
def test_annulus_volume(n):
    g = annulus_grid(n, 0.3, 0.3, 1e-3)
    r, wr = panel_rule(np.linspace(0.7, 1.0, 5), 20)
    exact = sphere_area(n - 2) * float(np.sum(wr * r ** (n - 1))) * _sin_power_integral(n - 2, 0.3)
    assert g.integrate(np.ones_like(g.r)) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_graded_grid_resolves_corner_bubble(n):
    """Graded vs much finer grading agree once the smallest panel is below eps/4."""
    eps = 1e-3
    f = lambda r, rho: ((eps + 1 - r) ** 2 + rho**2) ** (1 - n)  # noqa: E731
    coarse = annulus_grid(n, 0.2, 0.2, eps / 4)
    fine = annulus_grid(n, 0.2, 0.2, eps / 64, order=20)
    assert coarse.integrate(f(coarse.r, coarse.rho)) == pytest.approx(fine.integrate(f(fine.r, fine.rho)),
                                                                       rel=1e-9)


@pytest.mark.parametrize("n,truncation", [(3, 1e7), (4, 1e4), (5, 1e4)])
def test_quadrant_trace2_kernel(n, truncation):
    exact = beta(0.5 * (n - 1), 0.5 * (n - 1)) / (2.0 * (n - 2))
    res = integrate_quadrant(lambda s, t: ((1 + s) ** 2 + t**2) ** (1 - n) * t ** (n - 2), truncation,
                             decay=(1.0, n))
    assert abs(res.value - exact) <= res.tail_bound + 1e-12 * exact
    assert res.tail_bound < 1e-6 * exact


@pytest.mark.parametrize("n,truncation", [(5, 1e8), (6, 1e4)])
def test_quadrant_trace4_kernel(n, truncation):
    exact = n * (n - 2) * (n - 4) * beta(0.5 * (n - 1), 0.5 * (n - 1))
    res = integrate_quadrant(lambda s, t: psi_hat_laplacian(n, s, t) ** 2 * t ** (n - 2), truncation,
                             decay=(4.0 * (n - 4) ** 2 * (n - 1) ** 2, n - 2))
    assert abs(res.value - exact) <= res.tail_bound + 1e-12 * exact
    assert res.tail_bound < 1e-6 * exact


def test_quadrant_tail_tolerance_enforced():
    with pytest.raises(ValueError):
        integrate_quadrant(lambda s, t: 1.0 / (1 + s * s + t * t) ** 2, 10.0, decay=(1.0, 4), tol=1e-6)


def test_quadrant_needs_integrable_decay():
    with pytest.raises(ValueError):
        integrate_quadrant(lambda s, t: s * 0, 10.0, decay=(1.0, 2))


def test_panel_rule_rejects_unsorted_edges():
    with pytest.raises(ValueError):
        panel_rule([0.0, 1.0, 0.5])
