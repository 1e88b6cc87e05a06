import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharptrace.jets import Jet, polar_gradsq, polar_laplacian

coords = st.tuples(st.floats(0.2, 2.0), st.floats(0.2, 2.0))


def _fd_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    d = len(x)
    hess = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            ei, ej = np.eye(d)[i] * h, np.eye(d)[j] * h
            hess[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return hess


def _composite(a, b):
    return ((a * b).exp() + (a / b) ** 3 - (a * a + b).sqrt() * b.log() + a.sin() * b.cos()) * 0.5


def _plain(x):
    a, b = x
    return 0.5 * (np.exp(a * b) + (a / b) ** 3 - np.sqrt(a * a + b) * np.log(b) + np.sin(a) * np.cos(b))


@given(coords)
def test_jet_matches_finite_differences(point):
    a, b = Jet.coordinates(np.array(point[0]), np.array(point[1]))
    f = _composite(a, b)
    assert float(f.val) == pytest.approx(_plain(point), rel=1e-13)
    h = 1e-6
    fd_grad = [(_plain(np.add(point, e)) - _plain(np.subtract(point, e))) / (2 * h) for e in np.eye(2) * h]
    assert np.allclose(f.grad, fd_grad, rtol=1e-6, atol=1e-6)
    assert np.allclose(f.hess, _fd_hessian(_plain, point), rtol=1e-4, atol=1e-4)


@given(coords)
def test_hessian_symmetric(point):
    a, b = Jet.coordinates(np.array(point[0]), np.array(point[1]))
    f = _composite(a, b)
    assert np.allclose(f.hess, np.swapaxes(f.hess, -1, -2), atol=1e-12)


def test_laplacian_of_radial_harmonic():
    x, y, z = Jet.coordinates(np.array([0.3, 1.2]), np.array([0.5, -0.2]), np.array([0.7, 0.4]))
    f = (x * x + y * y + z * z) ** -0.5
    assert np.allclose(f.laplacian(), 0.0, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_polar_operators_match_cartesian(n):
    """f(x) = |x|^2 x_n^3 in polar form about the pole e_n."""
    rng = np.random.default_rng(n)
    r = rng.uniform(0.3, 1.0, 50)
    rho = rng.uniform(0.05, 1.5, 50)
    rj, tj = Jet.coordinates(r, rho)
    f = rj * rj * (rj * tj.cos()) ** 3
    # cartesian: grad = 2 x t^3 + 3 |x|^2 t^2 e_n, lap = 2n t^3 + 12 t^3 + 6 |x|^2 t ... computed directly
    t = r * np.cos(rho)
    lap = 2 * n * t**3 + 2 * 2 * 3 * t**3 + r**2 * 6 * t
    gradsq = (2 * r * np.sin(rho) * t**3) ** 2 + (2 * t**4 + 3 * r**2 * t**2) ** 2
    assert np.allclose(polar_laplacian(f, r, rho, n), lap, rtol=1e-12)
    assert np.allclose(polar_gradsq(f, r), gradsq, rtol=1e-12)


def test_constant_jet_has_no_derivatives():
    c = Jet.constant(3.0, 2, shape=(4,))
    assert np.all(c.grad == 0) and np.all(c.hess == 0) and c.val.shape == (4,)
