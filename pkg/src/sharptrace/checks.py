"""Closed-form identity checks run by ``sharptrace verify``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .bubbles import (BubbleSpec, bubble2_gradsq, bubble2_value, bubble4_partials, bubble4_profile,
                      bubble4d_value, laplacian_decomposition_4d)
from .constants import alpha_n, beta_sphere_identity, c_n, p3_eigenvalue
from .geometry import sphere_area
from .jets import Jet, polar_laplacian
from .measures import (config_antipodal, config_cross_polytope, config_simplex, moment_residual,
                       multi_indices, sphere_monomial_moment, monomial_values, theta_objective)
from .quadrature import sphere_rule

FD_TOLERANCE = 1e-6


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _check(name: str, value: float, tolerance: float) -> Check:
    value = float(value)
    return Check(name, value, tolerance, bool(np.isfinite(value) and value < tolerance))


def constant_checks() -> list:
    out = [_check(f"beta-sphere identity n={n}", beta_sphere_identity(n), 1e-10) for n in range(3, 9)]
    for n in range(5, 9):
        out.append(_check(f"P3 on constants n={n}",
                          abs(2.0 / (n - 4) * p3_eigenvalue(0, n) - n * (n - 2) / 4.0), 1e-12))
        out.append(_check(f"alpha c_n area identity n={n}",
                          abs(alpha_n(n) * c_n(n) * sphere_area(n - 1) ** (3.0 / (n - 1)) - 1.0), 1e-12))
    return out


def design_checks(thetas=(0.25, 0.5, 0.75)) -> list:
    out = []
    for n in (3, 4, 5):
        named = [(1, "antipodal", config_antipodal(np.eye(n)[0]), 2),
                 (2, "simplex", config_simplex(n), n + 1),
                 (3, "cross-polytope", config_cross_polytope(n), 2 * n)]
        for m, label, meas, size in named:
            out.append(_check(f"{label} moments m={m} n={n}", moment_residual(meas, m), 1e-12))
            err = max(abs(theta_objective(meas, t) - size ** (1.0 - t)) for t in thetas)
            out.append(_check(f"{label} objective n={n}", err, 1e-12))
    return out


def quadrature_checks(degree: int = 12) -> list:
    out = []
    for n in (2, 3, 4, 5):
        pts, wts = sphere_rule(n, degree)
        alphas = multi_indices(n, degree, 0)
        exact = np.array([sphere_monomial_moment(a) for a in alphas])
        err = np.max(np.abs(wts @ monomial_values(pts, alphas) - exact))
        out.append(_check(f"sphere rule degree {degree} n={n}", err, 1e-12))
    return out


def _samples(count: int, seed: int, eps: float):
    rng = np.random.default_rng(seed)
    s = eps * 10.0 ** rng.uniform(-1.0, 1.5, count)
    rho = eps * 10.0 ** rng.uniform(-1.0, 1.5, count)
    return 1.0 - s, rho


def _relative(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def _fd(f, r, rho, axis: int, order: int, eps: float):
    """Fourth-order central differences with steps proportional to the distance to the pole."""
    h = 1e-3 * np.sqrt((eps + 1.0 - r) ** 2 + rho**2)
    dr, dt = (h, 0.0) if axis == 0 else (0.0, h)
    fm2, fm1 = f(r - 2 * dr, rho - 2 * dt), f(r - dr, rho - dt)
    fp1, fp2 = f(r + dr, rho + dt), f(r + 2 * dr, rho + 2 * dt)
    if order == 1:
        return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)
    return (-fm2 + 16.0 * fm1 - 30.0 * f(r, rho) + 16.0 * fp1 - fp2) / (12.0 * h * h)


def _scaled(a, b, scale) -> float:
    """max |a - b| / (|b| + scale): relative error, floored by the natural size where b vanishes."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / (np.abs(b) + scale)))


def bubble_fd_checks(points: int = 1000, seed: int = 7, eps: float = 0.01) -> list:
    """Closed-form derivatives against exact jets and central differences."""
    out = []
    r, rho = _samples(points, seed, eps)
    for n in (3, 5):
        spec = BubbleSpec("trace2", n, eps, 0.3)
        rj, tj = Jet.coordinates(r, rho)
        a = eps + 1.0 - rj
        jet = (a * a + tj * tj) ** (0.5 * (2 - n))
        ref = jet.grad[:, 0] ** 2 + (jet.grad[:, 1] / r) ** 2
        out.append(_check(f"trace2 gradsq n={n}", _relative(bubble2_gradsq(spec, r, rho), ref), FD_TOLERANCE))
        fd = _fd(lambda x, y: bubble2_value(spec, x, y), r, rho, 0, 1, eps) ** 2 + (
            _fd(lambda x, y: bubble2_value(spec, x, y), r, rho, 1, 1, eps) / r) ** 2
        out.append(_check(f"trace2 gradsq finite differences n={n}",
                          _relative(fd, bubble2_gradsq(spec, r, rho)), FD_TOLERANCE))
    for n in (5, 6, 7):
        spec = BubbleSpec("trace4", n, eps, 0.3)
        p = bubble4_partials(spec, r, rho)
        f = lambda x, y: bubble4_profile(spec, x, y)  # noqa: E731
        pairs = {"d_r": (p.dr, _fd(f, r, rho, 0, 1, eps)), "d_rho": (p.drho, _fd(f, r, rho, 1, 1, eps)),
                 "d_rr": (p.drr, _fd(f, r, rho, 0, 2, eps)), "d_rhorho": (p.drho2, _fd(f, r, rho, 1, 2, eps))}
        d = (eps + 1.0 - r) ** 2 + rho**2
        size = np.abs(f(r, rho))
        for label, (closed, fd) in pairs.items():
            scale = size / (d if label in ("d_rr", "d_rhorho") else np.sqrt(d))
            out.append(_check(f"trace4 {label} n={n}", _scaled(closed, fd, 1e-3 * scale), FD_TOLERANCE))
        rj, tj = Jet.coordinates(r, rho)
        a = eps + 1.0 - rj
        d = a * a + tj * tj
        jet = (1.0 + (n - 4) * eps * (1.0 - rj) / d) * d ** (0.5 * (4 - n))
        out.append(_check(f"trace4 gradsq n={n}",
                          _relative(p.gradsq, jet.grad[:, 0] ** 2 + (jet.grad[:, 1] / r) ** 2), FD_TOLERANCE))
        out.append(_check(f"trace4 laplacian n={n}",
                          _relative(p.laplacian, polar_laplacian(jet, r, rho, n)), FD_TOLERANCE))
    spec = BubbleSpec("trace4D", 4, eps, 0.3)
    bub = bubble4d_value(spec, r, rho)
    d = (eps + 1.0 - r) ** 2 + rho**2
    for label, part, index in (("log", bub.log_part, 0), ("shift", bub.shift_part, 1)):
        f = (lambda x, y, k=index: (bubble4d_value(spec, x, y).log_part if k == 0
                                    else bubble4d_value(spec, x, y).shift_part)[0])
        for k, (axis, order) in enumerate(((0, 1), (1, 1), (0, 2), (1, 2)), start=1):
            scale = 1.0 / (np.sqrt(d) if order == 1 else d)
            err = _scaled(part[k], _fd(f, r, rho, axis, order, eps), 1e-3 * scale)
            out.append(_check(f"trace4D {label} partial {k}", err, FD_TOLERANCE))
    c1, weight = 2.0, 0.5
    terms = laplacian_decomposition_4d(spec, c1, weight, r, rho)
    rj, tj = Jet.coordinates(r, rho)
    a = eps + 1.0 - rj
    d = a * a + tj * tj
    phi = -d.log() + 2.0 * eps * (1.0 - rj) / d
    u = (weight * (3.0 * phi).exp() + c1 * math.log(1.0 / eps)).log() * (1.0 / 3.0)
    out.append(_check("trace4D laplacian decomposition", _relative(terms.total, polar_laplacian(u, r, rho, 4)),
                      FD_TOLERANCE))
    return out


def all_checks() -> list:
    return constant_checks() + design_checks() + quadrature_checks() + bubble_fd_checks()


__all__ = ["Check", "all_checks", "bubble_fd_checks", "constant_checks", "design_checks", "quadrature_checks"]
