"""Deterministic product quadrature on panels, spheres, caps, conic annuli and quadrants.

Bubble integrands vary on the scale eps near the corner (1 - r, rho) = (0, 0);
geometric panels (ratio 2) toward that corner with a fixed Gauss order per
panel keep the rules accurate without adaptivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .geometry import complement_frame, sphere_area

GAUSS_ORDER = 12


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    x, w = roots_legendre(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges: Sequence[float], order: int = GAUSS_ORDER):
    """Composite Gauss-Legendre rule on consecutive panels [edges[k], edges[k+1]]."""
    e = np.asarray(edges, dtype=float)
    if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
        raise ValueError("panel edges must be strictly increasing")
    x, w = gauss_legendre(order)
    mid = 0.5 * (e[1:] + e[:-1])
    half = 0.5 * np.diff(e)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_edges(length: float, finest: float, knots: Sequence[float] = (),
                 ratio: float = 2.0, coarse: float | None = None) -> np.ndarray:
    """Panel edges on [0, length], geometric with ``ratio`` away from 0.

    Panels start at width ``finest`` and never exceed ``coarse`` (default
    length/4). Every knot in ``knots`` becomes an edge, so piecewise-smooth
    integrands are only integrated over smooth pieces.
    """
    if not (0 < finest < length):
        finest = length / 4.0
    coarse = length / 4.0 if coarse is None else coarse
    edges = [0.0]
    width = finest
    while edges[-1] < length:
        edges.append(min(edges[-1] + width, length))
        width = min(width * ratio, coarse)
    points = np.array(sorted(set(edges) | {float(k) for k in knots if 0 < k < length}))
    # drop slivers created by the knots
    keep = np.concatenate([[True], np.diff(points) > 1e-14 * length])
    return points[keep]


@dataclass(frozen=True)
class QuadGrid:
    """Nodes and positive weights of a product rule on one domain."""

    domain: str
    nodes: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def integrate(self, values: np.ndarray) -> float:
        vals = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError(f"non-finite integrand sample on {self.domain} grid")
        return math.fsum(np.ravel(vals * self.weights))

    def describe(self) -> dict:
        return {"domain": self.domain, "size": int(self.weights.size), **self.meta}


# ----------------------------------------------------------------------------
# Spheres


@lru_cache(maxsize=None)
def _sphere_rule_cached(n: int, degree: int):
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        count = degree + 1
        ang = 2.0 * math.pi * (np.arange(count) + 0.5) / count
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return pts, np.full(count, 2.0 * math.pi / count)
    # S^{n-1}: slice by the last coordinate t with weight (1 - t^2)^{(n-3)/2}.
    k = degree // 2 + 1
    a = 0.5 * (n - 3)
    t, wt = roots_jacobi(k, a, a)
    sub_pts, sub_w = _sphere_rule_cached(n - 1, degree)
    s = np.sqrt(1.0 - t**2)
    pts = np.concatenate(
        [np.hstack([s[i] * sub_pts, np.full((len(sub_w), 1), t[i])]) for i in range(k)]
    )
    wts = np.concatenate([wt[i] * sub_w for i in range(k)])
    return pts, wts


def sphere_rule(n: int, degree: int):
    """Product rule on S^{n-1} in R^n, exact for polynomials of degree <= ``degree``."""
    pts, wts = _sphere_rule_cached(int(n), int(degree))
    return pts.copy(), wts.copy()


def sphere_grid(n: int, degree: int) -> QuadGrid:
    pts, wts = sphere_rule(n, degree)
    return QuadGrid("sphere", pts, wts, {"n": n, "degree": degree})


def integrate_sphere(f: Callable[[np.ndarray], np.ndarray], n: int, grid: QuadGrid | int = 24) -> float:
    """Integral over S^{n-1} of f(points) with a product rule."""
    if not isinstance(grid, QuadGrid):
        grid = sphere_grid(n, int(grid))
    return grid.integrate(f(grid.nodes))


def ball_grid(n: int, degree: int, radial_edges: Sequence[float] | None = None,
              order: int = GAUSS_ORDER) -> QuadGrid:
    """Radial Gauss panels times a sphere rule; nodes are points of the unit ball."""
    edges = np.asarray(radial_edges if radial_edges is not None else np.linspace(0, 1, 5))
    r, wr = panel_rule(edges, order)
    pts, ws = sphere_rule(n, degree)
    nodes = (r[:, None, None] * pts[None, :, :]).reshape(-1, n)
    weights = ((wr * r ** (n - 1))[:, None] * ws[None, :]).ravel()
    return QuadGrid("ball", nodes, weights, {"n": n, "degree": degree, "radial_edges": edges.tolist()})


def integrate_ball(f: Callable[[np.ndarray], np.ndarray], n: int, grid: QuadGrid | int = 24) -> float:
    if not isinstance(grid, QuadGrid):
        grid = ball_grid(n, int(grid))
    return grid.integrate(f(grid.nodes))


# ----------------------------------------------------------------------------
# Caps and conic annuli about a pole


@dataclass(frozen=True)
class CapGrid:
    """Rule on a geodesic cap of S^{n-1}: graded rho panels times an S^{n-2} rule."""

    center: np.ndarray
    rho: np.ndarray           # per-node geodesic distance to the center
    points: np.ndarray        # nodes on S^{n-1}
    weights: np.ndarray       # includes sin^{n-2}(rho)
    rho_nodes: np.ndarray     # distinct rho nodes
    rho_weights: np.ndarray   # 1-D weights including sin^{n-2}(rho) and |S^{n-2}|

    def integrate(self, values: np.ndarray) -> float:
        return math.fsum(np.ravel(np.asarray(values) * self.weights))


def cap_grid(center: np.ndarray, rho_edges: Sequence[float], fiber_degree: int,
             order: int = GAUSS_ORDER) -> CapGrid:
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    n = c.size
    rho, wrho = panel_rule(rho_edges, order)
    wrho = wrho * np.sin(rho) ** (n - 2)
    fib_pts, fib_w = sphere_rule(n - 1, fiber_degree)
    frame = complement_frame(c)
    omega = fib_pts @ frame.T
    points = (np.cos(rho)[:, None, None] * c[None, None, :]
              + np.sin(rho)[:, None, None] * omega[None, :, :]).reshape(-1, n)
    weights = (wrho[:, None] * fib_w[None, :]).ravel()
    rho_all = np.repeat(rho, fib_w.size)
    return CapGrid(c, rho_all, points, weights, rho, wrho * sphere_area_or_two(n - 2))


def sphere_area_or_two(d: int) -> float:
    """|S^d|, with the zero-sphere {-1, +1} counted as 2."""
    return 2.0 if d == 0 else sphere_area(d)


@dataclass(frozen=True)
class AnnulusGrid:
    """Axisymmetric (r, rho) rule on [1 - width_r, 1] x [0, width_rho].

    Weights include the volume factor |S^{n-2}| r^{n-1} sin^{n-2}(rho).
    """

    n: int
    r: np.ndarray
    rho: np.ndarray
    weights: np.ndarray
    meta: dict

    def integrate(self, values: np.ndarray) -> float:
        vals = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite integrand sample on annulus grid")
        return math.fsum(np.ravel(vals * self.weights))


def annulus_grid(n: int, width_r: float, width_rho: float, finest: float,
                 knots_r: Sequence[float] = (), knots_rho: Sequence[float] = (),
                 order: int = GAUSS_ORDER) -> AnnulusGrid:
    """Tensor rule graded toward the corner (r, rho) = (1, 0).

    ``knots_r`` are given as distances 1 - r from the sphere.
    """
    e_s = graded_edges(width_r, finest, knots_r)
    e_t = graded_edges(width_rho, finest, knots_rho)
    s, ws = panel_rule(e_s, order)
    t, wt = panel_rule(e_t, order)
    r = 1.0 - s
    rr, tt = np.meshgrid(r, t, indexing="ij")
    vol = sphere_area_or_two(n - 2) * rr ** (n - 1) * np.abs(np.sin(tt)) ** (n - 2)
    weights = ws[:, None] * wt[None, :] * vol
    meta = {"n": n, "width_r": width_r, "width_rho": width_rho, "finest": finest,
            "panels_r": len(e_s) - 1, "panels_rho": len(e_t) - 1, "order": order}
    return AnnulusGrid(n, rr, tt, weights, meta)


def integrate_annulus_axisym(f: Callable[[np.ndarray, np.ndarray], np.ndarray], n: int,
                             delta: float, grid: AnnulusGrid | None = None,
                             finest: float | None = None) -> float:
    """|S^{n-2}| times the integral of f r^{n-1} sin^{n-2}(rho) over [1-delta,1]x[0,delta]."""
    if grid is None:
        grid = annulus_grid(n, delta, delta, finest if finest else delta / 64)
    return grid.integrate(f(grid.r, grid.rho))


# ----------------------------------------------------------------------------
# Rescaled model quadrant


@dataclass(frozen=True)
class QuadrantResult:
    value: float
    tail_bound: float
    truncation: float


def quadrant_edges(truncation: float, finest: float = 0.125) -> np.ndarray:
    return graded_edges(truncation, finest, knots=(1.0,), ratio=2.0, coarse=truncation)


def integrate_quadrant(f: Callable[[np.ndarray, np.ndarray], np.ndarray], truncation: float = 1e3,
                       decay: tuple[float, float] | None = None, tol: float | None = None,
                       order: int = GAUSS_ORDER) -> QuadrantResult:
    """Integral of f over [0, T]^2 plus a bound on the omitted part of the quadrant.

    ``decay = (C, k)`` asserts |f(s, t)| <= C (s^2 + t^2)^{-k/2}; the mass outside
    the square then is at most C (pi/2) T^{2-k} / (k - 2).
    """
    e = quadrant_edges(truncation)
    x, w = panel_rule(e, order)
    ss, tt = np.meshgrid(x, x, indexing="ij")
    vals = np.asarray(f(ss, tt), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite integrand sample on quadrant grid")
    value = math.fsum(np.ravel(vals * (w[:, None] * w[None, :])))
    tail = 0.0
    if decay is not None:
        c, k = decay
        if k <= 2:
            raise ValueError("tail bound needs decay exponent k > 2")
        tail = c * (math.pi / 2.0) * truncation ** (2.0 - k) / (k - 2.0)
    if tol is not None and tail > tol:
        raise ValueError(f"tail bound {tail:.3e} exceeds tolerance {tol:.3e}; raise the truncation")
    return QuadrantResult(value, tail, truncation)
