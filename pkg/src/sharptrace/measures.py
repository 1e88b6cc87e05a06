"""Discrete measures on S^{n-1}, degree-m moment constraints and named designs."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import gammaln

from .geometry import geodesic_distance, sphere_area

PRUNE_THRESHOLD = 1e-6


@lru_cache(maxsize=None)
def multi_indices(n: int, max_degree: int, min_degree: int = 1) -> tuple:
    """All exponent tuples alpha in N^n with min_degree <= |alpha| <= max_degree."""
    out = []
    for deg in range(min_degree, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            alpha = [0] * n
            for k in combo:
                alpha[k] += 1
            out.append(tuple(alpha))
    return tuple(out)


def sphere_monomial_moment(alpha) -> float:
    """Integral of x^alpha over S^{n-1} with respect to surface measure."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError("exponents must be nonnegative")
    if any(a % 2 for a in alpha):
        return 0.0
    halves = [0.5 * (a + 1) for a in alpha]
    return float(2.0 * math.exp(sum(gammaln(h) for h in halves) - gammaln(sum(halves))))


def harmonic_dimension(n: int, m: int) -> int:
    """Dimension of the mean-zero polynomials of degree <= m restricted to S^{n-1}."""
    total = n
    for i in range(2, m + 1):
        total += math.comb(n + i - 1, n - 1) - math.comb(n + i - 3, n - 1)
    return total


def monomial_values(points: np.ndarray, alphas) -> np.ndarray:
    """Matrix V[i, k] = points[i] ** alphas[k]."""
    pts = np.asarray(points, dtype=float)
    exps = np.asarray(alphas, dtype=int).reshape(-1, pts.shape[-1])
    return np.prod(pts[..., None, :] ** exps, axis=-1)


def monomial_gradients(points: np.ndarray, alphas) -> np.ndarray:
    """Array G[i, k, j] = d/dx_j of x^alpha_k at points[i]."""
    pts = np.asarray(points, dtype=float)
    exps = np.asarray(alphas, dtype=int)
    n = pts.shape[-1]
    grads = np.zeros(pts.shape[:-1] + (len(exps), n))
    for j in range(n):
        lowered = exps.copy()
        coef = lowered[:, j].astype(float)
        lowered[:, j] = np.maximum(lowered[:, j] - 1, 0)
        grads[..., j] = coef * monomial_values(pts, lowered)
    return grads


@dataclass(frozen=True)
class MomentSystem:
    """Moment constraints of degree 1..m on S^{n-1}.

    The raw centered monomials x^alpha - M_alpha are redundant on the sphere;
    :attr:`transform` maps them to an orthonormal basis of rank :attr:`L`.
    """

    n: int
    m: int

    def __post_init__(self):
        if self.n < 2 or self.m < 0:
            raise ValueError("need n >= 2 and m >= 0")

    @cached_property
    def alphas(self) -> tuple:
        return multi_indices(self.n, self.m, 1)

    @cached_property
    def averages(self) -> np.ndarray:
        area = sphere_area(self.n - 1)
        return np.array([sphere_monomial_moment(a) / area for a in self.alphas])

    def centered(self, points: np.ndarray) -> np.ndarray:
        return monomial_values(points, self.alphas) - self.averages

    @cached_property
    def _orthonormalization(self):
        from .quadrature import sphere_rule

        if self.m == 0:
            return np.zeros((0, 0)), np.zeros(0)
        pts, wts = sphere_rule(self.n, 2 * self.m + 2)
        wts = wts / wts.sum()
        v = self.centered(pts)
        gram = (v * wts[:, None]).T @ v
        gram = 0.5 * (gram + gram.T)
        evals, evecs = np.linalg.eigh(gram)
        keep = evals > 1e-10 * evals.max()
        return evecs[:, keep] / np.sqrt(evals[keep]), evals

    @property
    def transform(self) -> np.ndarray:
        """Matrix T with basis = centered_monomials @ T, orthonormal in the mean."""
        return self._orthonormalization[0]

    @property
    def L(self) -> int:
        return self.transform.shape[1]

    @property
    def expected_L(self) -> int:
        return harmonic_dimension(self.n, self.m) if self.m >= 1 else 0

    def basis(self, points: np.ndarray) -> np.ndarray:
        """Orthonormal mean-zero polynomial basis evaluated at points, shape (..., L)."""
        return self.centered(points) @ self.transform

    def basis_gradients(self, points: np.ndarray) -> np.ndarray:
        """Ambient gradients of the basis polynomials, shape (..., L, n)."""
        g = monomial_gradients(points, self.alphas)
        return np.einsum("...kj,kl->...lj", g, self.transform)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite probability measure sum_i w_i delta_{x_i} on S^{n-1}."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        wts = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != wts.size:
            raise ValueError("points and weights differ in length")
        if np.any(wts < 0):
            raise ValueError("weights must be nonnegative")
        if abs(wts.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {wts.sum()!r}, not 1")
        norms = np.linalg.norm(pts, axis=1)
        # leave unit rows untouched so serialization round trips are exact
        if np.max(np.abs(norms - 1.0)) > 1e-15:
            pts = pts / norms[:, None]
        else:
            pts = pts.copy()
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def normalized(cls, points, weights) -> "DiscreteMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights))

    def pruned(self, threshold: float = PRUNE_THRESHOLD) -> "DiscreteMeasure":
        keep = self.weights > threshold
        return DiscreteMeasure.normalized(self.points[keep], self.weights[keep])

    def rotated(self, rotation: np.ndarray) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points @ np.asarray(rotation).T, self.weights)

    def min_separation(self) -> float:
        pts = self.points[self.weights > 0]
        if len(pts) < 2:
            return math.pi
        d = geodesic_distance(pts[:, None, :], pts[None, :, :])
        return float(d[np.triu_indices(len(pts), 1)].min())

    def to_dict(self) -> dict:
        return {"n": self.n, "points": self.points.tolist(), "weights": self.weights.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        meas = cls(data["points"], data["weights"])
        if "n" in data and meas.n != data["n"]:
            raise ValueError("dimension field disagrees with point coordinates")
        return meas

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(text))


def moment_residual(measure: DiscreteMeasure, m: int) -> float:
    """max over 1 <= |alpha| <= m of |sum_i w_i x_i^alpha - mean of x^alpha over the sphere|."""
    if m < 1:
        raise ValueError("m must be >= 1")
    system = MomentSystem(measure.n, m)
    return float(np.abs(measure.weights @ system.centered(measure.points)).max())


def theta_objective(measure: DiscreteMeasure, theta: float) -> float:
    if not (0.0 < theta <= 1.0):
        raise ValueError("theta must lie in (0, 1]")
    w = measure.weights[measure.weights > 0]
    return float(np.sum(w**theta))


def config_antipodal(xi) -> DiscreteMeasure:
    x = np.asarray(getattr(xi, "coords", xi), dtype=float)
    return DiscreteMeasure(np.stack([x, -x]), [0.5, 0.5])


@lru_cache(maxsize=None)
def _simplex_vertices(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    lower = _simplex_vertices(n - 1)
    lift = math.sqrt(1.0 - 1.0 / n**2)
    top = np.zeros((1, n))
    top[0, -1] = 1.0
    rest = np.hstack([lift * lower, np.full((n, 1), -1.0 / n)])
    return np.vstack([top, rest])


def config_simplex(n: int) -> DiscreteMeasure:
    """Regular simplex with n+1 vertices, first vertex at the last basis vector."""
    if n < 2:
        raise ValueError("need n >= 2")
    pts = _simplex_vertices(n)
    return DiscreteMeasure(pts, np.full(n + 1, 1.0 / (n + 1)))


def config_cross_polytope(n: int) -> DiscreteMeasure:
    if n < 2:
        raise ValueError("need n >= 2")
    eye = np.eye(n)
    return DiscreteMeasure(np.vstack([eye, -eye]), np.full(2 * n, 1.0 / (2 * n)))


def config_regular_polygon(count: int, phase: float = 0.0) -> DiscreteMeasure:
    """Equally weighted vertices of a regular polygon on the unit circle."""
    ang = phase + 2.0 * math.pi * np.arange(count) / count
    return DiscreteMeasure(np.stack([np.cos(ang), np.sin(ang)], axis=1), np.full(count, 1.0 / count))


def known_design(m: int, n: int) -> DiscreteMeasure:
    """The named minimal configuration for degree m on S^{n-1} (m <= 3 or n = 2)."""
    if n == 2:
        return config_regular_polygon(m + 1)
    if m == 1:
        return config_antipodal(np.eye(n)[-1])
    if m == 2:
        return config_simplex(n)
    if m == 3:
        return config_cross_polytope(n)
    raise ValueError(f"no named configuration for m={m}, n={n}")
