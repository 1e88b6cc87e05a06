"""Sphere and ball geometry: geodesic distance, polar charts about a pole, rotations."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln
from scipy.stats import special_ortho_group


@dataclass(frozen=True)
class SpherePoint:
    """A unit vector in R^n; renormalized on construction."""

    coords: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.coords, dtype=float).reshape(-1)
        norm = np.linalg.norm(x)
        if x.size == 0 or not np.isfinite(norm) or norm == 0.0:
            raise ValueError("a sphere point needs a finite nonzero vector")
        x = x / norm
        x.setflags(write=False)
        object.__setattr__(self, "coords", x)

    @property
    def dim(self) -> int:
        return self.coords.size

    def __eq__(self, other):
        return isinstance(other, SpherePoint) and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())


def _as_coords(x) -> np.ndarray:
    return x.coords if isinstance(x, SpherePoint) else np.asarray(x, dtype=float)


def geodesic_distance(x, y) -> float | np.ndarray:
    """Great-circle distance; dot products are clamped so antipodes give exactly pi."""
    a, b = _as_coords(x), _as_coords(y)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    out = np.arccos(dot)
    return float(out) if np.ndim(out) == 0 else out


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^d in R^{d+1}."""
    if int(d) != d or d < 1:
        raise ValueError("sphere_area needs an integer d >= 1")
    return float(2.0 * np.exp(0.5 * (d + 1) * np.log(np.pi) - gammaln(0.5 * (d + 1))))


def random_rotation(n: int, seed) -> np.ndarray:
    """Haar-distributed element of SO(n), deterministic in ``seed``."""
    if n < 2:
        raise ValueError("rotations need n >= 2")
    return special_ortho_group.rvs(n, random_state=np.random.default_rng(seed))


def complement_frame(center: np.ndarray) -> np.ndarray:
    """Orthonormal basis (n, n-1) of the hyperplane orthogonal to ``center``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    n = c.size
    # Householder reflection mapping e_n to c; its other columns span c^perp.
    e = np.zeros(n)
    e[-1] = 1.0
    v = c - e
    vv = v @ v
    if vv < 1e-30:
        return np.eye(n)[:, : n - 1]
    h = np.eye(n) - 2.0 * np.outer(v, v) / vv
    return h[:, : n - 1]


def hyperspherical_to_cartesian(angles: np.ndarray) -> np.ndarray:
    """Map angles (..., d) to points on S^d in R^{d+1}.

    The first d-1 angles range over [0, pi]; the last one is the azimuth.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    d = angles.shape[-1]
    out = np.empty(angles.shape[:-1] + (d + 1,))
    s = np.ones(angles.shape[:-1])
    for k in range(d):
        out[..., k] = s * np.cos(angles[..., k])
        s = s * np.sin(angles[..., k])
    out[..., d] = s
    return out


def cartesian_to_hyperspherical(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hyperspherical_to_cartesian` for unit vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[-1] - 1
    angles = np.empty(x.shape[:-1] + (d,))
    for k in range(d - 1):
        tail = np.linalg.norm(x[..., k + 1 :], axis=-1)
        angles[..., k] = np.arctan2(tail, x[..., k])
    angles[..., d - 1] = np.arctan2(x[..., d], x[..., d - 1]) if d >= 1 else 0.0
    return angles


@dataclass(frozen=True)
class PolarChart:
    """Coordinates (r, rho, omega) about a boundary point of the unit ball.

    ``rho`` is the geodesic distance of x/|x| to the center and ``omega`` a unit
    vector of the orthogonal complement, expressed in :attr:`frame`.
    """

    center: SpherePoint
    frame: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.center, SpherePoint):
            object.__setattr__(self, "center", SpherePoint(self.center))
        object.__setattr__(self, "frame", complement_frame(self.center.coords))

    @property
    def n(self) -> int:
        return self.center.dim

    def to_point(self, r, rho, omega) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        rho = np.asarray(rho, dtype=float)
        omega = np.asarray(omega, dtype=float)
        direction = (
            np.cos(rho)[..., None] * self.center.coords
            + np.sin(rho)[..., None] * (omega @ self.frame.T)
        )
        return r[..., None] * direction

    def from_point(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        xi = x / np.where(r > 0, r, 1.0)[..., None]
        rho = geodesic_distance(xi, self.center.coords)
        tangent = xi @ self.frame
        tnorm = np.linalg.norm(tangent, axis=-1)
        omega = tangent / np.where(tnorm > 0, tnorm, 1.0)[..., None]
        return r, rho, omega


@lru_cache(maxsize=None)
def _unit(n: int, k: int) -> np.ndarray:
    e = np.zeros(n)
    e[k] = 1.0
    e.setflags(write=False)
    return e


def basis_point(n: int, k: int) -> SpherePoint:
    """The k-th standard basis vector of R^n as a sphere point."""
    return SpherePoint(_unit(n, k))
