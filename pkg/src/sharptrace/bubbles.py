"""Concentrating test functions: bubbles, cutoffs, moment and boundary corrections.

Every assembled test function has the form

    U(x) = sum_i nu_i * density_i(r, rho_i) + A(r) + B(r) * P(xi),

where U is a power or exponential of the function u whose energies are
measured, ``density_i`` is the bubble term centred at x_i (it vanishes outside
the 2 delta conic annulus), A(r) carries the floor constant, and
P = sum_j beta_j kappa(xi) p_j(xi) is the moment correction with an angular
cutoff kappa that vanishes on every 2 delta cap. Inside a cap only A(r)
remains, so U is axisymmetric about x_i there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .constants import ORDERS, normalize_order
from .geometry import complement_frame, sphere_area
from .jets import Jet, polar_gradsq, polar_laplacian
from .measures import DiscreteMeasure, MomentSystem, known_design
from .quadrature import GAUSS_ORDER, cap_grid, graded_edges, panel_rule, sphere_area_or_two, sphere_rule

GRAM_CONDITION_LIMIT = 1e10
DELTA_FRACTION = 0.2
DELTA_CAP = 0.3
DELTA_CAP_FOURTH_ORDER = 0.24


# ----------------------------------------------------------------------------
# Cutoff profiles


def smoothstep(t):
    """Quintic smoothstep on [0, 1] with its first two derivatives; constant outside."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    s = np.clip(t, 0.0, 1.0)
    val = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    d1 = np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)
    d2 = np.where(inside, 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s), 0.0)
    return val, d1, d2


@dataclass(frozen=True)
class Profile:
    """C^2 monotone transition between ``start`` and ``stop``.

    ``rising`` profiles are 0 below ``start`` and 1 above ``stop``; falling ones
    are 1 below ``start`` and 0 above ``stop``.
    """

    start: float
    stop: float
    rising: bool = True

    def __post_init__(self):
        if not self.stop > self.start:
            raise ValueError("profile needs start < stop")

    def __call__(self, x):
        width = self.stop - self.start
        v, d1, d2 = smoothstep((np.asarray(x, dtype=float) - self.start) / width)
        d1, d2 = d1 / width, d2 / width**2
        if self.rising:
            return v, d1, d2
        return 1.0 - v, -d1, -d2

    def jet(self, x: Jet) -> Jet:
        return x.chain(*self(x.val))


@dataclass(frozen=True)
class CutoffProfiles:
    """Radial cutoffs eta1 (bubble), eta2 (boundary correction) and angular ones.

    ``chi`` is 1 on rho <= delta and 0 on rho >= 2 delta. ``cap`` is the
    generator cutoff, a function of t = cos(rho): 1 for rho <= 2 delta and 0
    for rho >= ``outer``.
    """

    delta: float
    outer: float

    def __post_init__(self):
        if not 0.0 < 2.0 * self.delta < 1.0:
            raise ValueError("cutoffs need 0 < 2 delta < 1")
        if not self.outer > 2.0 * self.delta:
            raise ValueError("generator cutoff must end beyond 2 delta")

    @property
    def eta1(self) -> Profile:
        return Profile(1.0 - 2.0 * self.delta, 1.0 - self.delta, rising=True)

    @property
    def eta2(self) -> Profile:
        if not 4.0 * self.delta < 1.0:
            raise ValueError("the boundary-correction cutoff needs 4 delta < 1")
        return Profile(1.0 - 4.0 * self.delta, 1.0 - 2.0 * self.delta, rising=True)

    @property
    def chi(self) -> Profile:
        return Profile(self.delta, 2.0 * self.delta, rising=False)

    @property
    def cap(self) -> Profile:
        return Profile(math.cos(self.outer), math.cos(2.0 * self.delta), rising=True)


def cutoff_profiles(delta: float, outer: Optional[float] = None):
    """(eta1, chi, eta2, cap) for conic-annulus half-width ``delta``."""
    prof = CutoffProfiles(delta, outer if outer is not None else 3.0 * delta)
    return prof.eta1, prof.chi, prof.eta2, prof.cap


# ----------------------------------------------------------------------------
# Single bubbles and their closed-form derivatives


@dataclass(frozen=True)
class BubbleSpec:
    order: str
    n: int
    eps: float
    delta: float
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        order = normalize_order(self.order)
        object.__setattr__(self, "order", order)
        _check_dimension(order, self.n)
        if not 0.0 < self.eps < self.delta:
            raise ValueError("need 0 < eps < delta")
        if self.center is not None:
            c = np.asarray(self.center, dtype=float)
            if c.shape != (self.n,):
                raise ValueError("center has the wrong dimension")
            object.__setattr__(self, "center", c / np.linalg.norm(c))


def _check_dimension(order: str, n: int) -> None:
    if order == "trace2" and n < 3:
        raise ValueError("trace2 needs n >= 3")
    if order == "trace4" and n < 5:
        raise ValueError("trace4 needs n >= 5")
    if order == "trace4D" and n != 4:
        raise ValueError("trace4D needs n = 4")
    if order == "widom2D" and n != 2:
        raise ValueError("widom2D needs n = 2")


def _corner(eps, r, rho):
    a = eps + 1.0 - np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    return a, a * a + rho * rho


def bubble2_value(spec: BubbleSpec, r, rho):
    """((eps + 1 - r)^2 + rho^2)^{(2 - n)/2}."""
    _, d = _corner(spec.eps, r, rho)
    return d ** (0.5 * (2 - spec.n))


def bubble2_gradsq(spec: BubbleSpec, r, rho):
    """|grad| squared of the second-order bubble, cutoff excluded."""
    n = spec.n
    a, d = _corner(spec.eps, r, rho)
    return (n - 2) ** 2 * (a * a + (np.asarray(rho) / np.asarray(r)) ** 2) / d**n


def _require_fourth(spec: BubbleSpec) -> None:
    if spec.n < 5:
        raise ValueError("the Robin bubble needs n >= 5")


def bubble4_profile(spec: BubbleSpec, r, rho):
    """The singular factor [1 + (n-4) eps (1-r)/D] D^{(4-n)/2}, D = (eps+1-r)^2 + rho^2."""
    _require_fourth(spec)
    n, eps = spec.n, spec.eps
    _, d = _corner(eps, r, rho)
    return (1.0 + (n - 4) * eps * (1.0 - np.asarray(r)) / d) * d ** (0.5 * (4 - n))


def radial_weight(n: int, r):
    """1 + (n-4)(1 - r^2)/4, with its first and second r-derivatives."""
    r = np.asarray(r, dtype=float)
    return 1.0 + 0.25 * (n - 4) * (1.0 - r * r), -0.5 * (n - 4) * r, np.full_like(r, -0.5 * (n - 4))


def bubble4_value(spec: BubbleSpec, r, rho):
    """Robin bubble: radial weight times singular factor; equals D^{(4-n)/2} on the sphere."""
    return radial_weight(spec.n, r)[0] * bubble4_profile(spec, r, rho)


class Bubble4Partials(NamedTuple):
    dr: np.ndarray
    drho: np.ndarray
    drho2: np.ndarray
    drr: np.ndarray
    gradsq: np.ndarray
    laplacian: np.ndarray
    drrho: np.ndarray


def bubble4_partials(spec: BubbleSpec, r, rho) -> Bubble4Partials:
    """Closed-form partial derivatives of the singular factor of the Robin bubble.

    The laplacian uses the series limit (n-2) d2/drho2 for the cot(rho) term on
    the axis rho = 0.
    """
    _require_fourth(spec)
    n, eps = spec.n, spec.eps
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    s = 1.0 - r
    a, d = _corner(eps, r, rho)
    dn2 = d ** (0.5 * n)
    e_r = d + (n - 2) * eps * a
    e_rho = d + (n - 2) * eps * s
    dr = (n - 4) * s * e_r / dn2
    drho = -(n - 4) * rho * e_rho / dn2
    drho2 = -(n - 4) / d ** (0.5 * n + 1) * (
        d * e_rho - n * rho * rho * e_rho + 2.0 * rho * rho * d
    )
    drr = (n - 4) / d ** (0.5 * n + 1) * (
        -e_r * d - s * (2.0 * a + (n - 2) * eps) * d + n * a * s * e_r
    )
    drrho = -(n - 4) * rho / d ** (0.5 * n + 1) * (n * a * e_rho - (2.0 * a + (n - 2) * eps) * d)
    gradsq = dr**2 + (drho / r) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        cot_term = np.where(rho > 0, (n - 2) * drho / np.tan(np.where(rho > 0, rho, 1.0)), (n - 2) * drho2)
    lap = drr + (n - 1) / r * dr + (drho2 + cot_term) / r**2
    return Bubble4Partials(dr, drho, drho2, drr, gradsq, lap, drrho)


def robin_factor_jet(n: int, eps: float, r: Jet, rho: Jet) -> Jet:
    """Jet of the singular factor built from its closed-form partials.

    The closed form of d_r carries the factor (1 - r), so the Robin condition
    holds at r = 1 without the eps^{-n/2} cancellation of composed jets.
    """
    spec = BubbleSpec("trace4", n, eps, np.inf)
    p = bubble4_partials(spec, r.val, rho.val)
    gr, gt = r.grad, rho.grad
    outer = lambda u, v: u[..., :, None] * v[..., None, :]  # noqa: E731
    hess = (p.drr[..., None, None] * outer(gr, gr) + p.drho2[..., None, None] * outer(gt, gt)
            + p.drrho[..., None, None] * (outer(gr, gt) + outer(gt, gr))
            + p.dr[..., None, None] * r.hess + p.drho[..., None, None] * rho.hess)
    return Jet(bubble4_profile(spec, r.val, rho.val), p.dr[..., None] * gr + p.drho[..., None] * gt, hess)


def psi_hat_laplacian(n: int, s, t):
    """Flat half-space laplacian of the rescaled Robin bubble at (s, t) = ((1-r)/eps, rho/eps)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    q = (1.0 + s) ** 2 + t * t
    return -2.0 * (n - 4) * (q + (n - 2) * (1.0 + s)) * q ** (-0.5 * n)


class LogBubble(NamedTuple):
    value: np.ndarray
    log_part: tuple        # (value, d_r, d_rho, d_rr, d_rhorho) of -log D
    shift_part: tuple      # same for 2 eps (1-r)/D


def bubble4d_value(spec: BubbleSpec, r, rho) -> LogBubble:
    """Zero-Neumann log bubble -log D + 2 eps (1-r)/D with closed-form partials."""
    if spec.n != 4:
        raise ValueError("the log bubble is defined for n = 4")
    eps = spec.eps
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    s = 1.0 - r
    a, d = _corner(eps, r, rho)
    log_part = (
        -np.log(d),
        2.0 * a / d,
        -2.0 * rho / d,
        -2.0 / d + 4.0 * a * a / d**2,
        -2.0 / d + 4.0 * rho * rho / d**2,
    )
    shift_part = (
        2.0 * eps * s / d,
        -2.0 * eps / d + 4.0 * eps * s * a / d**2,
        -4.0 * eps * s * rho / d**2,
        (-8.0 * eps**2 - 12.0 * eps * s) / d**2 + 16.0 * eps * s * a * a / d**3,
        -4.0 * eps * s / d**2 + 16.0 * eps * s * rho * rho / d**3,
    )
    return LogBubble(log_part[0] + shift_part[0], log_part, shift_part)


class LaplacianTerms(NamedTuple):
    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    remainder: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.b0 + self.b1 + self.b2 + self.b3 + self.remainder


def laplacian_decomposition_4d(spec: BubbleSpec, c1: float, weight: float, r, rho) -> LaplacianTerms:
    """Split the laplacian of u = log(weight e^{3 phi} + c1 log(1/eps)) / 3 inside an annulus.

    With W = 1 + c1 log(1/eps) e^{-3 phi} / weight and Lap1 = d_rr + d_rhorho + (2/rho) d_rho:
    b0 = Lap1(-log D)/W, b3 = Lap1(2 eps (1-r)/D)/W, b1 + b2 = 3 |d phi|^2 (W-1)/W^2
    (r and rho parts), and the remainder is the rest of the 4-D laplacian in
    polar coordinates.
    """
    bub = bubble4d_value(spec, r, rho)
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    phi = bub.value
    p_r = bub.log_part[1] + bub.shift_part[1]
    p_t = bub.log_part[2] + bub.shift_part[2]
    p_tt = bub.log_part[4] + bub.shift_part[4]
    big = c1 * math.log(1.0 / spec.eps) / weight * np.exp(-3.0 * phi)
    w = 1.0 + big
    lap1_log = bub.log_part[3] + bub.log_part[4] + 2.0 / rho * bub.log_part[2]
    lap1_shift = bub.shift_part[3] + bub.shift_part[4] + 2.0 / rho * bub.shift_part[2]
    b0 = lap1_log / w
    b3 = lap1_shift / w
    b1 = 3.0 * p_r**2 * big / w**2
    b2 = 3.0 * p_t**2 * big / w**2
    # u_rho = phi_rho / W, u_rhorho = phi_rhorho / W + 3 phi_rho^2 (W - 1)/W^2, u_r = phi_r / W
    u_r = p_r / w
    u_t = p_t / w
    u_tt = p_tt / w + b2
    remainder = 3.0 / r * u_r + (2.0 / (np.tan(rho) * r**2) - 2.0 / rho) * u_t + (1.0 / r**2 - 1.0) * u_tt
    return LaplacianTerms(b0, b1, b2, b3, remainder)


# ----------------------------------------------------------------------------
# Assembly


def floor_scale(order: str, n: int, eps: float) -> float:
    """Size of the positive floor added to U."""
    order = normalize_order(order)
    if order == "trace2":
        return eps ** (3 - n) * math.log(1.0 / eps)
    if order == "trace4":
        return eps ** (3 - n)
    if order == "trace4D":
        return math.log(1.0 / eps)
    return 1.0


def density_exponent(order: str, n: int) -> float:
    """The power k with boundary bubble density nu chi^k (eps^2 + rho^2)^{1-n}."""
    if order == "trace2":
        return 2.0 * (n - 1) / (n - 2)
    if order == "trace4":
        return 2.0 * (n - 1) / (n - 4)
    return 1.0


def outer_transform(order: str, n: int):
    """u = G(U): returns a function mapping U values to (G, G', G'')."""
    if order in ("trace2", "trace4"):
        k = 1.0 / density_exponent(order, n)

        def g(v):
            return v**k, k * v ** (k - 1.0), k * (k - 1.0) * v ** (k - 2.0)
        return g
    c = 1.0 / 3.0 if order == "trace4D" else 1.0

    def g(v):
        return c * np.log(v), c / v, -c / v**2
    return g


def default_delta(measure: DiscreteMeasure, order: str) -> float:
    cap = DELTA_CAP_FOURTH_ORDER if normalize_order(order) == "trace4" else DELTA_CAP
    return min(DELTA_FRACTION * 0.5 * measure.min_separation(), cap)


def default_outer(measure: DiscreteMeasure, delta: float) -> float:
    """End of the generator cutoff: halfway from 2 delta to half the minimum separation."""
    half = 0.5 * min(measure.min_separation(), math.pi)
    return 2.0 * delta + 0.5 * (half - 2.0 * delta)


def default_measure(order: str, n: int, m: int) -> DiscreteMeasure:
    order = normalize_order(order)
    if order == "widom2D" and m == 0:
        return DiscreteMeasure(np.array([[1.0, 0.0]]), [1.0])
    return known_design(m, n)


@dataclass(frozen=True)
class GridPolicy:
    """Resolution of every rule used on one test function; ``level`` refines all of them."""

    level: int = 0

    def order(self) -> int:
        return GAUSS_ORDER + 4 * self.level

    def finest(self, eps: float) -> float:
        return eps / 2.0 ** (3 + self.level)

    def sphere_degree(self, n: int, m: int) -> int:
        base = {2: 40, 3: 32, 4: 24}.get(n, 16)
        return base + 4 * m + 8 * self.level

    def fiber_degree(self, n: int, m: int) -> int:
        return 2 * m + 8 + 4 * self.level

    def smooth_panels(self) -> int:
        return 4 * (self.level + 1)


def _uniform_edges(a: float, b: float, count: int) -> np.ndarray:
    return np.linspace(a, b, count + 1)


def jet_polynomial(coords: list, alphas, coeffs, constant: float = 0.0) -> Jet:
    """sum_k coeffs[k] x^alphas[k] + constant as a jet in the coordinates."""
    dim = len(coords)
    shape = coords[0].val.shape
    powers = [[Jet.constant(1.0, dim, shape)] for _ in range(dim)]
    top = max((max(a) for a in alphas), default=0)
    for j in range(dim):
        for _ in range(top):
            powers[j].append(powers[j][-1] * coords[j])
    total = Jet.constant(constant, dim, shape)
    for alpha, c in zip(alphas, coeffs):
        if c == 0.0:
            continue
        term = powers[0][alpha[0]]
        for j in range(1, dim):
            if alpha[j]:
                term = term * powers[j][alpha[j]]
        total = total + term * float(c)
    return total


class SphereField(NamedTuple):
    """An angular function and its intrinsic derivatives on the unit sphere."""

    value: np.ndarray
    grad_sq: np.ndarray
    laplacian: np.ndarray


def _sphere_operators(f: Jet, points: np.ndarray, n: int) -> SphereField:
    g = f.grad
    h = f.hess
    radial = np.einsum("...k,...k->...", points, g)
    radial2 = np.einsum("...k,...kl,...l->...", points, h, points)
    lap = np.trace(h, axis1=-2, axis2=-1) - radial2 - (n - 1) * radial
    grad_sq = np.sum(g * g, axis=-1) - radial**2
    return SphereField(f.val, np.maximum(grad_sq, 0.0), lap)


@dataclass(frozen=True)
class TestFunctionSpec:
    """Parameters that fully determine one assembled test function."""

    order: str
    n: int
    m: int
    eps: float
    delta: float
    outer: float
    measure: DiscreteMeasure
    beta: np.ndarray
    c1: float
    floor: float
    gram_condition: float = float("nan")
    raw_moments: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "n": self.n,
            "m": self.m,
            "eps": self.eps,
            "delta": self.delta,
            "outer": self.outer,
            "centers": self.measure.points.tolist(),
            "weights": self.measure.weights.tolist(),
            "beta": np.asarray(self.beta).tolist(),
            "c1": self.c1,
            "floor": self.floor,
            "gram_condition": self.gram_condition,
            "profile_knots": {
                "eta1": [1.0 - 2.0 * self.delta, 1.0 - self.delta],
                "chi": [self.delta, 2.0 * self.delta],
                "eta2": [1.0 - 4.0 * self.delta, 1.0 - 2.0 * self.delta],
                "cap": [2.0 * self.delta, self.outer],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class TestFunction:
    """Evaluation of an assembled test function and of its pieces."""

    __test__ = False

    def __init__(self, spec: TestFunctionSpec, grids: GridPolicy = GridPolicy()):
        self.spec = spec
        self.grids = grids
        self.profiles = CutoffProfiles(spec.delta, spec.outer)
        self.system = MomentSystem(spec.n, spec.m) if spec.m >= 1 else None
        self.G = outer_transform(spec.order, spec.n)

    # -- basic attributes --------------------------------------------------
    @property
    def order(self) -> str:
        return self.spec.order

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def eps(self) -> float:
        return self.spec.eps

    @property
    def centers(self) -> np.ndarray:
        return self.spec.measure.points

    @property
    def weights(self) -> np.ndarray:
        return self.spec.measure.weights

    @property
    def floor_constant(self) -> float:
        return self.spec.c1 * self.spec.floor

    @cached_property
    def poly_coefficients(self) -> np.ndarray:
        """Monomial coefficients of sum_j beta_j p_j (without constant)."""
        if self.system is None:
            return np.zeros(0)
        return self.system.transform @ np.asarray(self.spec.beta, dtype=float)

    @cached_property
    def poly_constant(self) -> float:
        if self.system is None:
            return 0.0
        return -float(self.poly_coefficients @ self.system.averages)

    # -- bubble density ----------------------------------------------------
    def density_jet(self, r: Jet, rho: Jet) -> Jet:
        """Bubble term of U centred at one point, without its weight nu_i."""
        n, eps = self.n, self.eps
        cut = self.profiles.eta1.jet(r) * self.profiles.chi.jet(rho)
        s = 1.0 - r
        if self.order == "widom2D":
            d = s * s + rho * rho + eps * eps
            return cut / d
        a = s + eps
        d = a * a + rho * rho
        if self.order == "trace2":
            return (cut * d ** (0.5 * (2 - n))) ** density_exponent("trace2", n)
        if self.order == "trace4":
            psi_eps = robin_factor_jet(n, eps, r, rho)
            psi = 1.0 + 0.25 * (n - 4) * (1.0 - r * r)
            return (cut * psi * psi_eps) ** density_exponent("trace4", n)
        phi = -d.log() + 2.0 * eps * s / d
        return cut * (3.0 * phi).exp()

    def boundary_density(self, rho) -> np.ndarray:
        """Bubble term on the sphere as a function of the distance to its centre."""
        rho = np.asarray(rho, dtype=float)
        chi = self.profiles.chi(rho)[0]
        k = density_exponent(self.order, self.n)
        return chi**k * (self.eps**2 + rho * rho) ** (1 - self.n)

    # -- radial background -------------------------------------------------
    def _boost(self, r: Jet) -> Jet:
        """(n-1)/2 eta2(r)(1 - r^2): the boundary correction profile (trace4 only)."""
        return 0.5 * (self.n - 1) * self.profiles.eta2.jet(r) * (1.0 - r * r)

    def radial_jets(self, r: Jet, boundary_term: bool = True):
        """A(r) and B(r) as jets; ``boundary_term=False`` drops the trace4 g term."""
        f = self.floor_constant
        eta1 = self.profiles.eta1.jet(r)
        if self.order == "trace4" and boundary_term:
            k = self._boost(r)
            return f * (1.0 + k), eta1 + k
        return Jet.constant(f, r.dim, r.val.shape), eta1

    def radial_profiles(self, r):
        """Arrays (A, A', A'', B, B', B'')."""
        rj = Jet.variable(np.asarray(r, dtype=float), 0, 1)
        a, b = self.radial_jets(rj)
        return a.val, a.grad[..., 0], a.hess[..., 0, 0], b.val, b.grad[..., 0], b.hess[..., 0, 0]

    @property
    def radial_support(self) -> float:
        """Smallest r where U is not constant."""
        return 1.0 - (4.0 if self.order == "trace4" else 2.0) * self.spec.delta

    # -- angular correction -----------------------------------------------
    def cap_weights(self, points: np.ndarray) -> np.ndarray:
        """kappa(xi) = 1 - sum_i h_i(<xi, x_i>)."""
        t = np.asarray(points) @ self.centers.T
        return 1.0 - np.sum(self.profiles.cap(t)[0], axis=-1)

    def correction_values(self, points: np.ndarray, with_cutoff: bool = True) -> np.ndarray:
        """P(xi) = sum_j beta_j kappa p_j (kappa = 1 when ``with_cutoff`` is false)."""
        pts = np.asarray(points, dtype=float)
        if self.system is None:
            return np.zeros(pts.shape[:-1])
        from .measures import monomial_values

        poly = monomial_values(pts, self.system.alphas) @ self.poly_coefficients + self.poly_constant
        return poly * self.cap_weights(pts) if with_cutoff else poly

    def correction_field(self, points: np.ndarray, with_cutoff: bool = True) -> SphereField:
        """P with its spherical gradient norm and spherical laplacian at unit vectors."""
        pts = np.asarray(points, dtype=float)
        if self.system is None:
            z = np.zeros(pts.shape[:-1])
            return SphereField(z, z.copy(), z.copy())
        coords = Jet.coordinates(*[pts[..., k] for k in range(self.n)])
        poly = jet_polynomial(coords, self.system.alphas, self.poly_coefficients, self.poly_constant)
        if with_cutoff:
            total = Jet.constant(0.0, self.n, pts.shape[:-1])
            for c in self.centers:
                t = coords[0] * float(c[0])
                for k in range(1, self.n):
                    t = t + coords[k] * float(c[k])
                total = total + self.profiles.cap.jet(t)
            poly = poly * (1.0 - total)
        return _sphere_operators(poly, pts, self.n)

    def generator_values(self, points: np.ndarray) -> np.ndarray:
        """Boundary values kappa(xi) p_j(xi) of every generator, shape (..., L)."""
        return self.system.basis(points) * self.cap_weights(points)[..., None]

    # -- point evaluation ----------------------------------------------------
    def center_distances(self, xi: np.ndarray) -> np.ndarray:
        """Geodesic distances to every centre, stable for small angles."""
        diff = np.linalg.norm(xi[..., None, :] - self.centers, axis=-1)
        return 2.0 * np.arcsin(np.clip(0.5 * diff, 0.0, 1.0))

    def radial_jet(self, xi: np.ndarray, r, boundary_term: bool = True) -> Jet:
        """U along the rays through unit vectors xi, as a jet in r."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        r = np.broadcast_to(np.asarray(r, dtype=float), xi.shape[:-1]).copy()
        rj = Jet.variable(r, 0, 1)
        a, b = self.radial_jets(rj, boundary_term)
        total = a + b * self.correction_values(xi)
        rho = self.center_distances(xi)
        for i, w in enumerate(self.weights):
            near = rho[:, i] < 2.0 * self.spec.delta
            if not np.any(near):
                continue
            rho_j = Jet.constant(np.where(near, rho[:, i], 1.0), 1)
            dens = self.density_jet(rj, rho_j)
            mask = near.astype(float)
            total = total + Jet(dens.val * mask, dens.grad * mask[:, None], dens.hess * mask[:, None, None]) * float(w)
        return total

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """U at points of the closed ball."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=-1)
        xi = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], np.eye(self.n)[-1])
        return self.radial_jet(xi, r).val

    def u_values(self, x: np.ndarray) -> np.ndarray:
        return self.G(self.evaluate(x))[0]

    def background_min_ratio(self, samples: int = 65) -> float:
        """min of (U without bubbles) / floor over a dense sample of the closed ball."""
        pts = np.vstack([sphere_rule(self.n, self.grids.sphere_degree(self.n, self.spec.m))[0], self.centers])
        extra = []
        for c in self.centers:
            g = cap_grid(c, _uniform_edges(0.0, self.spec.outer, 8), 8, order=4)
            extra.append(g.points)
        pts = np.vstack([pts] + extra)
        p_true = self.correction_values(pts)
        r = np.linspace(0.0, 1.0, samples)
        a, _, _, b, _, _ = self.radial_profiles(r)
        vals = a[:, None] + b[:, None] * p_true[None, :]
        return float(vals.min() / self.spec.floor)


def _gram_and_moments(order, n, m, eps, delta, outer, measure, grids: GridPolicy, fiber_extra: int = 0):
    """Gram matrix int kappa p_j p_k over the sphere and raw bubble moments int density p_k."""
    system = MomentSystem(n, m)
    prof = CutoffProfiles(delta, outer)
    pts, wts = sphere_rule(n, 2 * m + 2)
    basis = system.basis(pts)
    gram = (basis * wts[:, None]).T @ basis
    order_q = grids.order()
    fiber = grids.fiber_degree(n, m) + fiber_extra
    smooth = _uniform_edges(0.0, 2.0 * delta, grids.smooth_panels())
    band = _uniform_edges(2.0 * delta, outer, grids.smooth_panels())
    cap_edges = np.concatenate([smooth, band[1:]])
    rho_edges = graded_edges(2.0 * delta, grids.finest(eps), knots=(delta,))
    k = density_exponent(order, n)
    raw = np.zeros(system.L)
    for c, w in zip(measure.points, measure.weights):
        g = cap_grid(c, cap_edges, fiber, order=order_q)
        h = prof.cap(g.points @ c)[0]
        b = system.basis(g.points)
        gram -= (b * (h * g.weights)[:, None]).T @ b
        g2 = cap_grid(c, rho_edges, fiber, order=order_q)
        dens = prof.chi(g2.rho)[0] ** k * (eps**2 + g2.rho**2) ** (1 - n)
        raw += w * (system.basis(g2.points) * (dens * g2.weights)[:, None]).sum(axis=0)
    return 0.5 * (gram + gram.T), raw


def solve_moment_correction(gram: np.ndarray, moments: np.ndarray):
    """beta with gram @ beta = -moments; returns (beta, condition number)."""
    gram = np.asarray(gram, dtype=float)
    moments = np.asarray(moments, dtype=float)
    if gram.size == 0:
        return np.zeros(0), 1.0
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
        raise np.linalg.LinAlgError(f"generator Gram matrix is ill-conditioned (cond={cond:.3e}); "
                                    "move the generator support")
    return np.linalg.solve(gram, -moments), cond


def _check_disjoint(measure: DiscreteMeasure, delta: float) -> None:
    if measure.points.shape[0] > 1 and 4.0 * delta >= measure.min_separation():
        raise ValueError("2 delta annuli around distinct centres overlap; decrease delta")


def ring_peak(tf: TestFunction) -> float:
    """Largest bubble term on the cutoff rings rho >= delta (boundary values dominate)."""
    return float(np.max(tf.weights)) * float(tf.boundary_density(np.array([tf.spec.delta]))[0])


def choose_floor_multiple(tf: TestFunction) -> float:
    """Smallest power of two c1 with c1 F + min(0, P) >= F on the sample grid (kappa on and off).

    For trace4D the floor must also dominate every bubble on its cutoff ring:
    otherwise log(c1 log(1/eps) + chi e^{3 phi}) carries a ring energy that
    drifts with log(1/eps) and swamps the log-slope at practical eps.
    """
    pts = np.vstack([sphere_rule(tf.n, tf.grids.sphere_degree(tf.n, tf.spec.m))[0], tf.centers])
    pmin = min(0.0, float(tf.correction_values(pts, with_cutoff=False).min()),
               float(tf.correction_values(pts).min()))
    need = 1.0 - pmin / tf.spec.floor
    if tf.order == "trace4D":
        need = max(need, ring_peak(tf) / tf.spec.floor)
    # round-off in P must not double c1
    return float(2.0 ** max(0, math.ceil(math.log2(need) - 1e-9)))


def assemble(order: str, n: int, m: int, eps: float, measure: Optional[DiscreteMeasure] = None,
             delta: Optional[float] = None, c1: Optional[float] = None,
             grids: GridPolicy = GridPolicy()) -> TestFunction:
    """Build the moment-corrected test function of the given order at scale eps."""
    order = normalize_order(order)
    _check_dimension(order, n)
    if m < 0 or (m == 0 and order != "widom2D"):
        raise ValueError("need m >= 1 (m = 0 only for widom2D)")
    if measure is None:
        measure = default_measure(order, n, m)
    measure = measure.pruned(0.0) if np.any(measure.weights == 0) else measure
    if measure.n != n:
        raise ValueError("measure lives on the wrong sphere")
    delta = default_delta(measure, order) if delta is None else float(delta)
    if order == "trace4" and not 4.0 * delta < 1.0:
        raise ValueError("trace4 needs 4 delta < 1")
    if not 0.0 < eps < delta:
        raise ValueError("need 0 < eps < delta")
    _check_disjoint(measure, delta)
    outer = default_outer(measure, delta)
    floor = floor_scale(order, n, eps)
    if m >= 1:
        gram, raw = _gram_and_moments(order, n, m, eps, delta, outer, measure, grids)
        beta, cond = solve_moment_correction(gram, raw)
    else:
        beta, cond, raw = np.zeros(0), 1.0, np.zeros(0)
    spec = TestFunctionSpec(order, n, m, eps, delta, outer, measure, beta, 1.0, floor, cond, raw)
    tf = TestFunction(spec, grids)
    chosen = choose_floor_multiple(tf) if c1 is None else float(c1)
    spec = TestFunctionSpec(order, n, m, eps, delta, outer, measure, beta, chosen, floor, cond, raw)
    return TestFunction(spec, grids)


# ----------------------------------------------------------------------------
# Boundary checks


def boundary_sample(tf: TestFunction, count: int = 200) -> np.ndarray:
    """Boundary points: half spread over the sphere, half in the caps at graded distances."""
    n = tf.n
    rng = np.random.default_rng(12345)
    spread = rng.standard_normal((count // 2, n))
    spread /= np.linalg.norm(spread, axis=1, keepdims=True)
    near = []
    per = count - count // 2
    for k in range(per):
        c = tf.centers[k % len(tf.centers)]
        rho = tf.eps * 0.01 * (300.0 * tf.spec.outer / tf.eps) ** (k / max(per - 1, 1))
        rho = min(rho, math.pi)
        frame = complement_frame(c)
        w = frame @ rng.standard_normal(n - 1)
        w /= np.linalg.norm(w)
        near.append(math.cos(rho) * c + math.sin(rho) * w)
    return np.vstack([spread, np.array(near)])


def boundary_correction_g(tf: TestFunction, points: np.ndarray) -> np.ndarray:
    """g(1, xi) = (d_r U1 + (n-1) U1)/2, U1 being U without the g term (trace4 only)."""
    if tf.order != "trace4":
        raise ValueError("the boundary correction belongs to trace4")
    pts = np.atleast_2d(points)
    jet = tf.radial_jet(pts, 1.0, boundary_term=False)
    return 0.5 * (jet.grad[:, 0] + (tf.n - 1) * jet.val)


def neumann_target(tf: TestFunction, u: np.ndarray) -> np.ndarray:
    if tf.order == "trace4":
        return -0.5 * (tf.n - 4) * u
    if tf.order in ("trace4D", "widom2D"):
        return np.zeros_like(u)
    raise ValueError("trace2 test functions carry no boundary condition")


def neumann_residual(tf: TestFunction, points: Optional[np.ndarray] = None) -> float:
    """max over boundary samples of |d_r u - target(u)| from exact radial derivatives."""
    pts = boundary_sample(tf) if points is None else np.atleast_2d(points)
    jet = tf.radial_jet(pts, 1.0)
    g0, g1, _ = tf.G(jet.val)
    du = g1 * jet.grad[:, 0]
    return float(np.max(np.abs(du - neumann_target(tf, g0))))


def cancellation_profile(order: str, n: int, m: int, eps_values, measure=None, delta=None) -> list:
    """max_k |sum_i nu_i int density_i p_k| for each eps (moments before correction)."""
    out = []
    for eps in eps_values:
        tf = assemble(order, n, m, eps, measure=measure, delta=delta)
        out.append(float(np.max(np.abs(tf.spec.raw_moments))))
    return out


__all__ = [
    "BubbleSpec", "Bubble4Partials", "CutoffProfiles", "GridPolicy", "LaplacianTerms", "LogBubble",
    "Profile", "SphereField", "TestFunction", "TestFunctionSpec", "assemble", "boundary_correction_g",
    "boundary_sample", "robin_factor_jet", "bubble2_gradsq", "bubble2_value", "bubble4_partials", "bubble4_profile",
    "bubble4_value", "bubble4d_value", "cancellation_profile", "choose_floor_multiple", "ring_peak",
    "cutoff_profiles", "default_delta", "density_exponent", "floor_scale", "laplacian_decomposition_4d",
    "neumann_residual", "outer_transform", "psi_hat_laplacian", "radial_weight", "smoothstep",
    "solve_moment_correction", "ORDERS",
]
