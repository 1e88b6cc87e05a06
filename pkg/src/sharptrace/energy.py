"""Energy functionals of assembled test functions, eps-ladders and extrapolation.

Every functional I(U) = int G(U) is split as

    I(U_c) + sum_i int_{D_i} (G(U) - G(U_c)),

where U_c is U without bubbles and D_i = {r >= 1 - 2 delta, rho_i <= 2 delta}
holds the i-th bubble. U_c is smooth and resolved by a sphere rule plus cap
rules; each D_i term is axisymmetric and integrated on a graded (r, rho) grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .bubbles import GridPolicy, SphereField, TestFunction, assemble, density_exponent
from .constants import SharpTarget, normalize_order
from .jets import Jet, polar_gradsq, polar_laplacian
from .measures import DiscreteMeasure, MomentSystem, monomial_values, multi_indices
from .quadrature import annulus_grid, cap_grid, graded_edges, panel_rule, sphere_area_or_two, sphere_rule

DEFAULT_LADDERS = {
    "trace2": (0.05, 0.02, 0.01, 0.005),
    "trace4": (0.05, 0.02, 0.01, 0.005),
    "trace4D": (1e-2, 3e-3, 1e-3, 3e-4),
    "widom2D": (1e-2, 3e-3, 1e-3, 3e-4),
}
ROW_CHUNK = 2_000_000


@dataclass
class EnergyReport:
    """Boundary and interior functionals of one test function."""

    order: str
    n: int
    m: int
    eps: float
    delta: float
    c1: float
    boundary_mass: float          # integral of U over the sphere
    boundary_norm: float          # squared Lebesgue norm, or the log-average
    interior: float               # int |grad u|^2 or int (Lap u)^2
    boundary_l2: float            # int u^2 on the sphere (power orders)
    boundary_grad: float          # int |grad_S u|^2 on the sphere
    mean_value: float             # average of u on the sphere
    ratio: float                  # pointwise estimate of the constant a
    moment_residual: float
    raw_moment: float             # largest moment before correction
    beta_norm: float
    gram_condition: float
    refinement: float = float("nan")
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------------
# Angular nodes for the bubble-free part


@dataclass(frozen=True)
class _AngularNodes:
    """Signed sphere rule for U_c: smooth extension everywhere, corrected on the caps."""

    points: np.ndarray
    weights: np.ndarray
    field: SphereField


def _cap_edges(tf: TestFunction, grids: GridPolicy) -> np.ndarray:
    d = tf.spec.delta
    k = grids.smooth_panels()
    inner = np.linspace(0.0, 2.0 * d, k + 1)
    band = np.linspace(2.0 * d, tf.spec.outer, k + 1)
    return np.concatenate([inner, band[1:]])


def angular_nodes(tf: TestFunction, grids: GridPolicy) -> _AngularNodes:
    n, m = tf.n, tf.spec.m
    pts, wts = sphere_rule(n, grids.sphere_degree(n, m))
    blocks = [(pts, wts, tf.correction_field(pts, with_cutoff=False))]
    if tf.system is not None:
        edges = _cap_edges(tf, grids)
        for c in tf.centers:
            g = cap_grid(c, edges, grids.fiber_degree(n, m), order=grids.order())
            blocks.append((g.points, g.weights, tf.correction_field(g.points, with_cutoff=True)))
            blocks.append((g.points, -g.weights, tf.correction_field(g.points, with_cutoff=False)))
    return _AngularNodes(
        np.vstack([b[0] for b in blocks]),
        np.concatenate([b[1] for b in blocks]),
        SphereField(*(np.concatenate([getattr(b[2], f) for b in blocks]) for f in SphereField._fields)),
    )


def _sum(values: np.ndarray, weights: np.ndarray) -> float:
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite integrand sample")
    return math.fsum(np.ravel(v * weights))


# ----------------------------------------------------------------------------
# Interior functionals


def _radial_rule(tf: TestFunction, grids: GridPolicy):
    d = tf.spec.delta
    knots = sorted({tf.radial_support, 1.0 - 2.0 * d, 1.0 - d, 1.0})
    k = grids.smooth_panels()
    edges = np.unique(np.concatenate([np.linspace(a, b, k + 1) for a, b in zip(knots[:-1], knots[1:])]))
    r, w = panel_rule(edges, grids.order())
    return r, w * r ** (tf.n - 1)


def _interior_integrand(kind: str, g1, g2, grad_sq, lap):
    if kind == "gradient":
        return g1 * g1 * grad_sq
    lap_u = g1 * lap + g2 * grad_sq
    return lap_u * lap_u


def _background_interior(tf: TestFunction, nodes: _AngularNodes, grids: GridPolicy, kind: str) -> float:
    r, wr = _radial_rule(tf, grids)
    a, a1, a2, b, b1, b2 = tf.radial_profiles(r)
    f = nodes.field
    n = tf.n
    rows = max(1, ROW_CHUNK // max(f.value.size, 1))
    total = []
    for lo in range(0, r.size, rows):
        sl = slice(lo, lo + rows)
        rr = r[sl, None]
        u = a[sl, None] + b[sl, None] * f.value
        grad_sq = (a1[sl, None] + b1[sl, None] * f.value) ** 2 + (b[sl, None] / rr) ** 2 * f.grad_sq
        lap = (a2[sl, None] + (n - 1) * a1[sl, None] / rr
               + (b2[sl, None] + (n - 1) * b1[sl, None] / rr) * f.value + b[sl, None] * f.laplacian / rr**2)
        _, g1, g2 = tf.G(u)
        vals = _interior_integrand(kind, g1, g2, grad_sq, lap)
        total.append(_sum(vals, wr[sl, None] * nodes.weights[None, :]))
    return math.fsum(total)


def _bubble_jets(tf: TestFunction, r: np.ndarray, rho: np.ndarray, weight: float):
    rj, tj = Jet.coordinates(r, rho)
    a, _ = tf.radial_jets(rj)
    u_full = a + tf.density_jet(rj, tj) * float(weight)
    return u_full.chain(*tf.G(u_full.val)), a.chain(*tf.G(a.val))


def _bubble_interior(tf: TestFunction, grids: GridPolicy, kind: str) -> float:
    d = tf.spec.delta
    grid = annulus_grid(tf.n, 2.0 * d, 2.0 * d, grids.finest(tf.eps), knots_r=(d,), knots_rho=(d,),
                        order=grids.order())
    total = []
    for w in tf.weights:
        u, uc = _bubble_jets(tf, grid.r, grid.rho, w)
        if kind == "gradient":
            vals = polar_gradsq(u, grid.r) - polar_gradsq(uc, grid.r)
        else:
            vals = (polar_laplacian(u, grid.r, grid.rho, tf.n) ** 2
                    - polar_laplacian(uc, grid.r, grid.rho, tf.n) ** 2)
        total.append(grid.integrate(vals))
    return math.fsum(total)


def interior_energy(tf: TestFunction, kind: str, grids: Optional[GridPolicy] = None,
                    nodes: Optional[_AngularNodes] = None) -> float:
    """int |grad u|^2 (kind='gradient') or int (Lap u)^2 (kind='laplacian') over the ball."""
    grids = grids or tf.grids
    nodes = nodes or angular_nodes(tf, grids)
    return _background_interior(tf, nodes, grids, kind) + _bubble_interior(tf, grids, kind)


# ----------------------------------------------------------------------------
# Boundary functionals


def _boundary_rho_rule(tf: TestFunction, grids: GridPolicy):
    d = tf.spec.delta
    edges = graded_edges(2.0 * d, grids.finest(tf.eps), knots=(d,))
    rho, w = panel_rule(edges, grids.order())
    return rho, w * np.sin(rho) ** (tf.n - 2) * sphere_area_or_two(tf.n - 2)


def boundary_integrals(tf: TestFunction, grids: Optional[GridPolicy] = None,
                       nodes: Optional[_AngularNodes] = None) -> dict:
    """mass = int U, l2 = int u^2, grad = int |grad_S u|^2, mean_u = int u over the sphere."""
    grids = grids or tf.grids
    nodes = nodes or angular_nodes(tf, grids)
    base = tf.floor_constant
    f = nodes.field
    u = base + f.value
    g0, g1, _ = tf.G(u)
    out = {
        "mass": _sum(u, nodes.weights),
        "l2": _sum(g0 * g0, nodes.weights),
        "grad": _sum(g1 * g1 * f.grad_sq, nodes.weights),
        "mean_u": _sum(g0, nodes.weights),
    }
    rho, w = _boundary_rho_rule(tf, grids)
    rj, tj = Jet.coordinates(np.ones_like(rho), rho)
    dens = tf.density_jet(rj, tj)
    gc0 = tf.G(np.full_like(rho, base))[0]
    for nu in tf.weights:
        uu = base + nu * dens.val
        h0, h1, _ = tf.G(uu)
        out["mass"] += _sum(nu * dens.val, w)
        out["l2"] += _sum(h0 * h0 - gc0 * gc0, w)
        out["grad"] += _sum((h1 * nu * dens.grad[:, 1]) ** 2, w)
        out["mean_u"] += _sum(h0 - gc0, w)
    return out


def boundary_moment_residual(tf: TestFunction, grids: Optional[GridPolicy] = None) -> float:
    """max over 1 <= |alpha| <= m of |int U x^alpha / int U - mean of x^alpha| on refined rules."""
    m = tf.spec.m
    if m < 1:
        return 0.0
    grids = grids or GridPolicy(tf.grids.level + 1)
    n = tf.n
    alphas = multi_indices(n, m, 1)
    system = MomentSystem(n, m)
    nodes = angular_nodes(tf, grids)
    u = tf.floor_constant + nodes.field.value
    mono = monomial_values(nodes.points, alphas)
    moments = (mono * (u * nodes.weights)[:, None]).sum(axis=0)
    mass = _sum(u, nodes.weights)
    edges = graded_edges(2.0 * tf.spec.delta, grids.finest(tf.eps), knots=(tf.spec.delta,))
    for c, nu in zip(tf.centers, tf.weights):
        g = cap_grid(c, edges, grids.fiber_degree(n, m) + m, order=grids.order())
        dens = nu * tf.boundary_density(g.rho) * g.weights
        moments = moments + (monomial_values(g.points, alphas) * dens[:, None]).sum(axis=0)
        mass += math.fsum(dens)
    return float(np.max(np.abs(moments / mass - system.averages)))


# ----------------------------------------------------------------------------
# Reports per order


def _report(tf: TestFunction, kind: str, refine: bool) -> EnergyReport:
    spec = tf.spec
    n, order = tf.n, tf.order
    nodes = angular_nodes(tf, tf.grids)
    interior = interior_energy(tf, kind, tf.grids, nodes)
    bnd = boundary_integrals(tf, tf.grids, nodes)
    area = sphere_area_or_two(n - 1)
    mean = bnd["mean_u"] / area
    if order in ("trace2", "trace4"):
        norm = bnd["mass"] ** (2.0 / density_exponent(order, n))
        ratio = norm / interior
    else:
        norm = math.log(bnd["mass"] / area)
        lower = interior + (2.0 * bnd["grad"] if order == "trace4D" else 0.0)
        shift = 3.0 * mean if order == "trace4D" else mean
        ratio = (norm - shift) / lower
    refinement = float("nan")
    if refine:
        finer = TestFunction(spec, GridPolicy(tf.grids.level + 1))
        nodes2 = angular_nodes(finer, finer.grids)
        interior2 = interior_energy(finer, kind, finer.grids, nodes2)
        mass2 = boundary_integrals(finer, finer.grids, nodes2)["mass"]
        refinement = max(abs(interior2 - interior) / abs(interior), abs(mass2 - bnd["mass"]) / abs(bnd["mass"]))
    return EnergyReport(
        order=order, n=n, m=spec.m, eps=spec.eps, delta=spec.delta, c1=spec.c1,
        boundary_mass=bnd["mass"], boundary_norm=norm, interior=interior,
        boundary_l2=bnd["l2"], boundary_grad=bnd["grad"], mean_value=mean, ratio=ratio,
        moment_residual=boundary_moment_residual(tf),
        raw_moment=float(np.max(np.abs(spec.raw_moments))) if spec.raw_moments.size else 0.0,
        beta_norm=float(np.linalg.norm(spec.beta)) if np.size(spec.beta) else 0.0,
        gram_condition=spec.gram_condition, refinement=refinement,
        grid={"level": tf.grids.level, "order": tf.grids.order(), "finest": tf.grids.finest(spec.eps),
              "sphere_degree": tf.grids.sphere_degree(n, spec.m),
              "fiber_degree": tf.grids.fiber_degree(n, spec.m), "angular_nodes": int(nodes.weights.size)},
    )


def _expect(tf: TestFunction, order: str) -> None:
    if tf.order != order:
        raise ValueError(f"expected a {order} test function, got {tf.order}")


def energy_trace2(tf: TestFunction, refine: bool = False) -> EnergyReport:
    _expect(tf, "trace2")
    return _report(tf, "gradient", refine)


def energy_trace4(tf: TestFunction, refine: bool = False) -> EnergyReport:
    _expect(tf, "trace4")
    return _report(tf, "laplacian", refine)


def energy_trace4d(tf: TestFunction, refine: bool = False) -> EnergyReport:
    _expect(tf, "trace4D")
    return _report(tf, "laplacian", refine)


def energy_widom2d(tf: TestFunction, refine: bool = False) -> EnergyReport:
    _expect(tf, "widom2D")
    return _report(tf, "gradient", refine)


ENERGY = {"trace2": energy_trace2, "trace4": energy_trace4, "trace4D": energy_trace4d, "widom2D": energy_widom2d}


def energy_report(tf: TestFunction, refine: bool = False) -> EnergyReport:
    return ENERGY[tf.order](tf, refine)


def _rung(args) -> EnergyReport:
    order, n, m, eps, measure, delta, c1, level, refine = args
    tf = assemble(order, n, m, eps, measure=measure, delta=delta, c1=c1, grids=GridPolicy(level))
    return energy_report(tf, refine)


def sweep(order: str, n: int, m: int, ladder: Optional[Sequence[float]] = None,
          measure: Optional[DiscreteMeasure] = None, delta: Optional[float] = None,
          grids: GridPolicy = GridPolicy(), refine: bool = False, workers: int = 1) -> list:
    """Reports along an eps-ladder with one floor multiple c1 shared by every rung.

    ``workers > 1`` evaluates the rungs in separate processes; results keep ladder order.
    """
    order = normalize_order(order)
    ladder = tuple(DEFAULT_LADDERS[order] if ladder is None else ladder)
    fns = [assemble(order, n, m, eps, measure=measure, delta=delta, grids=grids) for eps in ladder]
    c1 = max(tf.spec.c1 for tf in fns)
    if workers > 1:
        tasks = [(order, n, m, eps, measure, delta, c1, grids.level, refine) for eps in ladder]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_rung, tasks))
    out = []
    for eps, tf in zip(ladder, fns):
        if tf.spec.c1 != c1:
            tf = assemble(order, n, m, eps, measure=measure, delta=delta, c1=c1, grids=grids)
        out.append(energy_report(tf, refine))
    return out


# ----------------------------------------------------------------------------
# Extrapolation


@dataclass
class PowerFit:
    """y(eps) = limit + coef * eps^power with power restricted to an interval."""

    limit: float
    coef: float
    power: float
    residual: float

    def __call__(self, eps):
        return self.limit + self.coef * np.asarray(eps, dtype=float) ** self.power


@dataclass
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    residual: float


@dataclass
class FitResult:
    model: str                     # "ratio-extrapolation" or "log-slope"
    estimate: float                # a_infinity or slope ratio
    residual: float
    target: float
    gap: float                     # (estimate - target) / target
    details: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(eps, values, power_range=(1.0, 2.0)) -> PowerFit:
    """Least squares in (limit, coef) for each power; the power is optimized on its interval."""
    x = np.asarray(eps, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        raise ValueError("a power-law fit needs at least three points")

    def solve(p):
        mat = np.stack([np.ones_like(x), x**p], axis=1)
        coef, *_ = np.linalg.lstsq(mat, y, rcond=None)
        res = y - mat @ coef
        return coef, float(np.sqrt(np.mean(res**2)))

    lo, hi = power_range
    grid = np.linspace(lo, hi, 41)
    best = min(grid, key=lambda p: solve(p)[1])
    step = (hi - lo) / 40.0
    opt = minimize_scalar(lambda p: solve(p)[1], bounds=(max(lo, best - step), min(hi, best + step)),
                          method="bounded", options={"xatol": 1e-10})
    p = float(opt.x) if solve(opt.x)[1] <= solve(best)[1] else float(best)
    coef, res = solve(p)
    return PowerFit(float(coef[0]), float(coef[1]), p, res)


def fit_line(x, y) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mat = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(mat, y, rcond=None)
    res = y - mat @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    return LineFit(float(coef[0]), float(coef[1]), r2, float(np.sqrt(np.mean(res**2))))


def _ladder_diagnostics(reports) -> list:
    eps = [r.eps for r in reports]
    notes = []
    if len(set(eps)) != len(eps):
        notes.append("repeated eps values")
    if any(b >= a for a, b in zip(eps, eps[1:])) and any(b <= a for a, b in zip(eps, eps[1:])):
        notes.append("eps ladder is not monotone")
    return notes


def fit_sharp_constant(reports: Sequence[EnergyReport], target: SharpTarget,
                       power_range=(1.0, 2.0)) -> FitResult:
    """Extrapolate the constant a from a ladder of reports and compare it with ``target``."""
    if len(reports) < 3 or len({r.eps for r in reports}) < 3:
        raise ValueError("need at least three reports at distinct eps")
    notes = _ladder_diagnostics(reports)
    order = reports[0].order
    eps = np.array([r.eps for r in reports])
    if order in ("trace2", "trace4"):
        fit = fit_power_law(eps, [r.ratio for r in reports], power_range)
        gap = (fit.limit - target.value) / target.value
        return FitResult("ratio-extrapolation", fit.limit, fit.residual, target.value, gap,
                         {"power": fit.power, "coef": fit.coef,
                          "relative_residual": fit.residual / target.value}, notes)
    x = np.log(1.0 / eps)
    if order == "trace4D":
        num = [r.boundary_norm - 3.0 * r.mean_value for r in reports]
        den = [r.interior + 2.0 * r.boundary_grad for r in reports]
    else:
        num = [r.boundary_norm - r.mean_value for r in reports]
        den = [r.interior for r in reports]
    top, bottom = fit_line(x, num), fit_line(x, den)
    est = top.slope / bottom.slope
    gap = (est - target.value) / target.value
    resid = abs(est) * math.hypot(top.residual / max(abs(top.slope) * np.ptp(x), 1e-300),
                                  bottom.residual / max(abs(bottom.slope) * np.ptp(x), 1e-300))
    return FitResult("log-slope", est, resid, target.value, gap,
                     {"numerator_slope": top.slope, "denominator_slope": bottom.slope,
                      "numerator_r2": top.r_squared, "denominator_r2": bottom.r_squared}, notes)


__all__ = [
    "DEFAULT_LADDERS", "EnergyReport", "FitResult", "LineFit", "PowerFit", "angular_nodes",
    "boundary_integrals", "boundary_moment_residual", "energy_report", "energy_trace2", "energy_trace4",
    "energy_trace4d", "energy_widom2d", "fit_line", "fit_power_law", "fit_sharp_constant",
    "interior_energy", "sweep",
]
