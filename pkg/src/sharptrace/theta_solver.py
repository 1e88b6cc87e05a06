"""Minimize sum(w_i^theta) over weighted point sets with vanishing degree-m moments.

Points are unnormalized vectors mapped through x = y/|y|; weights come from the
simplex map w = z^2/sum(z^2). Each start runs a feasibility least-squares
phase, then an augmented-Lagrangian loop with an L-BFGS inner solver on a
smoothed objective sum((w + s)^theta), then prunes and re-projects onto the
constraint set.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .constants import dgs_lower_bound, n_m_closed_form, theta_closed_form, NoClosedForm
from .measures import (PRUNE_THRESHOLD, DiscreteMeasure, MomentSystem, known_design,
                       moment_residual, theta_objective)


class InfeasibleError(RuntimeError):
    """No start drove the moment residual below tolerance."""


@lru_cache(maxsize=None)
def moment_system(n: int, m: int) -> MomentSystem:
    return MomentSystem(n, m)


@dataclass(frozen=True)
class SolverOptions:
    support: Optional[int] = None          # default: harmonic dimension + 1
    starts: int = 12
    tol: float = 1e-9
    prune: float = PRUNE_THRESHOLD
    seed: int = 0
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    outer_iterations: int = 8
    inner_iterations: int = 400
    smoothing: Sequence[float] = (1e-3, 1e-5, 1e-7, 1e-9)
    seed_known: bool = False
    dgs_share: float = 0.5                 # fraction of starts using the DGS support size

    def __post_init__(self):
        if self.support is not None and self.support < 1:
            raise ValueError("support budget must be >= 1")
        if self.tol <= 0 or self.prune <= 0 or self.starts < 1:
            raise ValueError("tolerances and start count must be positive")


@dataclass
class StartReport:
    start: int
    kind: str
    support_budget: int
    value: float
    residual: float
    support: int
    feasible: bool


@dataclass
class ThetaResult:
    measure: DiscreteMeasure
    value: float
    residual: float
    support: int
    certificate: str
    m: int
    theta: float
    n: int
    starts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "m": self.m, "theta": self.theta, "n": self.n,
            "value": self.value, "residual": self.residual, "support": self.support,
            "certificate": self.certificate, "measure": self.measure.to_dict(),
            "starts": [asdict(s) for s in self.starts],
        }


# ----------------------------------------------------------------------------
# Parameterization


class _Problem:
    def __init__(self, m: int, n: int, count: int, theta: float):
        self.system = moment_system(n, m)
        self.m, self.n, self.count, self.theta = m, n, count, theta

    def split(self, v: np.ndarray):
        y = v[: self.count * self.n].reshape(self.count, self.n)
        z = v[self.count * self.n:]
        return y, z

    def decode(self, v: np.ndarray):
        y, z = self.split(v)
        ny = np.linalg.norm(y, axis=1)
        x = y / ny[:, None]
        ssum = z @ z
        w = z * z / ssum
        return x, ny, z, ssum, w

    def constraints(self, v: np.ndarray) -> np.ndarray:
        x, _, _, _, w = self.decode(v)
        return w @ self.system.basis(x)

    def pullback(self, v: np.ndarray, gw: np.ndarray, gx: np.ndarray) -> np.ndarray:
        """Chain rule from (dF/dw, dF/dx) to dF/dv."""
        x, ny, z, ssum, w = self.decode(v)
        gx_t = gx - np.sum(gx * x, axis=1, keepdims=True) * x
        gy = gx_t / ny[:, None]
        gz = 2.0 * z / ssum * (gw - gw @ w)
        return np.concatenate([gy.ravel(), gz])

    def constraint_jacobian(self, v: np.ndarray) -> np.ndarray:
        x, ny, z, ssum, w = self.decode(v)
        b = self.system.basis(x)                      # (N, L)
        db = self.system.basis_gradients(x)           # (N, L, n)
        proj = np.eye(self.n)[None] - x[:, :, None] * x[:, None, :]
        dy = np.einsum("i,ilj,ijk->lik", w, db, proj) / ny[None, :, None]
        # dw_i/dz_j = 2 z_j / S (delta_ij - w_i)
        bw = w @ b                                     # (L,)
        dz = (2.0 * z / ssum)[None, :] * (b.T - bw[:, None])
        return np.hstack([dy.reshape(b.shape[1], -1), dz])

    def encode(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(x, float).ravel(), np.sqrt(np.maximum(w, 0.0))])


def _feasibility(problem: _Problem, v0: np.ndarray, tol: float, max_nfev: int = 400) -> np.ndarray:
    sol = least_squares(problem.constraints, v0, jac=problem.constraint_jacobian,
                        method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    return sol.x


def _augmented_lagrangian(problem: _Problem, v: np.ndarray, opts: SolverOptions) -> np.ndarray:
    theta = problem.theta
    lam = np.zeros(problem.system.L)
    mu = opts.penalty0
    smoothing = list(opts.smoothing)
    prev = np.inf
    for outer in range(opts.outer_iterations):
        s = smoothing[min(outer, len(smoothing) - 1)]

        def fun(vec):
            x, ny, z, ssum, w = problem.decode(vec)
            b = problem.system.basis(x)
            c = w @ b
            mult = lam + mu * c
            val = np.sum((w + s) ** theta) + lam @ c + 0.5 * mu * (c @ c)
            gw = theta * (w + s) ** (theta - 1.0) + b @ mult
            db = problem.system.basis_gradients(x)
            gx = w[:, None] * np.einsum("ilj,l->ij", db, mult)
            return val, problem.pullback(vec, gw, gx)

        res = minimize(fun, v, jac=True, method="L-BFGS-B",
                       options={"maxiter": opts.inner_iterations, "gtol": 1e-12, "ftol": 1e-15})
        v = res.x
        c = problem.constraints(v)
        lam = lam + mu * c
        cn = np.abs(c).max()
        if cn > 0.25 * prev:
            mu *= opts.penalty_growth
        prev = cn
    return v


def _prune_and_project(problem: _Problem, v: np.ndarray, opts: SolverOptions):
    """Drop negligible atoms, then project back onto the constraint set."""
    x, _, _, _, w = problem.decode(v)
    keep = w > opts.prune
    if not np.any(keep):
        return None
    sub = _Problem(problem.m, problem.n, int(keep.sum()), problem.theta)
    v_sub = sub.encode(x[keep], w[keep] / w[keep].sum())
    v_sub = _feasibility(sub, v_sub, opts.tol, max_nfev=200)
    xs, _, _, _, ws = sub.decode(v_sub)
    # Merge atoms that collapsed onto one another.
    order = np.argsort(-ws)
    merged_x, merged_w = [], []
    for i in order:
        for k, y in enumerate(merged_x):
            if np.linalg.norm(xs[i] - y) < 1e-7:
                merged_w[k] += ws[i]
                break
        else:
            merged_x.append(xs[i])
            merged_w.append(ws[i])
    meas = DiscreteMeasure.normalized(np.array(merged_x), np.array(merged_w))
    return meas


def _random_start(rng: np.random.Generator, count: int, n: int):
    y = rng.standard_normal((count, n))
    x = y / np.linalg.norm(y, axis=1, keepdims=True)
    w = np.full(count, 1.0 / count) * (1.0 + 0.1 * rng.random(count))
    return x, w / w.sum()


def _better(a: tuple, b: Optional[tuple], tol: float = 1e-9) -> bool:
    """Tie-break: value, then support size, then sorted weight vector."""
    if b is None:
        return True
    if a[0] < b[0] - tol:
        return True
    if a[0] > b[0] + tol:
        return False
    if a[1] != b[1]:
        return a[1] < b[1]
    return tuple(a[2]) < tuple(b[2])


def solve_theta(m: int, theta: float, n: int, opts: SolverOptions | None = None) -> ThetaResult:
    """Multistart minimization of sum(w_i^theta) subject to vanishing degree-m moments."""
    opts = opts or SolverOptions()
    if m < 1 or n < 2:
        raise ValueError("need m >= 1 and n >= 2")
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie strictly between 0 and 1")
    system = moment_system(n, m)
    budget = opts.support or system.L + 1
    dgs = dgs_lower_bound(m, n)
    budget = max(budget, dgs)
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, m, n, int(round(theta * 1e6))]))
    n_dgs = int(round(opts.dgs_share * opts.starts))
    plan = []
    for k in range(opts.starts):
        if opts.seed_known and k == 0:
            plan.append(("known", None))
        elif k < n_dgs or (opts.seed_known and k <= n_dgs):
            plan.append(("dgs", dgs))
        else:
            plan.append(("uniform", budget))

    best, best_key, reports = None, None, []
    for k, (kind, count) in enumerate(plan):
        if kind == "known":
            base = known_design(m, n)
            x = base.points + 0.05 * rng.standard_normal(base.points.shape)
            x /= np.linalg.norm(x, axis=1, keepdims=True)
            w = base.weights
            count = len(w)
        else:
            x, w = _random_start(rng, count, n)
        prob = _Problem(m, n, count, theta)
        v = _feasibility(prob, prob.encode(x, w), opts.tol)
        v = _augmented_lagrangian(prob, v, opts)
        meas = _prune_and_project(prob, v, opts)
        if meas is None:
            reports.append(StartReport(k, kind, count, math.inf, math.inf, 0, False))
            continue
        res = moment_residual(meas, m)
        val = theta_objective(meas, theta)
        ok = res <= opts.tol
        reports.append(StartReport(k, kind, count, val, res, meas.support_size, ok))
        if not ok:
            continue
        key = (val, meas.support_size, np.sort(meas.weights))
        if _better(key, best_key):
            best, best_key = meas, key
    if best is None:
        raise InfeasibleError(
            f"no start reached moment residual <= {opts.tol:g} for m={m}, n={n}, theta={theta}")
    value = theta_objective(best, theta)
    try:
        certificate = ("closed-form match"
                       if abs(value - theta_closed_form(m, theta, n)) <= 1e-6 * value else "upper bound")
    except NoClosedForm:
        certificate = "upper bound"
    return ThetaResult(best, value, moment_residual(best, m), best.support_size,
                       certificate, m, theta, n, reports)


def brute_force_theta(support: np.ndarray, m: int, theta: float, return_weights: bool = False):
    """Exact minimum of sum(w^theta) over feasible weights on a fixed support.

    The objective is concave for theta < 1, so the minimum sits at a vertex of
    the polytope {w >= 0, sum w = 1, moments vanish}; all vertices are
    enumerated from subsets of the support.
    """
    pts = np.atleast_2d(np.asarray(getattr(support, "points", support), dtype=float))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    count, n = pts.shape
    if count > 12:
        raise ValueError("vertex enumeration is limited to 12 points")
    system = moment_system(n, m)
    a_eq = np.vstack([system.basis(pts).T, np.ones(count)])
    b_eq = np.zeros(a_eq.shape[0])
    b_eq[-1] = 1.0
    rank = np.linalg.matrix_rank(a_eq, tol=1e-10)
    best_val, best_w = math.inf, None
    for size in range(1, min(rank, count) + 1):
        for subset in itertools.combinations(range(count), size):
            cols = a_eq[:, subset]
            if np.linalg.matrix_rank(cols, tol=1e-10) < size:
                continue
            sol, *_ = np.linalg.lstsq(cols, b_eq, rcond=None)
            if np.any(sol < -1e-12) or np.abs(cols @ sol - b_eq).max() > 1e-10:
                continue
            sol = np.maximum(sol, 0.0)
            val = float(np.sum(sol[sol > 0] ** theta))
            if val < best_val - 1e-14:
                best_val = val
                best_w = np.zeros(count)
                best_w[list(subset)] = sol
    if best_w is None:
        raise ValueError("the feasible weight polytope is empty for this support")
    return (best_val, best_w) if return_weights else best_val


def theta_limit_sweep(m: int, n: int, thetas: Sequence[float] = (0.2, 0.1, 0.05, 0.02),
                      opts: SolverOptions | None = None) -> list:
    """Solve along a decreasing theta ladder; the values approach N_m as theta -> 0."""
    thetas = list(thetas)
    if any(not (0.0 < t < 1.0) for t in thetas):
        raise ValueError("all theta values must lie in (0, 1)")
    return [solve_theta(m, t, n, opts) for t in thetas]


def limit_estimate(results: Sequence[ThetaResult]) -> float:
    """Extrapolate log(value) linearly in theta to theta = 0 and exponentiate."""
    th = np.array([r.theta for r in results])
    lv = np.log([r.value for r in results])
    if len(th) == 1:
        return float(np.exp(lv[0] / (1.0 - th[0])))
    slope, intercept = np.polyfit(th, lv, 1)
    return float(np.exp(intercept))


def known_limit(m: int, n: int) -> Optional[int]:
    return n_m_closed_form(m, n)
