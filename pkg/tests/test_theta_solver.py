import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharptrace.constants import dgs_lower_bound, theta_closed_form
from sharptrace.measures import known_design, moment_residual
from sharptrace.theta_solver import (InfeasibleError, SolverOptions, brute_force_theta, limit_estimate,
                                     solve_theta, theta_limit_sweep)


@pytest.mark.parametrize("m,theta,n", [(1, 0.5, 3), (2, 0.25, 3), (2, 0.75, 4), (3, 0.5, 3)])
def test_solver_recovers_closed_form(m, theta, n):
    res = solve_theta(m, theta, n)
    assert res.value == pytest.approx(theta_closed_form(m, theta, n), rel=1e-6)
    assert res.residual < 1e-9
    assert res.support >= dgs_lower_bound(m, n)
    assert res.certificate == "closed-form match"


def test_solver_is_deterministic():
    a = solve_theta(2, 0.5, 3, SolverOptions(seed=3, starts=4))
    b = solve_theta(2, 0.5, 3, SolverOptions(seed=3, starts=4))
    assert a.to_dict() == b.to_dict()


@pytest.mark.parametrize("theta", [0.0, 1.0, 1.5, -0.2])
def test_solver_rejects_theta_outside_unit_interval(theta):
    with pytest.raises(ValueError):
        solve_theta(1, theta, 3)


def test_infeasible_support_budget():
    # no start can reach a residual below round-off
    with pytest.raises(InfeasibleError):
        solve_theta(1, 0.5, 3, SolverOptions(tol=1e-30, starts=2))


@pytest.mark.parametrize("m,n", [(1, 3), (2, 3), (2, 4), (3, 3)])
def test_brute_force_on_named_support(m, n):
    meas = known_design(m, n)
    val, w = brute_force_theta(meas.points, m, 0.5, return_weights=True)
    assert val == pytest.approx(theta_closed_form(m, 0.5, n), rel=1e-10)


@given(st.integers(0, 2000))
def test_brute_force_never_beats_closed_form(seed):
    """Random supports plus the simplex: the vertex minimum cannot fall below (n+1)^{1-theta}."""
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((3, 3))
    pts = np.vstack([known_design(2, 3).points, extra / np.linalg.norm(extra, axis=1, keepdims=True)])
    assert brute_force_theta(pts, 2, 0.5) >= theta_closed_form(2, 0.5, 3) - 1e-9


def test_limit_estimate_recovers_design_size():
    results = theta_limit_sweep(2, 3, (0.2, 0.1, 0.05, 0.02))
    assert limit_estimate(results) == pytest.approx(4.0, rel=1e-6)
    assert all(moment_residual(r.measure, 2) < 1e-9 for r in results)
