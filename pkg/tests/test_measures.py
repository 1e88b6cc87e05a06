import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharptrace.geometry import random_rotation, sphere_area
from sharptrace.measures import (DiscreteMeasure, MomentSystem, config_antipodal, config_cross_polytope,
                                 config_regular_polygon, config_simplex, harmonic_dimension, known_design,
                                 moment_residual, multi_indices, sphere_monomial_moment, theta_objective)

NAMED = [(1, config_antipodal), (2, config_simplex), (3, config_cross_polytope)]


def _antipodal(n):
    return config_antipodal(np.eye(n)[0])


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("m,label", [(1, "antipodal"), (2, "simplex"), (3, "cross")])
def test_named_configurations_are_designs(n, m, label):
    meas = {"antipodal": _antipodal, "simplex": config_simplex, "cross": config_cross_polytope}[label](n)
    assert moment_residual(meas, m) < 1e-12
    size = meas.support_size
    for theta in (0.25, 0.5, 0.75):
        assert theta_objective(meas, theta) == pytest.approx(size ** (1 - theta), abs=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_named_configurations_fail_one_degree_higher(n):
    assert moment_residual(_antipodal(n), 2) > 1e-3
    assert moment_residual(config_simplex(n), 3) > 1e-3


@pytest.mark.parametrize("count", [2, 3, 5])
def test_regular_polygon_design_degree(count):
    meas = config_regular_polygon(count)
    assert moment_residual(meas, count - 1) < 1e-12
    assert moment_residual(meas, count) > 1e-3


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_monomial_moments_against_monte_carlo(n):
    """Independent oracle: Gaussian-normalized Monte Carlo averages of x^alpha."""
    rng = np.random.default_rng(2024 + n)
    x = rng.standard_normal((400_000, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    for alpha in multi_indices(n, 4, 1):
        mc = np.mean(np.prod(x ** np.array(alpha), axis=1))
        exact = sphere_monomial_moment(alpha) / sphere_area(n - 1)
        assert abs(mc - exact) < 6e-3


@pytest.mark.parametrize("n,m", [(2, 3), (3, 1), (3, 2), (3, 3), (4, 2), (5, 3)])
def test_moment_system_rank(n, m):
    system = MomentSystem(n, m)
    assert system.L == harmonic_dimension(n, m)


@given(st.integers(3, 5), st.integers(1, 3), st.integers(0, 5000))
def test_moment_residual_rotation_invariant(n, m, seed):
    meas = known_design(m, n)
    rotated = meas.rotated(random_rotation(n, seed))
    assert moment_residual(rotated, m) < 1e-12


@given(st.integers(2, 5), st.integers(1, 6), st.integers(0, 5000))
def test_discrete_measure_json_round_trip(n, count, seed):
    rng = np.random.default_rng(seed)
    meas = DiscreteMeasure.normalized(rng.standard_normal((count, n)), rng.uniform(0.1, 1.0, count))
    back = DiscreteMeasure.from_json(meas.to_json())
    assert np.array_equal(back.points, meas.points)
    assert np.array_equal(back.weights, meas.weights)


@given(st.floats(0.01, 1.0), st.integers(1, 8))
def test_theta_objective_equal_weights(theta, count):
    pts = np.tile(np.eye(3)[0], (count, 1))
    meas = DiscreteMeasure(pts, np.full(count, 1.0 / count))
    assert theta_objective(meas, theta) == pytest.approx(count ** (1 - theta), rel=1e-12)


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.eye(3)[:2], [0.7, 0.7])
    with pytest.raises(ValueError):
        DiscreteMeasure(np.eye(3)[:2], [1.5, -0.5])


def test_min_separation_of_single_point():
    assert DiscreteMeasure(np.eye(2)[:1], [1.0]).min_separation() == pytest.approx(math.pi)


def test_pruning_drops_tiny_weights():
    meas = DiscreteMeasure.normalized(np.eye(3), [0.5, 0.5, 1e-14])
    assert meas.pruned(1e-10).support_size == 2
