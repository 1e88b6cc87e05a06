import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharptrace.bubbles import (BubbleSpec, CutoffProfiles, assemble, boundary_correction_g, bubble2_gradsq,
                                bubble2_value, bubble4_partials, bubble4_value, bubble4d_value,
                                cancellation_profile, laplacian_decomposition_4d, neumann_residual,
                                psi_hat_laplacian, smoothstep)
from sharptrace.checks import bubble_fd_checks
from sharptrace.energy import boundary_moment_residual
from sharptrace.geometry import random_rotation
from sharptrace.jets import Jet, polar_laplacian
from sharptrace.measures import DiscreteMeasure, known_design


@pytest.fixture(scope="module")
def fd_checks():
    return bubble_fd_checks(points=400)


def test_closed_forms_match_jets_and_differences(fd_checks):
    failed = [(c.name, c.value) for c in fd_checks if not c.passed]
    assert not failed


@given(st.floats(0.0, 1.0))
def test_smoothstep_is_monotone_and_clamped(t):
    v = smoothstep(np.array([t, min(t + 1e-3, 1.0)]))[0]
    assert 0.0 <= v[0] <= v[1] <= 1.0


def test_cutoffs_hit_their_knots():
    prof = CutoffProfiles(0.2, 0.6)
    assert prof.chi(np.array([0.2]))[0][0] == pytest.approx(1.0)
    assert prof.chi(np.array([0.4]))[0][0] == pytest.approx(0.0)
    assert prof.eta1(np.array([1.0]))[0][0] == pytest.approx(1.0)
    assert prof.eta1(np.array([0.6]))[0][0] == pytest.approx(0.0)


@given(st.floats(0.05, 0.6), st.floats(0.0, 0.5))
def test_robin_bubble_restricts_to_power_on_sphere(rho, dummy):
    spec = BubbleSpec("trace4", 6, 0.01, 0.3)
    d = 0.01**2 + rho**2
    assert bubble4_value(spec, 1.0, rho) == pytest.approx(d ** (0.5 * (4 - 6)), rel=1e-13)


def test_trace2_gradient_matches_jet():
    r, rho = np.array([0.95, 0.99, 0.7]), np.array([0.02, 0.3, 0.1])
    spec = BubbleSpec("trace2", 4, 0.01, 0.3)
    rj, tj = Jet.coordinates(r, rho)
    jet = ((0.01 + 1.0 - rj) ** 2 + tj * tj) ** -1.0
    assert np.allclose(bubble2_value(spec, r, rho), jet.val, rtol=1e-14)
    assert np.allclose(bubble2_gradsq(spec, r, rho), jet.grad[:, 0] ** 2 + (jet.grad[:, 1] / r) ** 2, rtol=1e-12)


@pytest.mark.parametrize("n", [5, 6, 7])
def test_flat_limit_of_robin_laplacian(n):
    """eps^{n-2} times the laplacian tends to the half-space laplacian of the rescaled bubble."""
    s, t = np.array([0.1, 1.0, 3.0]), np.array([0.5, 0.2, 2.0])
    errors = []
    for eps in (1e-3, 1e-5):
        lap = bubble4_partials(BubbleSpec("trace4", n, eps, 0.3), 1 - eps * s, eps * t).laplacian
        errors.append(np.max(np.abs(lap * eps ** (n - 2) / psi_hat_laplacian(n, s, t) - 1.0)))
    assert errors[1] < 1e-4 and errors[1] < 0.02 * errors[0]


def test_log_bubble_is_neumann_flat():
    spec = BubbleSpec("trace4D", 4, 0.01, 0.3)
    rho = np.linspace(0.0, 0.5, 11)
    bub = bubble4d_value(spec, np.ones_like(rho), rho)
    total_dr = bub.log_part[1] + bub.shift_part[1]
    assert np.allclose(total_dr, 0.0, atol=1e-9)


@given(st.floats(0.5, 4.0), st.floats(0.1, 2.0))
def test_laplacian_decomposition_sums_to_exact(c1, weight):
    spec = BubbleSpec("trace4D", 4, 0.02, 0.3)
    r, rho = np.array([0.97, 0.995, 0.8]), np.array([0.05, 0.01, 0.2])
    terms = laplacian_decomposition_4d(spec, c1, weight, r, rho)
    rj, tj = Jet.coordinates(r, rho)
    a = 0.02 + 1.0 - rj
    d = a * a + tj * tj
    phi = -d.log() + 2.0 * 0.02 * (1.0 - rj) / d
    u = (weight * (3.0 * phi).exp() + c1 * np.log(1.0 / 0.02)).log() * (1.0 / 3.0)
    assert np.allclose(terms.total, polar_laplacian(u, r, rho, 4), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("order,n,m,eps", [("trace4", 5, 1, 0.01),
                                           ("trace4D", 4, 1, 1e-2), ("trace4D", 4, 2, 1e-3),
                                           ("widom2D", 2, 1, 1e-2), ("widom2D", 2, 3, 1e-3)])
def test_boundary_condition_holds(order, n, m, eps):
    tf = assemble(order, n, m, eps)
    assert neumann_residual(tf) < 1e-10 * max(1.0, tf.spec.c1)
    assert tf.background_min_ratio() >= 1.0 - 1e-12
    assert boundary_moment_residual(tf) < 1e-10


def test_boundary_correction_vanishes_off_the_caps():
    tf = assemble("trace4", 5, 1, 0.01)
    far = np.array([[0.0, 0.0, 1.0, 0.0, 0.0]])
    g = boundary_correction_g(tf, far)
    assert np.all(np.isfinite(g))


def _perturbed(m, n, seed, scale=0.05):
    base = known_design(m, n)
    rng = np.random.default_rng(seed)
    x = base.points + scale * rng.standard_normal(base.points.shape)
    return DiscreteMeasure(x / np.linalg.norm(x, axis=1, keepdims=True), base.weights)


@pytest.mark.parametrize("order,n,m,eps,seed", [("trace2", 3, 1, 0.01, 0), ("trace2", 3, 2, 0.01, 1),
                                                ("trace4D", 4, 2, 1e-3, 1), ("widom2D", 2, 2, 1e-3, 2)])
def test_correction_kills_moments_for_generic_centers(order, n, m, eps, seed):
    tf = assemble(order, n, m, eps, measure=_perturbed(m, n, seed))
    assert np.max(np.abs(tf.spec.raw_moments)) > 1e-3
    assert boundary_moment_residual(tf) < 1e-10 * max(1.0, np.max(np.abs(tf.spec.raw_moments)))
    assert tf.background_min_ratio() >= 1.0 - 1e-12


def test_design_centers_need_no_correction():
    """Raw moments of design centres vanish to round-off relative to the bubble mass ~ eps^{2-n}."""
    ladder = (1e-2, 1e-3)
    for eps, value in zip(ladder, cancellation_profile("trace4D", 4, 2, ladder)):
        assert value < 1e-9 * eps ** (2 - 4)


def test_energy_is_rotation_invariant():
    from sharptrace.energy import energy_report
    meas = known_design(1, 3)
    rot = random_rotation(3, 5)
    turned = DiscreteMeasure(meas.points @ rot.T, meas.weights)
    a = energy_report(assemble("trace2", 3, 1, 0.02, measure=meas))
    b = energy_report(assemble("trace2", 3, 1, 0.02, measure=turned))
    assert b.interior == pytest.approx(a.interior, rel=1e-6)
    assert b.boundary_norm == pytest.approx(a.boundary_norm, rel=1e-6)


@pytest.mark.parametrize("kwargs", [dict(order="trace4", n=4, m=1, eps=0.01),
                                    dict(order="trace4D", n=5, m=1, eps=0.01),
                                    dict(order="trace2", n=3, m=0, eps=0.01),
                                    dict(order="trace2", n=3, m=1, eps=0.5),
                                    dict(order="trace4", n=5, m=1, eps=0.01, delta=0.3),
                                    dict(order="cubic", n=3, m=1, eps=0.01)])
def test_assemble_rejects_bad_input(kwargs):
    with pytest.raises((ValueError, KeyError)):
        assemble(**kwargs)


def test_spec_serialization_is_stable():
    tf = assemble("widom2D", 2, 2, 1e-2)
    again = assemble("widom2D", 2, 2, 1e-2)
    assert tf.spec.to_json() == again.spec.to_json()
