import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharptrace.bubbles import GridPolicy, assemble
from sharptrace.constants import sharp_target
from sharptrace.energy import (EnergyReport, energy_report, fit_line, fit_power_law, fit_sharp_constant,
                               interior_energy, sweep)


def _report(order, eps, ratio=float("nan"), norm=0.0, interior=1.0, grad=0.0, mean=0.0):
    return EnergyReport(order, 3, 1, eps, 0.3, 1.0, 1.0, norm, interior, 0.0, grad, mean, ratio, 0.0, 0.0,
                        0.0, 1.0)


@given(st.floats(0.1, 10.0), st.floats(-5.0, 5.0), st.floats(1.0, 2.0))
def test_power_fit_recovers_synthetic_limit(limit, coef, power):
    eps = np.array([0.05, 0.02, 0.01, 0.005])
    fit = fit_power_law(eps, limit + coef * eps**power)
    assert fit.limit == pytest.approx(limit, rel=1e-8, abs=1e-8)


def test_linear_synthetic_recovery_is_exact():
    eps = np.array([0.05, 0.02, 0.01, 0.005])
    fit = fit_power_law(eps, 0.7 + 3.0 * eps)
    assert abs(fit.limit - 0.7) < 1e-10 and fit.power == pytest.approx(1.0)


@given(st.floats(-3.0, 3.0), st.floats(-2.0, 2.0))
def test_line_fit_is_exact_on_lines(slope, intercept):
    x = np.array([1.0, 2.0, 3.5, 5.0])
    fit = fit_line(x, slope * x + intercept)
    assert fit.slope == pytest.approx(slope, abs=1e-10)
    assert fit.intercept == pytest.approx(intercept, abs=1e-10)


def test_fit_needs_three_points():
    target = sharp_target("trace2", 3, 1)
    with pytest.raises(ValueError):
        fit_sharp_constant([_report("trace2", e, 1.0) for e in (0.02, 0.01)], target)
    with pytest.raises(ValueError):
        fit_power_law([0.1, 0.2], [1.0, 2.0])


def test_non_monotone_ladder_is_flagged():
    target = sharp_target("trace2", 3, 1)
    reports = [_report("trace2", e, 0.5 + e) for e in (0.01, 0.05, 0.02)]
    fit = fit_sharp_constant(reports, target)
    assert "eps ladder is not monotone" in fit.diagnostics
    assert fit.estimate == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("order,target_slope", [("widom2D", 1.0), ("trace4D", 3.0)])
def test_log_slope_model(order, target_slope):
    eps = np.array([1e-2, 1e-3, 1e-4])
    x = np.log(1.0 / eps)
    reports = [_report(order, e, norm=2.0 * xi + 1.0, interior=5.0 * xi, mean=0.1) for e, xi in zip(eps, x)]
    fit = fit_sharp_constant(reports, sharp_target(order, 2 if order == "widom2D" else 4, 1))
    assert fit.model == "log-slope"
    assert fit.estimate == pytest.approx(2.0 / 5.0, rel=1e-12)


def test_widom_sweep_hits_slopes():
    reports = sweep("widom2D", 2, 1, (1e-2, 1e-3, 1e-4))
    x = np.log(1.0 / np.array([r.eps for r in reports]))
    slope = fit_line(x, [r.interior for r in reports]).slope
    assert slope == pytest.approx(8.0 * math.pi, rel=0.05)
    fit = fit_sharp_constant(reports, sharp_target("widom2D", 2, 1))
    assert abs(fit.gap) < 0.05
    assert max(r.moment_residual for r in reports) < 1e-10


def test_parallel_sweep_matches_serial():
    serial = sweep("widom2D", 2, 2, (1e-2, 3e-3, 1e-3))
    parallel = sweep("widom2D", 2, 2, (1e-2, 3e-3, 1e-3), workers=2)
    for a, b in zip(serial, parallel):
        assert a.interior == b.interior and a.boundary_norm == b.boundary_norm


def test_refinement_level_agrees():
    tf0 = assemble("trace2", 3, 1, 0.02)
    tf1 = assemble("trace2", 3, 1, 0.02, grids=GridPolicy(1))
    assert interior_energy(tf1, "gradient") == pytest.approx(interior_energy(tf0, "gradient"), rel=1e-6)


def test_report_fields_are_finite():
    rep = energy_report(assemble("trace2", 3, 2, 0.02))
    assert all(math.isfinite(getattr(rep, k)) for k in ("boundary_norm", "interior", "ratio", "moment_residual"))
    assert rep.ratio == pytest.approx(rep.boundary_norm / rep.interior, rel=1e-12)
