import math

import numpy as np
import pytest

from src.estimates.comparison import (
    check_dexp_transport,
    check_log_difference,
    check_rauch,
    log_difference_defect,
    log_difference_sweep,
)
from src.estimates.margin_report import MarginReport
from src.estimates.scaling import fit_power_law
from src.geodesics.bvp import dexp_differential, transport
from src.geodesics.frames import random_orthogonal_unit_vector, random_unit_vector
from src.manifolds.sphere import RoundSphere, unit_to_chart
from src.manifolds.types import PointOnManifold, TangentAtPoint


def test_margin_report_keeps_only_violations():
    report = MarginReport.from_trials("demo", [0.5, 1.2, 0.9], [{"k": 0}, {"k": 1}, {"k": 2}])
    assert report.worst_ratio == pytest.approx(1.2)
    assert report.violations == [{"ratio": 1.2, "k": 1}]
    assert not report.passed


def test_margin_report_tolerance_absorbs_roundoff():
    report = MarginReport.from_trials("demo", [1.0 + 1e-9], [{}], tolerance=1e-6)
    assert report.passed


def test_empirical_constant_passes_when_finite():
    report = MarginReport.from_trials("demo", [12.0, 40.0], [{}, {}], explicit_bound=False)
    assert report.passed
    assert report.violations == []
    infinite = MarginReport.from_trials("demo", [math.inf], [{}], explicit_bound=False)
    assert not infinite.passed


def test_combine_takes_the_worst_of_each_report():
    first = MarginReport.from_trials("c", [0.2], [{}], explicit_bound=False, details={"worst_c0": 0.1, "chart": 3})
    second = MarginReport.from_trials("c", [0.7, 0.4], [{}, {}], explicit_bound=False, details={"worst_c0": 0.05})
    combined = MarginReport.combine("c", [first, second])
    assert combined.trials == 3
    assert combined.worst_ratio == pytest.approx(0.7)
    assert combined.details["worst_c0"] == pytest.approx(0.1)
    assert "chart" not in combined.details
    assert combined.details["reports"] == 2


def test_power_law_fit_recovers_exponent():
    xs = [0.25, 0.16, 0.09, 0.04]
    fit = fit_power_law(xs, [3.0 * x**0.5 for x in xs])
    assert fit.exponent == pytest.approx(0.5, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-12)
    assert fit.within(0.5, 0.2)


def test_power_law_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_power_law([0.1], [1.0])
    with pytest.raises(ValueError):
        fit_power_law([0.1, 0.2], [0.0, 1.0])
    with pytest.raises(ValueError):
        fit_power_law([0.1, 0.1], [1.0, 2.0])


def test_rauch_sandwich_on_flat_torus(flat_torus):
    report = check_rauch(flat_torus, 0.25, trials=30, seed=0)
    assert report.lemma == "rauch-comparison"
    assert report.passed


def test_rauch_lower_envelope_is_attained_at_constant_curvature():
    sphere = RoundSphere(radius=4.0, prefer_oracles=True)
    report = check_rauch(sphere, 1.0 / 16.0, trials=30, seed=1)
    assert report.passed
    # J(0) = 0 fields on the sphere of curvature delta are exactly sin(sqrt(delta) t) / sqrt(delta)
    assert report.details["max_zero_value_lower_gap"] < 1e-6


def test_rauch_on_perturbed_torus(conformal_torus):
    delta = max(conformal_torus.curvature_bound(), 0.0625)
    report = check_rauch(conformal_torus, delta, trials=15, seed=2)
    assert report.passed


def test_rauch_results_do_not_depend_on_workers(flat_torus):
    serial = check_rauch(flat_torus, 0.25, trials=6, seed=3, n_jobs=1)
    parallel = check_rauch(flat_torus, 0.25, trials=6, seed=3, n_jobs=2)
    assert serial.model_dump() == parallel.model_dump()


def test_dexp_close_to_transport_on_sphere(sphere_oracle):
    report = check_dexp_transport(sphere_oracle, 1.0 / 16.0, trials=30, seed=4)
    assert report.lemma == "dexp-transport"
    assert report.passed


def test_dexp_defect_matches_closed_form_on_sphere(sphere_oracle, rng):
    p = unit_to_chart(np.array([0.3, 0.1, -0.9]))
    r = 1.7
    a = random_unit_vector(sphere_oracle, p, rng)
    xi = random_orthogonal_unit_vector(sphere_oracle, p, a, rng)
    image = dexp_differential(sphere_oracle, p, a.scaled(r), xi)
    end = image.base
    moved = sphere_oracle.transform_vector(transport(sphere_oracle, p, end, xi), end.chart)
    gap = TangentAtPoint(end, image.components - moved.components)
    assert sphere_oracle.norm(gap) == pytest.approx(abs(1 - 4.0 * math.sin(r / 4.0) / r), abs=1e-6)


def test_log_difference_vanishes_on_flat_torus(flat_torus):
    x, y, z = PointOnManifold(0, [1.0, 1.0]), PointOnManifold(0, [1.5, 0.2]), PointOnManifold(0, [0.4, 1.3])
    assert log_difference_defect(flat_torus, x, y, z) == pytest.approx(0.0, abs=1e-12)
    report = check_log_difference(flat_torus, 0.25, trials=10, seed=5)
    assert report.worst_ratio == pytest.approx(0.0, abs=1e-12)
    assert not report.explicit_bound


def test_log_difference_triples_fill_the_radius_two_ball(flat_torus):
    report = check_log_difference(flat_torus, 0.25, trials=30, seed=8)
    assert 1.0 < report.details["max_sample_radius"] < 2.0
    assert report.worst_ratio == pytest.approx(0.0, abs=1e-12)


def test_log_difference_is_linear_in_delta_on_spheres():
    models = [(1.0 / R**2, RoundSphere(radius=R, prefer_oracles=True)) for R in (4.0, 5.0, 10.0)]
    reports, fit = log_difference_sweep(models, trials=30, seed=6)
    assert len(reports) == 3
    assert all(r.passed for r in reports)
    assert fit.within(1.0, 0.3)
