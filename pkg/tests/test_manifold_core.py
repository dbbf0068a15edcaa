import math

import numpy as np
import pytest

from src.experiments.config import ManifoldSpec
from src.geodesics.frames import orthonormal_frame
from src.manifolds.core import admissibility, christoffel, exp_map, rescale, sectional_curvature
from src.manifolds.factory import build_model, default_period
from src.manifolds.graph_surface import GraphSurface
from src.manifolds.sphere import Ellipsoid, RoundSphere, unit_to_chart
from src.manifolds.torus import ConformalTorus, FlatTorus
from src.manifolds.types import PointOnManifold, TangentAtPoint


def _plane(p):
    return TangentAtPoint(p, np.array([1.0, 0.0])), TangentAtPoint(p, np.array([0.3, 1.0]))


def test_rescaled_metric_multiplies_by_scale_squared():
    M = FlatTorus(period=8.0, scale=2.0)
    np.testing.assert_allclose(M.metric_at(PointOnManifold(0, [1.0, 2.0])), 4.0 * np.eye(2))


def test_torus_canonicalize_wraps_coordinates(flat_torus):
    p = flat_torus.canonicalize(PointOnManifold(0, [9.0, -1.0]))
    np.testing.assert_allclose(p.coords, [1.0, 7.0])


def test_flat_exp_matches_oracle_across_the_boundary(flat_torus, integrated_flat_torus):
    p = PointOnManifold(0, [7.5, 0.2])
    v = TangentAtPoint(p, [1.5, -0.5])
    exact = exp_map(flat_torus, p, v)
    integrated = exp_map(integrated_flat_torus, p, v)
    np.testing.assert_allclose(exact.coords, [1.0, 7.7], atol=1e-12)
    np.testing.assert_allclose(integrated.coords, exact.coords, atol=1e-10)


def test_sphere_exp_matches_great_circles(sphere, sphere_oracle, rng):
    for _ in range(10):
        p = sphere.sample_points(rng, 1)[0]
        v = TangentAtPoint(p, orthonormal_frame(sphere, p) @ rng.normal(size=2))
        integrated = exp_map(sphere, p, v)
        exact = exp_map(sphere_oracle, p, v)
        np.testing.assert_allclose(sphere.unit_point(integrated), sphere.unit_point(exact), atol=1e-6)


def test_exp_of_zero_vector_is_the_base_point(conformal_torus):
    p = PointOnManifold(0, [3.0, 4.0])
    q = exp_map(conformal_torus, p, TangentAtPoint(p, [0.0, 0.0]))
    np.testing.assert_allclose(q.coords, p.coords)


def test_flat_torus_has_zero_curvature(flat_torus):
    p = PointOnManifold(0, [1.0, 1.0])
    assert sectional_curvature(flat_torus, p, _plane(p)) == 0.0


def test_sphere_curvature_from_riemann_tensor(sphere):
    p = unit_to_chart(np.array([0.3, -0.2, 0.9]))
    assert sectional_curvature(sphere, p, _plane(p)) == pytest.approx(1.0 / 16.0, rel=1e-6)


def test_conformal_torus_curvature_matches_closed_form(conformal_torus):
    p = PointOnManifold(0, [2.0, 5.0])
    numeric = sectional_curvature(conformal_torus, p, _plane(p))
    exact = conformal_torus.gaussian_curvature(0, p.coords)
    assert numeric == pytest.approx(exact, abs=1e-10)
    assert abs(numeric) <= conformal_torus.curvature_bound()


def test_analytic_and_finite_difference_christoffel_agree(conformal_torus):
    p = PointOnManifold(0, [1.3, 6.1])
    np.testing.assert_allclose(
        christoffel(conformal_torus, p), christoffel(conformal_torus, p, method="finite_difference"), atol=1e-8
    )


def test_christoffel_rejects_unknown_method(conformal_torus):
    with pytest.raises(ValueError):
        christoffel(conformal_torus, PointOnManifold(0, [0.0, 0.0]), method="spectral")


def test_conformal_metric_stays_within_eta_of_flat(conformal_torus, rng):
    for p in conformal_torus.sample_points(rng, 50):
        factor = conformal_torus.metric_at(p)[0, 0]
        assert (1 - 0.05) ** 2 <= factor <= (1 + 0.05) ** 2


def test_rescale_scales_curvature_and_distance():
    M = rescale(RoundSphere(radius=1.0, prefer_oracles=True), 4.0)
    assert M.curvature_bound() == pytest.approx(1.0 / 16.0)
    assert M.injectivity_radius() == pytest.approx(4.0 * math.pi)
    with pytest.raises(ValueError):
        rescale(M, 0.0)


def test_flat_torus_of_period_eight_is_admissible_at_quarter(flat_torus):
    report = admissibility(flat_torus, 0.25, sample_count=20, seed=0)
    assert report.curvature_bound == 0.0
    assert report.injectivity_radius == pytest.approx(4.0)
    assert report.passed


def test_short_torus_fails_injectivity():
    report = admissibility(FlatTorus(period=6.0, prefer_oracles=True), 0.25, sample_count=10, seed=0)
    assert report.curvature_ok
    assert not report.injectivity_ok
    assert not report.passed


def test_unit_sphere_fails_curvature():
    report = admissibility(RoundSphere(radius=1.0, prefer_oracles=True), 0.25, sample_count=10, seed=0)
    assert report.curvature_bound == pytest.approx(1.0)
    assert not report.passed


def test_admissibility_rejects_large_delta(flat_torus):
    with pytest.raises(ValueError):
        admissibility(flat_torus, 0.3)


def test_ellipsoid_is_admissible_when_nearly_round():
    M = Ellipsoid(axes=(2.2, 2.2, 2.3), n=2)
    report = admissibility(M, 0.25, sample_count=50, seed=1)
    assert report.passed


def test_default_period_reaches_the_injectivity_radius():
    assert default_period(0.25) == 8.0
    assert default_period(0.16) == 13.0
    assert default_period(0.09) == 23.0


def test_build_model_from_specs():
    torus = build_model(ManifoldSpec(model="conformal_torus", eta_per_delta=0.1), delta=0.25)
    assert isinstance(torus, ConformalTorus)
    assert torus.period == 8.0
    assert torus.eta == pytest.approx(0.025)
    sphere = build_model(ManifoldSpec(model="round_sphere", radius=2.2))
    assert isinstance(sphere, RoundSphere)
    assert sphere.prefer_oracles


def test_build_model_needs_delta_for_derived_period():
    with pytest.raises(ValueError):
        build_model(ManifoldSpec(model="flat_torus"))


def test_spec_resolves_scale_per_root_delta():
    spec = ManifoldSpec(model="round_sphere", scale_per_root_delta=1.0)
    assert spec.resolved(0.25).scale == pytest.approx(2.0)
    assert ManifoldSpec().resolved(0.25).scale == 1.0


SADDLE = ((0.3, 0.1), (0.1, -0.2))


def _graph_christoffel(hessian, coords):
    # gamma^k_ij = f_k H_ij / (1 + |grad f|^2) for f(x) = 1/2 x^T H x
    h = np.asarray(hessian)
    grad = h @ coords
    return np.einsum("k,ij->kij", grad, h) / (1.0 + grad @ grad)


def test_graph_surface_christoffel_matches_hand_computation():
    M = build_model(ManifoldSpec(model="graph_surface", hessian=[list(row) for row in SADDLE]))
    assert isinstance(M, GraphSurface)
    p = PointOnManifold(0, [0.7, -1.1])
    expected = _graph_christoffel(SADDLE, p.coords)
    np.testing.assert_allclose(christoffel(M, p), expected, atol=1e-12)
    np.testing.assert_allclose(christoffel(M, p, method="finite_difference"), expected, atol=1e-6)


def test_graph_surface_curvature_is_det_over_squared_area_factor():
    p = PointOnManifold(0, [0.7, -1.1])
    # grad f = (0.10, 0.29), det H = -0.07
    expected = -0.07 / (1.0 + 0.10**2 + 0.29**2) ** 2
    numeric = GraphSurface(hessian=SADDLE)
    exact = GraphSurface(hessian=SADDLE, prefer_oracles=True)
    assert sectional_curvature(numeric, p, _plane(p)) == pytest.approx(expected, rel=1e-6)
    assert sectional_curvature(exact, p, _plane(p)) == pytest.approx(expected, rel=1e-12)


def test_graph_surface_injectivity_radius():
    assert GraphSurface(hessian=SADDLE).injectivity_radius() == math.inf
    bowl = GraphSurface(hessian=((0.1, 0.0), (0.0, 0.05)))
    assert bowl.injectivity_radius() == pytest.approx(math.pi / math.sqrt(0.005))
    assert GraphSurface(hessian=((0.1, 0.0), (0.0, 0.05)), scale=2.0).injectivity_radius() == pytest.approx(
        2.0 * math.pi / math.sqrt(0.005)
    )
