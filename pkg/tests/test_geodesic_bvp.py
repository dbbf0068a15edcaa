import math

import numpy as np
import pytest

from src.exceptions import GeometryError
from src.geodesics.bvp import (
    dexp_differential,
    dexp_matrix,
    distance,
    jacobi_boundary,
    jacobi_field,
    log_map,
    parallel_transport,
    transport,
)
from src.geodesics.frames import orthonormal_frame, random_orthogonal_unit_vector, random_unit_vector
from src.manifolds.core import exp_map, geodesic_ivp
from src.manifolds.sphere import Ellipsoid, unit_to_chart
from src.manifolds.types import PointOnManifold, TangentAtPoint


def test_flat_log_takes_the_short_way_around(integrated_flat_torus):
    p = PointOnManifold(0, [7.5, 7.5])
    q = PointOnManifold(0, [0.5, 0.5])
    np.testing.assert_allclose(log_map(integrated_flat_torus, p, q).components, [1.0, 1.0], atol=1e-10)
    assert distance(integrated_flat_torus, p, q) == pytest.approx(math.sqrt(2.0), abs=1e-10)


def test_log_of_the_base_point_is_zero(conformal_torus):
    p = PointOnManifold(0, [1.0, 2.0])
    np.testing.assert_array_equal(log_map(conformal_torus, p, p).components, [0.0, 0.0])


def test_exp_log_roundtrip_on_conformal_torus(conformal_torus, rng):
    for _ in range(10):
        p = conformal_torus.sample_points(rng, 1)[0]
        v = random_unit_vector(conformal_torus, p, rng).scaled(rng.uniform(0.2, 1.8))
        q = exp_map(conformal_torus, p, v)
        np.testing.assert_allclose(log_map(conformal_torus, p, q).components, v.components, atol=1e-8)


def test_sphere_log_matches_oracle(sphere, sphere_oracle, rng):
    for _ in range(10):
        p = sphere.sample_points(rng, 1)[0]
        v = random_unit_vector(sphere, p, rng).scaled(rng.uniform(0.5, 2.0))
        q = exp_map(sphere_oracle, p, v)
        numeric = log_map(sphere, p, q)
        exact = log_map(sphere_oracle, p, q)
        np.testing.assert_allclose(numeric.components, exact.components, atol=1e-6)


ELLIPSOID_AXES = (2.2, 2.2, 2.3)


def test_ellipsoid_log_reaches_the_other_cap():
    M = Ellipsoid(axes=ELLIPSOID_AXES, n=2)
    p = unit_to_chart(np.array([1.0, 0.0, 0.0]))
    angle = 3.0 / 2.2
    q = unit_to_chart(np.array([math.cos(angle), 0.0, math.sin(angle)]))
    assert (p.chart, q.chart) == (0, 1)
    v = log_map(M, p, q)
    # the semi-axes bound lengths between 2.2 and 2.3 times their unit-sphere lengths
    assert 3.0 <= M.norm(v) <= 3.0 * 2.3 / 2.2
    assert distance(M, p, q) == pytest.approx(M.norm(v))
    end = exp_map(M, p, v)
    np.testing.assert_allclose(M.coordinates_in_chart(end, q.chart), q.coords, atol=1e-7)


def test_ellipsoid_exp_log_roundtrip_across_the_caps():
    M = Ellipsoid(axes=ELLIPSOID_AXES, n=2)
    p = unit_to_chart(np.array([1.0, 0.0, 0.0]))
    w = M.tangent_from_unit(p, np.array([0.0, -0.3, 1.3]))
    target = exp_map(M, p, w)
    assert target.chart == 1
    assert np.linalg.norm(M.coordinates_in_chart(target, p.chart)) > 4.0
    np.testing.assert_allclose(log_map(M, p, target).components, w.components, atol=1e-6)


def test_log_rejects_targets_beyond_the_radius(flat_torus):
    p = PointOnManifold(0, [0.0, 0.0])
    q = PointOnManifold(0, [3.0, 0.0])
    with pytest.raises(GeometryError):
        log_map(flat_torus, p, q, max_distance=2.0)


def test_transport_preserves_inner_products(conformal_torus, rng):
    p = PointOnManifold(0, [2.0, 2.0])
    q = exp_map(conformal_torus, p, TangentAtPoint(p, [1.0, 0.7]))
    u = random_unit_vector(conformal_torus, p, rng)
    w = random_unit_vector(conformal_torus, p, rng)
    tu, tw = transport(conformal_torus, p, q, u), transport(conformal_torus, p, q, w)
    assert conformal_torus.inner(tu, tw) == pytest.approx(conformal_torus.inner(u, w), abs=1e-8)
    assert conformal_torus.norm(tu) == pytest.approx(1.0, abs=1e-8)


def test_sphere_transport_matches_oracle(sphere, sphere_oracle):
    p = unit_to_chart(np.array([0.1, 0.2, -0.97]))
    q = unit_to_chart(np.array([0.4, -0.1, -0.9]))
    v = TangentAtPoint(p, [0.3, -0.2])
    numeric = transport(sphere, p, q, v)
    exact = transport(sphere_oracle, p, q, v)
    np.testing.assert_allclose(numeric.components, exact.components, atol=1e-6)


def test_flat_jacobi_field_grows_linearly(integrated_flat_torus):
    p = PointOnManifold(0, [1.0, 1.0])
    geodesic = geodesic_ivp(integrated_flat_torus, p, TangentAtPoint(p, [1.0, 0.0]), T=2.0)
    data = jacobi_field(
        integrated_flat_torus, geodesic, TangentAtPoint(p, [0.0, 0.0]), TangentAtPoint(p, [0.0, 1.0])
    )
    np.testing.assert_allclose(data.end_value.components, [0.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(data.norms(), geodesic.times, atol=1e-12)


def test_jacobi_field_solves_the_jacobi_equation(sphere):
    p = unit_to_chart(np.array([0.0, 0.3, -0.95]))
    v = TangentAtPoint(p, orthonormal_frame(sphere, p)[:, 0])
    geodesic = geodesic_ivp(sphere, p, v, T=1.5)
    J0dot = TangentAtPoint(p, orthonormal_frame(sphere, p)[:, 1])
    data = jacobi_field(sphere, geodesic, TangentAtPoint(p, [0.0, 0.0]), J0dot)
    assert np.max(data.residuals()) < 1e-6
    # |J(t)| = R sin(t / R) for J(0) = 0, |J'(0)| = 1 on the sphere of radius R
    expected = 4.0 * np.sin(geodesic.times / 4.0)
    np.testing.assert_allclose(data.norms(), expected, atol=1e-8)


def test_jacobi_boundary_hits_both_ends(conformal_torus):
    p = PointOnManifold(0, [3.0, 3.0])
    geodesic = geodesic_ivp(conformal_torus, p, TangentAtPoint(p, [1.2, 0.4]), T=1.0)
    J0 = TangentAtPoint(p, [0.1, -0.2])
    J1 = TangentAtPoint(geodesic.end, [0.3, 0.5])
    data = jacobi_boundary(conformal_torus, geodesic, J0, J1)
    np.testing.assert_allclose(data.values[0], J0.components, atol=1e-12)
    np.testing.assert_allclose(data.end_value.components, J1.components, atol=1e-8)


def test_flat_dexp_propagators_are_trivial(integrated_flat_torus):
    p = PointOnManifold(0, [0.5, 0.5])
    propagators = dexp_matrix(integrated_flat_torus, p, TangentAtPoint(p, [0.8, -0.3]))
    np.testing.assert_allclose(propagators.A, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(propagators.B, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(propagators.D, np.eye(2), atol=1e-12)


def test_sphere_dexp_shrinks_normal_directions(sphere, rng):
    p = unit_to_chart(np.array([0.2, 0.1, -0.97]))
    r = 1.5
    a = random_unit_vector(sphere, p, rng)
    xi = random_orthogonal_unit_vector(sphere, p, a, rng)
    image = dexp_differential(sphere, p, a.scaled(r), xi)
    assert sphere.norm(image) == pytest.approx(4.0 * math.sin(r / 4.0) / r, abs=1e-6)


def test_dexp_at_zero_is_identity(conformal_torus):
    p = PointOnManifold(0, [4.0, 1.0])
    xi = TangentAtPoint(p, [0.2, 0.9])
    image = dexp_differential(conformal_torus, p, TangentAtPoint(p, [0.0, 0.0]), xi)
    np.testing.assert_allclose(image.components, xi.components, atol=1e-12)


def test_orthonormal_frame_is_orthonormal(conformal_torus):
    p = PointOnManifold(0, [2.5, 7.0])
    frame = orthonormal_frame(conformal_torus, p)
    np.testing.assert_allclose(frame.T @ conformal_torus.metric_at(p) @ frame, np.eye(2), atol=1e-12)


def test_parallel_transport_on_flat_torus_keeps_components(integrated_flat_torus):
    p = PointOnManifold(0, [7.5, 0.2])
    path = geodesic_ivp(integrated_flat_torus, p, TangentAtPoint(p, [1.5, -0.5]))
    moved = parallel_transport(integrated_flat_torus, path, TangentAtPoint(p, [0.3, 0.8]))
    np.testing.assert_allclose(moved.base.coords, [1.0, 7.7], atol=1e-10)
    np.testing.assert_allclose(moved.components, [0.3, 0.8], atol=1e-12)


def test_parallel_transport_preserves_the_metric(conformal_torus, rng):
    p = PointOnManifold(0, [2.0, 5.0])
    path = geodesic_ivp(conformal_torus, p, TangentAtPoint(p, [0.9, -1.1]))
    u = random_unit_vector(conformal_torus, p, rng).scaled(0.7)
    w = random_unit_vector(conformal_torus, p, rng)
    tu, tw = parallel_transport(conformal_torus, path, u), parallel_transport(conformal_torus, path, w)
    assert conformal_torus.norm(tu) == pytest.approx(0.7, abs=1e-8)
    assert conformal_torus.inner(tu, tw) == pytest.approx(conformal_torus.inner(u, w), abs=1e-8)


def test_holonomy_of_an_octant_is_its_spherical_excess(sphere):
    corners = [unit_to_chart(np.array(x)) for x in ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0])]
    start = corners[0]
    v0 = TangentAtPoint(start, orthonormal_frame(sphere, start)[:, 0])
    v = v0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        path = geodesic_ivp(sphere, a, log_map(sphere, a, b))
        v = parallel_transport(sphere, path, sphere.transform_vector(v, a.chart))
    back = TangentAtPoint(start, sphere.transform_vector(v, start.chart).components)
    assert sphere.norm(back) == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(sphere.unit_point(v.base), sphere.unit_point(start), atol=1e-8)
    # the octant has area pi R^2 / 2 and curvature 1 / R^2
    angle = math.acos(np.clip(sphere.inner(v0, back), -1.0, 1.0))
    assert angle == pytest.approx(math.pi / 2, abs=1e-6)
