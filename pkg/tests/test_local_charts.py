import numpy as np
import pytest

from src.charts.atlas import ChartSet
from src.charts.local_chart import LocalChart, apply_chart, chart_differential, construct_chart, sample_domain
from src.charts.verification import check_chart_lipschitz, check_chart_respects_net, check_pairwise_closeness
from src.exceptions import GeometryError
from src.linalg.basis import distance_to_isometry
from src.manifolds.torus import FlatTorus
from src.manifolds.types import PointOnManifold
from src.nets.correspondence import coordinate_identity, oracle_correspondence
from src.nets.net_builder import build_net

DELTA = 0.25
EPSILON = 0.5


@pytest.fixture(scope="module")
def torus():
    return FlatTorus(period=8.0, n=2, prefer_oracles=True)


@pytest.fixture(scope="module")
def net(torus):
    return build_net(torus, EPSILON, seed=0)


@pytest.fixture(scope="module")
def identity_charts(torus, net):
    chi = oracle_correspondence(coordinate_identity(torus, torus), net, torus, max_pairs=200, covering_probes=100)
    return ChartSet(net, chi, DELTA)


@pytest.fixture(scope="module")
def scaled_charts(torus, net):
    target = FlatTorus(period=8.0, n=2, scale=1.02, prefer_oracles=True)
    chi = oracle_correspondence(coordinate_identity(torus, target), net, target, max_pairs=200, covering_probes=100)
    return ChartSet(net, chi, DELTA)


def test_identity_chart_has_identity_linear_part(identity_charts):
    chart = identity_charts.chart(0)
    np.testing.assert_allclose(chart.L.matrix, np.eye(2), atol=1e-12)
    assert chart.e_orthonormality <= 3 * EPSILON


def test_chart_sends_center_to_image_center(identity_charts):
    chart = identity_charts.chart(3)
    image = apply_chart(chart, chart.center)
    np.testing.assert_allclose(image.coords, chart.image_center.coords, atol=1e-12)


def test_chart_sends_basis_points_to_their_images(scaled_charts):
    chart = scaled_charts.chart(5)
    for j in chart.basis_indices:
        image = apply_chart(chart, scaled_charts.net.points[j])
        np.testing.assert_allclose(image.coords, scaled_charts.correspondence.images[j].coords, atol=1e-10)


def test_basis_points_are_near_the_frame_directions(identity_charts):
    chart = identity_charts.chart(1)
    assert len(chart.basis_indices) == 2
    assert max(chart.basis_distances) <= 2 * EPSILON


def test_differential_at_center_is_the_linear_part(scaled_charts):
    chart = scaled_charts.chart(2)
    np.testing.assert_allclose(chart_differential(chart, chart.center).matrix, chart.L.matrix, atol=1e-8)


def test_scaled_chart_is_off_isometry_by_the_scale(scaled_charts):
    chart = scaled_charts.chart(4)
    assert distance_to_isometry(chart.L) == pytest.approx(0.02, abs=1e-9)


def test_chart_rejects_points_outside_its_domain(identity_charts):
    chart = identity_charts.chart(0)
    far = PointOnManifold(0, chart.center.coords + np.array([3.0, 0.0]))
    with pytest.raises(GeometryError):
        apply_chart(chart, far)


def test_domain_samples_stay_in_the_ball(identity_charts, rng):
    chart = identity_charts.chart(0)
    torus = chart.source
    for x in sample_domain(chart, rng, 20):
        assert torus.exact_distance(chart.center, x) <= chart.radius + 1e-12


def test_identity_chart_respects_the_net(identity_charts):
    chart = identity_charts.chart(6)
    report = check_chart_respects_net(chart, identity_charts.net, identity_charts.correspondence)
    assert report.lemma == "chart-respects-net"
    assert report.details["points"] > 2
    assert report.worst_ratio == pytest.approx(0.0, abs=1e-10)


def test_identity_chart_is_an_isometry(identity_charts):
    report = check_chart_lipschitz(identity_charts.chart(7), samples=5, seed=0)
    assert report.details["worst_stretch"] == pytest.approx(1.0, abs=1e-9)
    assert report.details["worst_isometry_defect"] == pytest.approx(0.0, abs=1e-8)
    assert report.passed


def test_scaled_chart_stretch_matches_the_scale(scaled_charts):
    report = check_chart_lipschitz(scaled_charts.chart(7), samples=5, seed=0)
    assert report.details["worst_stretch"] == pytest.approx(1.02, abs=1e-9)


def test_overlapping_identity_charts_agree(identity_charts):
    net = identity_charts.net
    i = 0
    j = next(k for k, _ in net.within(net.points[0], 4 * EPSILON) if k != 0)
    report = check_pairwise_closeness(identity_charts.chart(i), identity_charts.chart(j), samples=5, seed=1)
    assert report.lemma == "chart-closeness"
    assert report.details["worst_c0"] == pytest.approx(0.0, abs=1e-10)
    assert report.details["worst_c1"] == pytest.approx(0.0, abs=1e-8)


def test_closeness_rejects_distant_charts(identity_charts):
    net = identity_charts.net
    far = max(range(len(net)), key=lambda j: net.distance(0, j))
    with pytest.raises(GeometryError):
        check_pairwise_closeness(identity_charts.chart(0), identity_charts.chart(far), samples=1, seed=0)


def test_overlapping_pairs_are_ordered_and_close(identity_charts):
    pairs = identity_charts.overlapping_pairs()
    assert pairs
    for i, j in pairs:
        assert i < j
        assert identity_charts.net.distance(i, j) < 4 * EPSILON


def test_chart_set_builds_in_index_order(net, identity_charts):
    charts = ChartSet(net, identity_charts.correspondence, DELTA, n_jobs=2)
    built = charts.build([4, 1, 2])
    assert [c.index for c in built] == [1, 2, 4]
    assert len(charts) == 3
    assert 4 in charts


def test_chart_roundtrips_through_dict(identity_charts):
    chart = construct_chart(8, identity_charts.net, identity_charts.correspondence, DELTA)
    restored = LocalChart.from_dict(chart.to_dict(), identity_charts.net, identity_charts.correspondence)
    assert restored.basis_indices == chart.basis_indices
    np.testing.assert_array_equal(restored.L.matrix, chart.L.matrix)
