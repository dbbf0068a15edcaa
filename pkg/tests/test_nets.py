import math

import numpy as np
import pytest

from src.exceptions import GeometryError
from src.manifolds.sphere import Ellipsoid, RoundSphere
from src.manifolds.torus import FlatTorus
from src.manifolds.types import PointOnManifold
from src.nets.correspondence import (
    Correspondence,
    brute_force_match,
    coordinate_identity,
    effective_delta,
    heuristic_distortion,
    match_distance_matrices,
    oracle_correspondence,
)
from src.nets.net_builder import Net, build_net, validate_net


@pytest.fixture
def small_net(small_torus):
    return build_net(small_torus, 0.5, seed=0)


def test_net_is_separated_and_covering(small_net):
    separation, covering = validate_net(small_net, probes=2000, seed=1)
    assert separation > 0.5 * (1 - 1e-6)
    assert covering <= 0.5 * (1 + 1e-6)


def test_net_size_is_consistent_with_area(small_net):
    # disjoint eps/2 disks bound the size from above, covering eps disks from below
    assert 16 / (math.pi * 0.5**2) <= len(small_net) <= 16 / (math.pi * 0.25**2)


def test_net_build_is_deterministic(small_torus):
    first = build_net(small_torus, 0.5, seed=3)
    second = build_net(small_torus, 0.5, seed=3)
    assert first.to_dict() == second.to_dict()


def test_net_rejects_large_epsilon(small_torus):
    with pytest.raises(ValueError):
        build_net(small_torus, 1.5, seed=0)


def test_net_roundtrips_through_dict(small_net, small_torus):
    restored = Net.from_dict(small_net.to_dict(), small_torus)
    assert len(restored) == len(small_net)
    assert restored.distance(0, 1) == pytest.approx(small_net.distance(0, 1))


def test_nearest_breaks_ties_by_index(small_torus):
    net = Net(small_torus, [PointOnManifold(0, [0.0, 0.0]), PointOnManifold(0, [2.0, 0.0])], 1.0)
    index, gap = net.nearest(PointOnManifold(0, [1.0, 0.0]), radius=1.5)
    assert index == 0
    assert gap == pytest.approx(1.0)
    with pytest.raises(GeometryError):
        net.nearest(PointOnManifold(0, [1.0, 1.5]), radius=0.5)


def test_identity_correspondence_has_no_distortion(small_net, small_torus):
    chi = oracle_correspondence(
        coordinate_identity(small_torus, small_torus), small_net, small_torus, covering_probes=500, seed=0
    )
    assert chi.distortion == pytest.approx(0.0, abs=1e-12)
    assert chi.covering_defect <= 0.5 * (1 + 1e-6)
    assert chi.pairs > 0


def test_scaled_correspondence_distortion_grows_with_distance(small_net, small_torus):
    scaled = FlatTorus(period=4.0, scale=1.01, prefer_oracles=True)
    chi = oracle_correspondence(
        coordinate_identity(small_torus, scaled), small_net, scaled, max_pair_distance=2.0, covering_probes=200
    )
    assert 0 < chi.distortion <= 0.01 * 2.0 + 1e-12


def test_coordinate_identity_needs_matching_charts(small_torus):
    with pytest.raises(GeometryError):
        coordinate_identity(small_torus, FlatTorus(period=4.0, n=3))


def test_effective_delta_is_the_largest_defect(small_net, small_torus):
    chi = Correspondence(
        source=small_net,
        target=small_torus,
        images=list(small_net.points),
        distortion=0.02,
        covering_defect=0.3,
    )
    assert effective_delta(0.01, chi) == pytest.approx(0.3)
    assert effective_delta(0.5, chi) == pytest.approx(0.5)


def test_correspondence_requires_one_image_per_point(small_net, small_torus):
    with pytest.raises(GeometryError):
        Correspondence(small_net, small_torus, small_net.points[:-1], 0.0, 0.0)


def test_matching_recovers_a_permutation():
    rng = np.random.default_rng(0)
    points = rng.uniform(size=(6, 2))
    source = np.linalg.norm(points[:, None] - points[None, :], axis=-1)
    order = [3, 0, 5, 1, 4, 2]
    target = source[np.ix_(order, order)]
    assignment, distortion = match_distance_matrices(source, target)
    assert distortion == pytest.approx(0.0, abs=1e-12)
    assert heuristic_distortion(source, target, assignment) == pytest.approx(0.0, abs=1e-12)


def test_matching_rejects_large_inputs():
    with pytest.raises(ValueError):
        match_distance_matrices(np.zeros((13, 13)), np.zeros((13, 13)))


def test_brute_force_match_of_a_net_with_itself(small_torus):
    points = [PointOnManifold(0, [x, y]) for x in (0.0, 1.5) for y in (0.0, 2.0)]
    net = Net(small_torus, points, 1.0)
    chi = brute_force_match(net, net)
    assert chi.distortion == pytest.approx(0.0, abs=1e-12)
    assert [p.coords.tolist() for p in chi.images] == [p.coords.tolist() for p in net.points]
    assert math.isnan(chi.covering_defect)


def test_brute_force_match_needs_equal_sizes(small_torus):
    net = Net(small_torus, [PointOnManifold(0, [0.0, 0.0]), PointOnManifold(0, [2.0, 0.0])], 1.0)
    other = Net(small_torus, [PointOnManifold(0, [0.0, 0.0])], 1.0)
    with pytest.raises(ValueError):
        brute_force_match(net, other)


def test_sphere_to_ellipsoid_correspondence_is_measured():
    V = RoundSphere(radius=2.2, n=2, prefer_oracles=True)
    W = Ellipsoid(axes=(2.2, 2.2, 2.3), n=2)
    net = build_net(V, 0.5, seed=0)
    chi = oracle_correspondence(
        coordinate_identity(V, W), net, W, max_pair_distance=4.0, max_pairs=10, covering_probes=5, seed=2
    )
    assert chi.pairs == 10
    # W lengths lie between 1 and 2.3 / 2.2 times V lengths, for pairs closer than 4
    assert 0.0 <= chi.distortion <= 4.0 * (2.3 / 2.2 - 1.0) + 1e-6
    assert chi.covering_defect <= 0.6
