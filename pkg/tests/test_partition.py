import numpy as np
import pytest

from src.exceptions import GeometryError
from src.gluing.partition import (
    PartitionOfUnity,
    bump,
    bump_derivative,
    check_partition,
    finite_difference_gradients,
    weight_gradient,
    weights,
)
from src.manifolds.types import PointOnManifold
from src.nets.net_builder import Net, build_net


@pytest.fixture
def partition(small_torus):
    return PartitionOfUnity(build_net(small_torus, 0.5, seed=0))


def test_bump_plateau_and_support():
    assert bump(0.0) == 1.0
    assert bump(0.5) == 1.0
    assert bump(1.0) == 1.0
    assert bump(2.0) == 0.0
    assert bump(2.5) == 0.0


def test_bump_is_symmetric_about_the_midpoint():
    assert bump(1.5) == pytest.approx(0.5)
    for s in (0.1, 0.25, 0.4):
        assert bump(1.5 + s) == pytest.approx(1.0 - bump(1.5 - s), abs=1e-12)


def test_bump_is_nonincreasing():
    values = bump(np.linspace(0.0, 3.0, 301))
    assert np.all(np.diff(values) <= 1e-15)


def test_bump_rejects_negative_radius():
    with pytest.raises(ValueError):
        bump(-0.1)


def test_bump_derivative_matches_finite_differences():
    h = 1e-6
    for r in (0.5, 1.2, 1.5, 1.8, 2.5):
        numeric = (bump(r + h) - bump(r - h)) / (2 * h)
        assert bump_derivative(r) == pytest.approx(numeric, abs=1e-6)


def test_weights_sum_to_one(partition, rng):
    for x in partition.model.sample_points(rng, 20):
        pairs = weights(x, partition)
        assert sum(w for _, w in pairs) == pytest.approx(1.0, abs=1e-12)
        assert [i for i, _ in pairs] == sorted(i for i, _ in pairs)
        assert all(0.0 < w <= 1.0 for _, w in pairs)


def test_gradients_sum_to_zero(partition, rng):
    x = partition.model.sample_points(rng, 1)[0]
    evaluation = partition.evaluate(x)
    np.testing.assert_allclose(np.sum(evaluation.gradients, axis=0), 0.0, atol=1e-12)


def test_weight_gradient_matches_finite_differences(partition):
    x = PointOnManifold(0, [1.3, 2.7])
    numeric = finite_difference_gradients(partition, x)
    for i in numeric:
        np.testing.assert_allclose(weight_gradient(x, partition, i), numeric[i], atol=1e-5)


def test_weight_gradient_vanishes_off_support(partition):
    x = PointOnManifold(0, [1.3, 2.7])
    active = {i for i, _ in weights(x, partition)}
    outside = next(i for i in range(len(partition.net)) if i not in active)
    np.testing.assert_array_equal(weight_gradient(x, partition, outside), np.zeros(2))


def test_single_chart_point_has_weight_one(small_torus):
    net = Net(small_torus, [PointOnManifold(0, [0.0, 0.0]), PointOnManifold(0, [2.0, 2.0])], 0.5)
    pou = PartitionOfUnity(net)
    assert weights(PointOnManifold(0, [0.2, 0.1]), pou) == [(0, 1.0)]


def test_uncovered_point_raises(small_torus):
    net = Net(small_torus, [PointOnManifold(0, [0.0, 0.0])], 0.5)
    with pytest.raises(GeometryError):
        weights(PointOnManifold(0, [2.0, 2.0]), PartitionOfUnity(net))


def test_partition_audit_passes_on_a_net(partition):
    audit = check_partition(partition, probes=100, seed=0, gradient_probes=20)
    assert audit.passed
    assert audit.support_violations == 0
    assert audit.plateau_violations == 0
    assert not audit.overlap_exceeded
    assert audit.max_overlap >= 1
