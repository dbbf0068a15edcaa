"""Gromov-Hausdorff approximations between a net and a second manifold"""

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.exceptions import GeometryError
from src.geodesics.bvp import distance
from src.manifolds.base import ManifoldModel
from src.manifolds.types import PointOnManifold
from src.nets.net_builder import Net, wrap_ambient

logger = logging.getLogger(__name__)

MAX_MATCH_SIZE = 12

PointMap = Callable[[PointOnManifold], PointOnManifold]


@dataclass(eq=False)
class Correspondence:
    """
    A map chi from the points of a net in V to points of W

    ``distortion`` is the largest |dist_V(v_i, v_j) - dist_W(chi v_i, chi v_j)|
    over the measured pairs; ``covering_defect`` is the largest distance from
    a probe of W to the image.
    """

    source: Net
    target: ManifoldModel
    images: List[PointOnManifold]
    distortion: float
    covering_defect: float
    pairs: int = 0
    max_pair_distance: float = 4.0

    def __post_init__(self):
        if len(self.images) != len(self.source):
            raise GeometryError(f"{len(self.images)} images for a net of {len(self.source)} points")

    def image(self, i: int) -> PointOnManifold:
        return self.images[i]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "images": [p.to_dict() for p in self.images],
            "distortion": self.distortion,
            "covering_defect": self.covering_defect,
            "pairs": self.pairs,
            "max_pair_distance": self.max_pair_distance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: Net, target: ManifoldModel) -> "Correspondence":
        return cls(
            source=source,
            target=target,
            images=[PointOnManifold.from_dict(p) for p in data["images"]],
            distortion=data["distortion"],
            covering_defect=data["covering_defect"],
            pairs=data.get("pairs", 0),
            max_pair_distance=data.get("max_pair_distance", 4.0),
        )


def coordinate_identity(source: ManifoldModel, target: ManifoldModel) -> PointMap:
    """
    The map sending a point to the point with the same chart and coordinates

    Valid between models sharing a chart structure: a torus and its rescaled
    or conformally perturbed copy, a sphere and an ellipsoid.
    """
    if source.dimension != target.dimension or source.chart_count != target.chart_count:
        raise GeometryError(f"{source.name} and {target.name} do not share a chart structure")

    def mapping(p: PointOnManifold) -> PointOnManifold:
        return target.canonicalize(PointOnManifold(p.chart, p.coords))

    return mapping


def _measured_pairs(net: Net, max_pair_distance: float, max_pairs: Optional[int], seed: int) -> List[Tuple[int, int]]:
    reach = float(net.model.distance_to_ambient(max_pair_distance)) * (1 + 1e-9)
    pairs = sorted(net._tree.query_pairs(reach))
    if max_pairs is not None and len(pairs) > max_pairs:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(pairs), size=max_pairs, replace=False))
        pairs = [pairs[k] for k in keep]
    return pairs


def image_covering_defect(target: ManifoldModel, images: List[PointOnManifold], probes: int, seed: int) -> float:
    """Largest distance from a seeded probe of W to the nearest image point"""
    rng = np.random.default_rng(seed)
    samples = target.sample_points(rng, probes)
    rows = wrap_ambient(target, target.to_ambient(images))
    tree = cKDTree(rows, boxsize=target.ambient_boxsize())
    neighbours = min(4, len(images))
    _, index = tree.query(wrap_ambient(target, target.to_ambient(samples)), k=neighbours)
    index = np.asarray(index).reshape(len(samples), neighbours)
    worst = 0.0
    for probe, rows_index in zip(samples, index):
        worst = max(worst, min(distance(target, probe, images[int(j)]) for j in rows_index))
    return worst


def oracle_correspondence(
    F: PointMap,
    net: Net,
    target: ManifoldModel,
    max_pair_distance: float = 4.0,
    max_pairs: Optional[int] = None,
    covering_probes: int = 1000,
    seed: int = 0,
) -> Correspondence:
    """
    chi(v_i) = F(v_i) for a known map F, with measured distortion and covering defect

    Args:
        F: Map from points of V to points of W supplied by the experiment
        net: Net in V
        target: The manifold W
        max_pair_distance: Only pairs with dist_V below this are measured
        max_pairs: Seeded subsample of the measured pairs when set
        covering_probes: Probes of W for the covering defect
        seed: Seed for pair subsampling and probes

    Returns:
        Correspondence
    """
    images = []
    for p in net.points:
        image = target.canonicalize(F(p))
        try:
            np.linalg.cholesky(target.metric_at(image))
        except np.linalg.LinAlgError:
            raise GeometryError(f"Image {image} of {p} lies outside the working atlas of {target.name}")
        images.append(image)

    pairs = _measured_pairs(net, max_pair_distance, max_pairs, seed)
    distortion = 0.0
    for i, j in pairs:
        source_distance = net.distance(i, j)
        if source_distance >= max_pair_distance:
            continue
        distortion = max(distortion, abs(source_distance - distance(target, images[i], images[j])))
    covering = image_covering_defect(target, images, covering_probes, seed)
    logger.info(
        f"Correspondence {net.model.name} -> {target.name}: distortion {distortion:.6g} "
        f"over {len(pairs)} pairs, image covering defect {covering:.6g}"
    )
    return Correspondence(
        source=net,
        target=target,
        images=images,
        distortion=distortion,
        covering_defect=covering,
        pairs=len(pairs),
        max_pair_distance=max_pair_distance,
    )


def effective_delta(curvature_bound: float, correspondence: Correspondence) -> float:
    """max(curvature bound, distortion, image covering defect)"""
    return max(curvature_bound, correspondence.distortion, correspondence.covering_defect)


def match_distance_matrices(source: np.ndarray, target: np.ndarray) -> Tuple[List[int], float]:
    """
    Bijection minimizing the largest pairwise distortion between two finite metric spaces

    Depth-first branch and bound over assignments, bounded initially by the
    identity assignment, so the identity is returned whenever it is optimal.

    Returns:
        (assignment, distortion) with source point i sent to target point assignment[i]
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    size = len(source)
    if source.shape != (size, size) or target.shape != (size, size):
        raise ValueError(f"Distance matrices must be square and of equal size, got {source.shape}, {target.shape}")
    if size > MAX_MATCH_SIZE:
        raise ValueError(f"Exhaustive matching is limited to {MAX_MATCH_SIZE} points, got {size}")
    if size == 0:
        return [], 0.0

    best_assignment = list(range(size))
    best = float(np.max(np.abs(source - target)))
    assignment: List[int] = []
    used = [False] * size

    def search(depth: int, current: float):
        nonlocal best, best_assignment
        if depth == size:
            if current < best:
                best, best_assignment = current, list(assignment)
            return
        for candidate in range(size):
            if used[candidate]:
                continue
            worst = current
            for previous in range(depth):
                worst = max(worst, abs(source[depth, previous] - target[candidate, assignment[previous]]))
                if worst >= best:
                    break
            if worst >= best:
                continue
            used[candidate] = True
            assignment.append(candidate)
            search(depth + 1, worst)
            assignment.pop()
            used[candidate] = False

    search(0, 0.0)
    return best_assignment, best


def _distance_matrix(net: Net) -> np.ndarray:
    size = len(net)
    matrix = np.zeros((size, size))
    for i, j in itertools.combinations(range(size), 2):
        matrix[i, j] = matrix[j, i] = net.distance(i, j)
    return matrix


def brute_force_match(netV: Net, netW: Net) -> Correspondence:
    """
    Exhaustive optimal correspondence between two small nets (at most 12 points)

    Both nets are reduced to their distance matrices and matched by
    match_distance_matrices; v_i is sent to the matched point of netW.
    """
    if len(netV) != len(netW):
        raise ValueError(f"Nets of different sizes: {len(netV)} vs {len(netW)}")
    assignment, distortion = match_distance_matrices(_distance_matrix(netV), _distance_matrix(netW))
    images = [netW.points[k] for k in assignment]
    return Correspondence(
        source=netV,
        target=netW.model,
        images=images,
        distortion=distortion,
        covering_defect=float("nan"),
        pairs=len(netV) * (len(netV) - 1) // 2,
        max_pair_distance=float("inf"),
    )


def heuristic_distortion(source: np.ndarray, target: np.ndarray, assignment: Sequence[int]) -> float:
    """Distortion of a given assignment between two distance matrices"""
    order = np.asarray(assignment, dtype=int)
    return float(np.max(np.abs(np.asarray(source) - np.asarray(target)[np.ix_(order, order)])))
