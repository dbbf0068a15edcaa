"""Epsilon-separated epsilon-nets by farthest-point sampling with Voronoi repair"""

import logging
import math
import threading
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.exceptions import GeometryError
from src.geodesics.bvp import distance
from src.manifolds.base import ManifoldModel
from src.manifolds.types import PointOnManifold

logger = logging.getLogger(__name__)

CACHE_RADIUS = 6.0
MAX_REPAIR_ROUNDS = 100


def ambient_offsets(model: ManifoldModel, rows: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Ambient difference vectors rows - origin, minimal image on periodic models"""
    offsets = np.atleast_2d(rows) - origin
    box = model.ambient_boxsize()
    if box is not None:
        offsets = offsets - box * np.round(offsets / box)
    return offsets


def wrap_ambient(model: ManifoldModel, rows: np.ndarray) -> np.ndarray:
    """Ambient rows moved into the periodic box [0, box) expected by the spatial trees"""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    box = model.ambient_boxsize()
    if box is None:
        return rows
    wrapped = np.mod(rows, box)
    return np.where(wrapped >= box, 0.0, wrapped)


def proxy_distances(model: ManifoldModel, rows: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Distance proxy from ``origin`` to each ambient row"""
    chords = np.linalg.norm(ambient_offsets(model, rows, origin), axis=1)
    return model.ambient_to_distance(chords)


class Net:
    """
    Points of a manifold forming an epsilon-separated epsilon-net

    Geodesic distances between net points closer than 6 are cached; a
    spatial tree over the ambient representation answers range queries.
    """

    def __init__(self, model: ManifoldModel, points: List[PointOnManifold], epsilon: float):
        if not points:
            raise GeometryError("A net needs at least one point")
        self.model = model
        self.points = [model.canonicalize(p) for p in points]
        self.epsilon = float(epsilon)
        self.ambient = wrap_ambient(model, model.to_ambient(self.points))
        self._tree = cKDTree(self.ambient, boxsize=model.ambient_boxsize())
        self._cache: Dict[Tuple[int, int], float] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.points)

    def __getstate__(self) -> Dict[str, Any]:
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state: Dict[str, Any]):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def distance(self, i: int, j: int) -> float:
        """Geodesic distance between net points i and j (cached below 6)"""
        if i == j:
            return 0.0
        key = (min(i, j), max(i, j))
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = self.distance_to(self.points[key[0]], key[1])
        if value < CACHE_RADIUS:
            with self._lock:
                self._cache[key] = value
        return value

    def distance_to(self, point: PointOnManifold, j: int) -> float:
        """Geodesic distance from an arbitrary point to net point j"""
        if self.model.ambient_distance_exact:
            origin = self.model.to_ambient([point])[0]
            return float(proxy_distances(self.model, self.ambient[j : j + 1], origin)[0])
        return distance(self.model, point, self.points[j])

    def candidates(self, point: PointOnManifold, radius: float) -> List[int]:
        """Indices of net points whose ambient proxy lies within ``radius`` of the point (a superset)"""
        origin = self.model.to_ambient([point])[0]
        reach = float(self.model.distance_to_ambient(radius)) * (1 + 1e-9) + 1e-12
        origin = wrap_ambient(self.model, origin)[0]
        return sorted(self._tree.query_ball_point(origin, reach))

    def within(self, point: PointOnManifold, radius: float) -> List[Tuple[int, float]]:
        """(index, geodesic distance) of net points strictly closer than ``radius``, by index"""
        found = []
        for j in self.candidates(point, radius):
            d = self.distance_to(point, j)
            if d < radius:
                found.append((j, d))
        return found

    def nearest(self, point: PointOnManifold, radius: Optional[float] = None) -> Tuple[int, float]:
        """Nearest net point; ties go to the lowest index"""
        radius = 2 * self.epsilon if radius is None else radius
        found = self.within(point, radius)
        if not found:
            raise GeometryError(f"No net point within {radius} of {point}")
        return min(found, key=lambda item: (item[1], item[0]))

    def to_dict(self) -> Dict[str, Any]:
        return {"epsilon": self.epsilon, "points": [p.to_dict() for p in self.points]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], model: ManifoldModel) -> "Net":
        return cls(model, [PointOnManifold.from_dict(p) for p in data["points"]], data["epsilon"])


def _farthest_point_sampling(model: ManifoldModel, pool: np.ndarray, epsilon: float, start: int) -> List[int]:
    pool = wrap_ambient(model, pool)
    tree = cKDTree(pool, boxsize=model.ambient_boxsize())
    nearest = np.full(len(pool), np.inf)
    chosen: List[int] = []
    current = start
    while True:
        chosen.append(current)
        if len(chosen) == 1:
            affected = np.arange(len(pool))
        else:
            reach = float(np.max(nearest[np.isfinite(nearest)])) * (1 + 1e-9)
            affected = np.asarray(tree.query_ball_point(pool[current], reach), dtype=int)
        if len(affected):
            chords = np.linalg.norm(ambient_offsets(model, pool[affected], pool[current]), axis=1)
            nearest[affected] = np.minimum(nearest[affected], chords)
        current = int(np.argmax(nearest))
        if float(model.ambient_to_distance(nearest[current])) <= epsilon:
            return chosen


def _repair_covering(model: ManifoldModel, net_rows: np.ndarray, epsilon: float) -> Tuple[np.ndarray, bool]:
    """Insert Voronoi vertices farther than epsilon from the net until none is left"""
    for round_index in range(MAX_REPAIR_ROUNDS):
        candidates = model.covering_candidates(net_rows)
        if candidates is None:
            return net_rows, False
        if len(candidates) == 0:
            return net_rows, True
        candidates = wrap_ambient(model, candidates)
        gaps, _ = cKDTree(net_rows, boxsize=model.ambient_boxsize()).query(candidates)
        gaps = model.ambient_to_distance(gaps)
        order = [int(k) for k in np.argsort(-gaps, kind="stable") if gaps[k] > epsilon]
        if not order:
            return net_rows, True
        added: List[np.ndarray] = []
        for k in order:
            if added and float(np.min(proxy_distances(model, np.array(added), candidates[k]))) <= epsilon:
                continue
            added.append(candidates[k])
        logger.info(f"Covering repair round {round_index}: added {len(added)} Voronoi vertices")
        net_rows = np.vstack([net_rows, np.array(added)])
    raise GeometryError(f"Covering radius {epsilon} not reached after {MAX_REPAIR_ROUNDS} repair rounds")


def build_net(M: ManifoldModel, epsilon: float, seed: int) -> Net:
    """
    Build an epsilon-separated epsilon-net by greedy farthest-point sampling

    Farthest-point sampling runs on a seeded candidate pool with spacing
    epsilon / 4 until every pool point is within epsilon; every accepted point
    was farther than epsilon from the previous ones, which gives the
    separation. Voronoi vertices of the net still farther than epsilon are
    then inserted so the covering holds on the whole manifold.

    Args:
        M: Manifold model with a candidate pool
        epsilon: Net scale, at most 1
        seed: Pool and start seed

    Returns:
        Net
    """
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
    rng = np.random.default_rng(seed)
    try:
        pool = M.candidate_pool(epsilon / 4, rng)
    except NotImplementedError as e:
        logger.error(f"Error building net: {e}")
        raise
    if len(pool) == 0:
        raise GeometryError("Empty candidate pool")
    start = int(rng.integers(len(pool)))
    pool = wrap_ambient(M, pool)
    chosen = _farthest_point_sampling(M, pool, epsilon, start)
    rows, repaired = _repair_covering(M, pool[chosen], epsilon)
    if not repaired:
        logger.warning(f"{M.name} has no Voronoi candidates; the covering radius holds on the pool only")
    net = Net(M, M.from_ambient(rows), epsilon)
    logger.info(
        f"Built net on {M.name}: {len(net)} points at epsilon={epsilon} "
        f"({len(chosen)} sampled, {len(rows) - len(chosen)} repaired)"
    )
    return net


def validate_net(net: Net, probes: int = 10000, seed: int = 0) -> Tuple[float, float]:
    """
    Separation and covering radius of a net

    Separation is the exact minimum pairwise geodesic distance (infinite for
    a single point); the covering radius is the largest distance from a
    seeded probe to the net.

    Returns:
        (separation, covering radius)
    """
    M = net.model
    if len(net) == 1:
        separation = math.inf
    elif M.ambient_distance_exact:
        gaps, _ = net._tree.query(net.ambient, k=2)
        separation = float(np.min(M.ambient_to_distance(gaps[:, 1])))
    else:
        gaps, _ = net._tree.query(net.ambient, k=2)
        reach = float(np.max(gaps[:, 1])) * 1.5
        pairs = sorted(net._tree.query_pairs(reach))
        separation = min(net.distance(i, j) for i, j in pairs)

    rng = np.random.default_rng(seed)
    samples = M.sample_points(rng, probes)
    if M.ambient_distance_exact:
        gaps, _ = net._tree.query(wrap_ambient(M, M.to_ambient(samples)))
        covering = float(np.max(M.ambient_to_distance(gaps)))
    else:
        covering = 0.0
        neighbours = min(4, len(net))
        _, index = net._tree.query(wrap_ambient(M, M.to_ambient(samples)), k=neighbours)
        index = np.asarray(index).reshape(len(samples), neighbours)
        for probe, rows in zip(samples, index):
            covering = max(covering, min(net.distance_to(probe, int(j)) for j in rows))
    logger.info(f"Net of {len(net)} points: separation {separation:.6g}, covering radius {covering:.6g}")
    return separation, covering
