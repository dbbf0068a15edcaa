"""Round spheres and ellipsoids on the two-cap stereographic atlas"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import SphericalVoronoi
from scipy.stats import special_ortho_group

from src.exceptions import GeometryError
from src.manifolds.base import ManifoldModel
from src.manifolds.conformal import ConformallyFlatModel
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

SWITCH_RADIUS_SQ = 2.0


def stereographic_embedding(chart: int, u: np.ndarray) -> np.ndarray:
    """
    Point of the unit sphere S^n in R^(n+1) with stereographic coordinates u

    Chart 0 is centered at the south pole, chart 1 at the north pole; both
    cover the sphere minus one pole and |u| <= 1 is the canonical cap.
    """
    sq = float(u @ u)
    height = (sq - 1.0) if chart == 0 else (1.0 - sq)
    return np.append(2.0 * u, height) / (1.0 + sq)


def stereographic_jacobian(chart: int, u: np.ndarray) -> np.ndarray:
    q = 1.0 + float(u @ u)
    n = u.shape[0]
    jacobian = np.empty((n + 1, n))
    jacobian[:n] = 2.0 * np.eye(n) / q - 4.0 * np.outer(u, u) / q**2
    jacobian[n] = (4.0 if chart == 0 else -4.0) * u / q**2
    return jacobian


def unit_to_chart(x: np.ndarray) -> PointOnManifold:
    """Canonical chart point of a unit vector in R^(n+1)"""
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    if x[-1] <= 0.0:
        return PointOnManifold(0, x[:-1] / (1.0 - x[-1]))
    return PointOnManifold(1, x[:-1] / (1.0 + x[-1]))


def cube_sphere_grid(dim: int, per_face: int) -> np.ndarray:
    """Unit vectors obtained by projecting regular grids on the faces of the cube [-1, 1]^dim"""
    ticks = (np.arange(per_face) + 0.5) * (2.0 / per_face) - 1.0
    face = np.stack(np.meshgrid(*([ticks] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1)
    faces = []
    for axis in range(dim):
        for sign in (-1.0, 1.0):
            block = np.insert(face, axis, sign, axis=1)
            faces.append(block)
    grid = np.concatenate(faces)
    return grid / np.linalg.norm(grid, axis=1, keepdims=True)


@dataclass(frozen=True, kw_only=True)
class StereographicModel(ManifoldModel):
    """Shared chart machinery for metrics on the unit sphere S^n"""

    n: int = 2

    def __post_init__(self):
        super().__post_init__()
        if not 2 <= self.n <= 4:
            raise ValueError(f"Sphere dimension must be in [2, 4], got {self.n}")

    @property
    def dimension(self) -> int:
        return self.n

    @property
    def chart_count(self) -> int:
        return 2

    def chart_switch(self, chart: int, coords: np.ndarray) -> Optional[int]:
        if float(coords @ coords) > SWITCH_RADIUS_SQ:
            return 1 - chart
        return None

    def chart_transition(self, source: int, target: int, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        coords = np.asarray(coords, dtype=float)
        if source == target:
            return coords, np.eye(self.n)
        if target not in (0, 1):
            raise GeometryError(f"{self.name} has no chart {target}")
        sq = float(coords @ coords)
        if sq < 1e-16:
            raise GeometryError(f"Chart {source} point {coords} is the pole missing from chart {target}")
        jacobian = (np.eye(self.n) - 2.0 * np.outer(coords, coords) / sq) / sq
        return coords / sq, jacobian

    def unit_point(self, p: PointOnManifold) -> np.ndarray:
        return stereographic_embedding(p.chart, p.coords)

    def unit_tangent(self, v: TangentAtPoint) -> np.ndarray:
        return stereographic_jacobian(v.base.chart, v.base.coords) @ v.components

    def tangent_from_unit(self, p: PointOnManifold, vector: np.ndarray) -> TangentAtPoint:
        """Chart components at p of a vector tangent to the unit sphere"""
        jacobian = stereographic_jacobian(p.chart, p.coords)
        components = np.linalg.solve(jacobian.T @ jacobian, jacobian.T @ vector)
        return TangentAtPoint(p, components)

    def log_guess(self, p: PointOnManifold, q: PointOnManifold) -> Optional[TangentAtPoint]:
        """Logarithm of the unit sphere, exact up to the metric distortion of the model"""
        x0 = self.unit_point(p)
        x1 = self.unit_point(q)
        cosine = float(x0 @ x1)
        normal = x1 - cosine * x0
        sine = float(np.linalg.norm(normal))
        if sine < 1e-15:
            return None
        return self.tangent_from_unit(p, math.atan2(sine, cosine) * normal / sine)

    def sample_points(self, rng: np.random.Generator, count: int) -> List[PointOnManifold]:
        directions = rng.normal(size=(count, self.n + 1))
        return [unit_to_chart(row) for row in directions]

    def _ambient_axes(self) -> np.ndarray:
        raise NotImplementedError

    def to_ambient(self, points: List[PointOnManifold]) -> np.ndarray:
        axes = self._ambient_axes() * self.scale
        return np.array([axes * self.unit_point(p) for p in points])

    def from_ambient(self, rows: np.ndarray) -> List[PointOnManifold]:
        axes = self._ambient_axes() * self.scale
        return [unit_to_chart(row / axes) for row in np.atleast_2d(rows)]

    def candidate_pool(self, spacing: float, rng: np.random.Generator) -> np.ndarray:
        axes = self._ambient_axes() * self.scale
        per_face = max(2, math.ceil(math.pi * float(np.max(axes)) / spacing))
        rotation = special_ortho_group.rvs(self.n + 1, random_state=rng)
        return (cube_sphere_grid(self.n + 1, per_face) @ rotation.T) * axes

    def covering_candidates(self, ambient_points: np.ndarray) -> Optional[np.ndarray]:
        axes = self._ambient_axes() * self.scale
        unit = np.atleast_2d(ambient_points) / axes
        unit /= np.linalg.norm(unit, axis=1, keepdims=True)
        try:
            vertices = SphericalVoronoi(unit, radius=1.0, threshold=1e-8).vertices
        except Exception as e:
            logger.warning(f"Spherical Voronoi diagram failed on {len(unit)} points: {e}")
            return None
        return vertices * axes


@dataclass(frozen=True, kw_only=True)
class RoundSphere(StereographicModel, ConformallyFlatModel):
    """
    Round sphere of radius R

    Both caps carry the conformal metric (2R / (1 + |u|^2))^2 * I; great
    circles in the embedding give exact exp, log, transport and curvature.
    """

    radius: float = 1.0

    oracles = frozenset({"exp", "log", "distance", "transport", "curvature"})

    def __post_init__(self):
        super().__post_init__()
        if not self.radius > 0:
            raise ValueError(f"Sphere radius must be positive, got {self.radius}")

    def log_factor(self, chart: int, coords: np.ndarray) -> float:
        return math.log(2.0 * self.radius) - math.log1p(float(coords @ coords))

    def log_factor_gradient(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return -2.0 * coords / (1.0 + float(coords @ coords))

    def log_factor_hessian(self, chart: int, coords: np.ndarray) -> np.ndarray:
        q = 1.0 + float(coords @ coords)
        return -2.0 * np.eye(self.n) / q + 4.0 * np.outer(coords, coords) / q**2

    def _ambient_axes(self) -> np.ndarray:
        return np.full(self.n + 1, self.radius)

    def injectivity_radius(self) -> float:
        return math.pi * self.radius * self.scale

    def curvature_bound(self) -> float:
        return 1.0 / (self.radius * self.scale) ** 2

    def ambient_to_distance(self, ambient: np.ndarray) -> np.ndarray:
        big = self.radius * self.scale
        return 2.0 * big * np.arcsin(np.clip(np.asarray(ambient, dtype=float) / (2.0 * big), 0.0, 1.0))

    def distance_to_ambient(self, distance: np.ndarray) -> np.ndarray:
        big = self.radius * self.scale
        return 2.0 * big * np.sin(np.clip(np.asarray(distance, dtype=float) / (2.0 * big), 0.0, np.pi / 2))

    @property
    def ambient_distance_exact(self) -> bool:
        return True

    def _arc(self, p: PointOnManifold, q: PointOnManifold) -> Tuple[np.ndarray, np.ndarray, float]:
        """Start point, unit initial direction and angle of the great-circle arc from p to q"""
        x0 = self.unit_point(p)
        x1 = self.unit_point(q)
        cosine = float(x0 @ x1)
        normal = x1 - cosine * x0
        sine = float(np.linalg.norm(normal))
        angle = math.atan2(sine, cosine)
        if sine < 1e-15:
            if cosine < 0:
                raise GeometryError("Antipodal points have no unique minimal geodesic")
            return x0, np.zeros_like(x0), 0.0
        return x0, normal / sine, angle

    def exact_exp(self, v: TangentAtPoint) -> PointOnManifold:
        x0 = self.unit_point(v.base)
        tangent = self.unit_tangent(v)
        angle = float(np.linalg.norm(tangent))
        if angle < 1e-300:
            return self.canonicalize(v.base)
        return unit_to_chart(math.cos(angle) * x0 + math.sin(angle) * tangent / angle)

    def exact_log(self, p: PointOnManifold, q: PointOnManifold) -> TangentAtPoint:
        _, direction, angle = self._arc(p, q)
        return self.tangent_from_unit(p, angle * direction)

    def exact_distance(self, p: PointOnManifold, q: PointOnManifold) -> float:
        _, _, angle = self._arc(p, q)
        return self.radius * self.scale * angle

    def exact_transport(self, p: PointOnManifold, q: PointOnManifold, v: TangentAtPoint) -> TangentAtPoint:
        x0, direction, angle = self._arc(p, q)
        vector = self.unit_tangent(v)
        along = float(vector @ direction)
        moved = vector + along * ((math.cos(angle) - 1.0) * direction - math.sin(angle) * x0)
        return self.tangent_from_unit(q, moved)

    def exact_sectional_curvature(self, u: TangentAtPoint, v: TangentAtPoint) -> float:
        return self.curvature_bound()


@dataclass(frozen=True, kw_only=True)
class Ellipsoid(StereographicModel):
    """
    Ellipsoid with semi-axes ``axes`` parametrized through the unit sphere

    The metric is the pullback J^T A^2 J of the Euclidean metric along
    u -> A S(u); connection and curvature come from finite differences.
    """

    axes: Tuple[float, ...] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        super().__post_init__()
        if len(self.axes) != self.n + 1:
            raise ValueError(f"An ellipsoid of dimension {self.n} needs {self.n + 1} axes, got {len(self.axes)}")
        if min(self.axes) <= 0:
            raise ValueError(f"Ellipsoid axes must be positive, got {self.axes}")

    def _ambient_axes(self) -> np.ndarray:
        return np.asarray(self.axes, dtype=float)

    def base_metric(self, chart: int, coords: np.ndarray) -> np.ndarray:
        jacobian = self._ambient_axes()[:, None] * stereographic_jacobian(chart, coords)
        return jacobian.T @ jacobian

    def injectivity_radius(self) -> float:
        """pi / sqrt(K_max) with K_max = a_max^2 / (a_0 a_1)^2 for sorted axes a_0 <= a_1 <= ..."""
        ordered = np.sort(self._ambient_axes())
        return math.pi * ordered[0] * ordered[1] / ordered[-1] * self.scale
