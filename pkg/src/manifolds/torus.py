"""Flat and conformally perturbed tori on a periodic box"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.spatial import Voronoi

from src.exceptions import GeometryError
from src.manifolds.conformal import ConformallyFlatModel
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True, kw_only=True)
class PeriodicBoxModel(ConformallyFlatModel):
    """Conformally flat metric on the box [0, period)^n with periodic identifications"""

    period: float = 8.0
    n: int = 2

    def __post_init__(self):
        super().__post_init__()
        if not self.period > 0:
            raise ValueError(f"Period must be positive, got {self.period}")
        if not 2 <= self.n <= 4:
            raise ValueError(f"Torus dimension must be in [2, 4], got {self.n}")

    @property
    def dimension(self) -> int:
        return self.n

    def wrap(self, chart: int, coords: np.ndarray) -> np.ndarray:
        wrapped = np.mod(np.asarray(coords, dtype=float), self.period)
        # np.mod can return the period itself for tiny negative inputs
        wrapped[wrapped >= self.period] = 0.0
        return wrapped

    def representative(self, coords: np.ndarray, near: np.ndarray) -> np.ndarray:
        near = np.asarray(near, dtype=float)
        offset = np.mod(np.asarray(coords, dtype=float) - near + self.period / 2, self.period) - self.period / 2
        return near + offset

    def sample_points(self, rng: np.random.Generator, count: int) -> List[PointOnManifold]:
        coords = rng.uniform(0.0, self.period, size=(count, self.n))
        return [PointOnManifold(0, self.wrap(0, row)) for row in coords]

    def ambient_boxsize(self) -> Optional[np.ndarray]:
        return np.full(self.n, self.period * self.scale)

    def candidate_pool(self, spacing: float, rng: np.random.Generator) -> np.ndarray:
        box = self.period * self.scale
        per_axis = max(1, math.ceil(box / spacing))
        step = box / per_axis
        shift = rng.uniform(0.0, step, size=self.n)
        axes = [np.arange(per_axis) * step + shift[k] for k in range(self.n)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        return np.mod(grid, box)

    def covering_candidates(self, ambient_points: np.ndarray) -> Optional[np.ndarray]:
        box = self.period * self.scale
        points = np.mod(np.atleast_2d(ambient_points), box)
        shifts = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=self.n))) * box
        tiled = (points[None, :, :] + shifts[:, None, :]).reshape(-1, self.n)
        try:
            vertices = Voronoi(tiled).vertices
        except Exception as e:
            logger.warning(f"Periodic Voronoi diagram failed on {len(points)} points: {e}")
            return None
        inside = np.all((vertices >= 0.0) & (vertices < box), axis=1)
        return vertices[inside]


@dataclass(frozen=True, kw_only=True)
class FlatTorus(PeriodicBoxModel):
    """The flat torus R^n / (period * Z)^n with every analytic oracle"""

    oracles = frozenset({"exp", "log", "distance", "transport", "curvature"})

    def log_factor(self, chart: int, coords: np.ndarray) -> float:
        return 0.0

    def log_factor_gradient(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.zeros(self.n)

    def log_factor_hessian(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.zeros((self.n, self.n))

    def base_metric(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.eye(self.n)

    def christoffel_symbols(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.zeros((self.n, self.n, self.n))

    def christoffel_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.zeros((self.n, self.n, self.n, self.n))

    def riemann(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return np.zeros((self.n, self.n, self.n, self.n))

    def injectivity_radius(self) -> float:
        return self.period * self.scale / 2

    def curvature_bound(self) -> float:
        return 0.0

    @property
    def ambient_distance_exact(self) -> bool:
        return True

    def exact_exp(self, v: TangentAtPoint) -> PointOnManifold:
        return PointOnManifold(0, self.wrap(0, v.base.coords + v.components))

    def exact_log(self, p: PointOnManifold, q: PointOnManifold) -> TangentAtPoint:
        return TangentAtPoint(p, self.representative(q.coords, p.coords) - p.coords)

    def exact_distance(self, p: PointOnManifold, q: PointOnManifold) -> float:
        offset = self.representative(q.coords, p.coords) - p.coords
        return float(self.scale * np.linalg.norm(offset))

    def exact_transport(self, p: PointOnManifold, q: PointOnManifold, v: TangentAtPoint) -> TangentAtPoint:
        return TangentAtPoint(q, v.components)

    def exact_sectional_curvature(self, u: TangentAtPoint, v: TangentAtPoint) -> float:
        return 0.0


@dataclass(frozen=True, kw_only=True)
class ConformalTorus(PeriodicBoxModel):
    """
    Torus with metric (1 + eta * g(x))^2 * I

    g is a seeded sum of cosines with integer wave vectors in [-2, 2]^n and
    absolute amplitudes summing to 1, so |g| <= 1 and the metric stays
    within a factor (1 +- eta) of the flat one.
    """

    eta: float = 0.01
    perturbation_seed: int = 0
    modes: int = 3

    oracles = frozenset({"curvature"})

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.eta < 1.0:
            raise ValueError(f"Perturbation size eta must be in [0, 1), got {self.eta}")
        if self.modes < 1:
            raise ValueError(f"At least one perturbation mode is required, got {self.modes}")
        rng = np.random.default_rng(self.perturbation_seed)
        waves = np.zeros((self.modes, self.n))
        for m in range(self.modes):
            while not np.any(waves[m]):
                waves[m] = rng.integers(-2, 3, size=self.n)
        amplitudes = rng.uniform(0.1, 1.0, size=self.modes) * rng.choice((-1.0, 1.0), size=self.modes)
        amplitudes /= np.sum(np.abs(amplitudes))
        phases = rng.uniform(0.0, 2 * np.pi, size=self.modes)
        object.__setattr__(self, "_frequencies", 2 * np.pi * waves / self.period)
        object.__setattr__(self, "_amplitudes", amplitudes)
        object.__setattr__(self, "_phases", phases)

    def perturbation(self, coords: np.ndarray) -> float:
        angles = self._frequencies @ coords + self._phases
        return float(self._amplitudes @ np.cos(angles))

    def log_factor(self, chart: int, coords: np.ndarray) -> float:
        return float(np.log1p(self.eta * self.perturbation(coords)))

    def log_factor_gradient(self, chart: int, coords: np.ndarray) -> np.ndarray:
        angles = self._frequencies @ coords + self._phases
        factor = 1.0 + self.eta * float(self._amplitudes @ np.cos(angles))
        grad_g = -(self._amplitudes * np.sin(angles)) @ self._frequencies
        return self.eta * grad_g / factor

    def log_factor_hessian(self, chart: int, coords: np.ndarray) -> np.ndarray:
        angles = self._frequencies @ coords + self._phases
        factor = 1.0 + self.eta * float(self._amplitudes @ np.cos(angles))
        grad_g = -(self._amplitudes * np.sin(angles)) @ self._frequencies
        hess_g = -np.einsum("m,mi,mj->ij", self._amplitudes * np.cos(angles), self._frequencies, self._frequencies)
        return self.eta * hess_g / factor - self.eta**2 * np.outer(grad_g, grad_g) / factor**2

    def curvature_bound(self) -> float:
        """Analytic upper bound on |sectional curvature|"""
        weights = np.abs(self._amplitudes)
        first = float(weights @ np.linalg.norm(self._frequencies, axis=1))
        second = float(weights @ np.sum(self._frequencies**2, axis=1))
        laplacian = self.eta * second / (1 - self.eta) + (self.eta * first) ** 2 / (1 - self.eta) ** 2
        return (self.n - 1) * laplacian / ((1 - self.eta) ** 2 * self.scale**2)

    def injectivity_radius(self) -> float:
        shortest_loop = (1 - self.eta) * self.period * self.scale
        bound = self.curvature_bound()
        if bound <= 0:
            return shortest_loop / 2
        return min(shortest_loop / 2, np.pi / np.sqrt(bound))

    def exact_sectional_curvature(self, u: TangentAtPoint, v: TangentAtPoint) -> float:
        if self.n != 2:
            raise GeometryError("Closed-form curvature of a conformal torus needs dimension 2")
        return self.gaussian_curvature(u.base.chart, u.base.coords)

    def has_oracle(self, name: str) -> bool:
        return name in self.oracles and self.n == 2
