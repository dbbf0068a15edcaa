"""Graph of the quadratic function f(x) = 1/2 x^T H x over a single chart"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.exceptions import GeometryError
from src.manifolds.base import ManifoldModel
from src.manifolds.types import PointOnManifold, TangentAtPoint


@dataclass(frozen=True, kw_only=True)
class GraphSurface(ManifoldModel):
    """
    Hypersurface z = 1/2 x^T H x with the induced metric I + grad f grad f^T

    The model is sampled over the box [-extent, extent]^n; its connection
    gamma^k_ij = f_k H_ij / (1 + |grad f|^2) and derivatives are analytic.
    """

    hessian: Tuple[Tuple[float, ...], ...] = ((0.1, 0.0), (0.0, 0.05))
    extent: float = 4.0

    oracles = frozenset({"curvature"})

    def __post_init__(self):
        super().__post_init__()
        matrix = np.asarray(self.hessian, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Hessian must be a square matrix, got shape {matrix.shape}")
        if not np.allclose(matrix, matrix.T):
            raise ValueError("Hessian must be symmetric")
        if not 2 <= matrix.shape[0] <= 4:
            raise ValueError(f"Graph dimension must be in [2, 4], got {matrix.shape[0]}")
        object.__setattr__(self, "_matrix", matrix)

    @property
    def dimension(self) -> int:
        return self._matrix.shape[0]

    def gradient(self, coords: np.ndarray) -> np.ndarray:
        return self._matrix @ coords

    def base_metric(self, chart: int, coords: np.ndarray) -> np.ndarray:
        grad = self.gradient(coords)
        return np.eye(self.dimension) + np.outer(grad, grad)

    def metric_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        grad = self.gradient(coords)
        h = self._matrix
        derivatives = np.einsum("ik,j->kij", h, grad) + np.einsum("i,jk->kij", grad, h)
        return self.scale**2 * derivatives

    def christoffel_symbols(self, chart: int, coords: np.ndarray) -> np.ndarray:
        grad = self.gradient(coords)
        return np.einsum("k,ij->kij", grad, self._matrix) / (1.0 + float(grad @ grad))

    def christoffel_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        grad = self.gradient(coords)
        h = self._matrix
        denominator = 1.0 + float(grad @ grad)
        first = np.einsum("kl,ij->lkij", h, h) / denominator
        second = 2.0 * np.einsum("l,k,ij->lkij", h @ grad, grad, h) / denominator**2
        return first - second

    def injectivity_radius(self) -> float:
        eigenvalues = np.linalg.eigvalsh(self._matrix)
        products = [eigenvalues[i] * eigenvalues[j] for i in range(len(eigenvalues)) for j in range(i)]
        peak = max(products)
        if peak <= 0:
            return math.inf
        return math.pi / math.sqrt(peak) * self.scale

    def sample_points(self, rng: np.random.Generator, count: int) -> List[PointOnManifold]:
        coords = rng.uniform(-self.extent, self.extent, size=(count, self.dimension))
        return [PointOnManifold(0, row) for row in coords]

    def exact_sectional_curvature(self, u: TangentAtPoint, v: TangentAtPoint) -> float:
        if self.dimension != 2:
            raise GeometryError("Closed-form curvature of a graph surface needs dimension 2")
        grad = self.gradient(u.base.coords)
        return float(np.linalg.det(self._matrix) / (1.0 + float(grad @ grad)) ** 2 / self.scale**2)

    def has_oracle(self, name: str) -> bool:
        return name in self.oracles and self.dimension == 2

    def to_ambient(self, points: List[PointOnManifold]) -> np.ndarray:
        rows = [np.append(p.coords, 0.5 * p.coords @ self._matrix @ p.coords) for p in points]
        return np.array(rows) * self.scale

    def from_ambient(self, rows: np.ndarray) -> List[PointOnManifold]:
        return [PointOnManifold(0, row[: self.dimension] / self.scale) for row in np.atleast_2d(rows)]

    def candidate_pool(self, spacing: float, rng: np.random.Generator) -> np.ndarray:
        steepest = 1.0 + (np.linalg.norm(self._matrix, 2) * self.extent * math.sqrt(self.dimension)) ** 2
        step = spacing / (self.scale * math.sqrt(steepest))
        per_axis = max(1, math.ceil(2 * self.extent / step))
        shift = rng.uniform(0.0, 2 * self.extent / per_axis)
        ticks = -self.extent + shift + np.arange(per_axis) * (2 * self.extent / per_axis)
        grid = np.stack(np.meshgrid(*([ticks] * self.dimension), indexing="ij"), axis=-1).reshape(-1, self.dimension)
        return self.to_ambient([PointOnManifold(0, row) for row in grid])
