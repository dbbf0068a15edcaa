"""Chart-based Riemannian model manifolds"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, FrozenSet, List, Optional, Tuple

import numpy as np

from src.exceptions import GeometryError
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

METRIC_STEP = 1e-5
CHRISTOFFEL_STEP = 1e-4


@dataclass(frozen=True, kw_only=True)
class ManifoldModel(ABC):
    """
    A compact Riemannian manifold described on one or more coordinate charts

    Subclasses give the unscaled metric ``base_metric``; the working metric is
    ``scale**2 * base_metric`` so that rescaling multiplies distances by
    ``scale`` and curvatures by ``scale**-2``. Coordinates never change under
    rescaling.

    Analytic ground truth (exact exp, log, distance, transport, curvature) is
    advertised through ``oracles``; with ``prefer_oracles`` the geodesic
    toolkit uses them instead of integrating.
    """

    scale: float = 1.0
    prefer_oracles: bool = False

    oracles: ClassVar[FrozenSet[str]] = frozenset()

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"Scale must be positive, got {self.scale}")

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Dimension n of the manifold"""

    @property
    def name(self) -> str:
        return type(self).__name__

    @property
    def chart_count(self) -> int:
        return 1

    @abstractmethod
    def base_metric(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """Unscaled metric tensor at chart coordinates"""

    @abstractmethod
    def injectivity_radius(self) -> float:
        """Lower estimate of the injectivity radius from model metadata"""

    @abstractmethod
    def sample_points(self, rng: np.random.Generator, count: int) -> List[PointOnManifold]:
        """Seeded random points spread over the whole manifold"""

    def metric(self, chart: int, coords: np.ndarray) -> np.ndarray:
        return self.scale**2 * self.base_metric(chart, np.asarray(coords, dtype=float))

    def metric_at(self, p: PointOnManifold) -> np.ndarray:
        return self.metric(p.chart, p.coords)

    def metric_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """
        Partial derivatives dg[k, i, j] = d_k g_ij of the working metric

        Central differences with step 1e-5 unless a subclass is analytic.
        """
        coords = np.asarray(coords, dtype=float)
        n = coords.shape[0]
        derivatives = np.empty((n, n, n))
        for k in range(n):
            step = np.zeros(n)
            step[k] = METRIC_STEP
            derivatives[k] = (self.metric(chart, coords + step) - self.metric(chart, coords - step)) / (
                2 * METRIC_STEP
            )
        return derivatives

    def christoffel_symbols(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """
        Christoffel symbols gamma[k, i, j] of the Levi-Civita connection

        gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
        """
        g = self.metric(chart, coords)
        dg = self.metric_derivatives(chart, coords)
        g_inv = np.linalg.inv(g)
        # first kind: lower[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
        lower = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
        gamma = np.einsum("kl,lij->kij", g_inv, lower)
        return 0.5 * (gamma + np.swapaxes(gamma, 1, 2))

    def christoffel_derivatives(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """Derivatives dgamma[l, k, i, j] = d_l gamma^k_ij by central differences (step 1e-4)"""
        coords = np.asarray(coords, dtype=float)
        n = coords.shape[0]
        derivatives = np.empty((n, n, n, n))
        for l in range(n):
            step = np.zeros(n)
            step[l] = CHRISTOFFEL_STEP
            derivatives[l] = (
                self.christoffel_symbols(chart, coords + step) - self.christoffel_symbols(chart, coords - step)
            ) / (2 * CHRISTOFFEL_STEP)
        return derivatives

    def riemann(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """
        Riemann tensor R[l, i, j, k] with R(X, Y)Z = R^l_ijk X^i Y^j Z^k e_l

        R^l_ijk = d_i gamma^l_jk - d_j gamma^l_ik + gamma^l_im gamma^m_jk - gamma^l_jm gamma^m_ik
        """
        gamma = self.christoffel_symbols(chart, coords)
        dgamma = self.christoffel_derivatives(chart, coords)
        return (
            np.einsum("iljk->lijk", dgamma)
            - np.einsum("jlik->lijk", dgamma)
            + np.einsum("lim,mjk->lijk", gamma, gamma)
            - np.einsum("ljm,mik->lijk", gamma, gamma)
        )

    def chart_switch(self, chart: int, coords: np.ndarray) -> Optional[int]:
        """Chart to move to when coordinates leave the comfortable part of ``chart``"""
        return None

    def chart_transition(
        self, source: int, target: int, coords: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinates in ``target`` and the Jacobian d(target)/d(source) at ``coords``"""
        if source != target:
            raise GeometryError(f"{self.name} has no chart {target}")
        return np.asarray(coords, dtype=float), np.eye(self.dimension)

    def wrap(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """Canonical representative of periodic coordinates"""
        return np.asarray(coords, dtype=float)

    def representative(self, coords: np.ndarray, near: np.ndarray) -> np.ndarray:
        """Representative of ``coords`` closest to ``near`` (periodic models)"""
        return np.asarray(coords, dtype=float)

    def canonicalize(self, p: PointOnManifold) -> PointOnManifold:
        chart, coords = p.chart, p.coords
        target = self.chart_switch(chart, coords)
        if target is not None:
            coords, _ = self.chart_transition(chart, target, coords)
            chart = target
        return PointOnManifold(chart, self.wrap(chart, coords))

    def coordinates_in_chart(self, p: PointOnManifold, chart: int) -> np.ndarray:
        if p.chart == chart:
            return p.coords
        coords, _ = self.chart_transition(p.chart, chart, p.coords)
        return coords

    def transform_vector(self, v: TangentAtPoint, chart: int) -> TangentAtPoint:
        """Express a tangent vector in the frame of another chart"""
        if v.base.chart == chart:
            return v
        coords, jacobian = self.chart_transition(v.base.chart, chart, v.base.coords)
        return TangentAtPoint(PointOnManifold(chart, coords), jacobian @ v.components)

    def inner(self, u: TangentAtPoint, v: TangentAtPoint) -> float:
        if v.base.chart != u.base.chart:
            v = self.transform_vector(v, u.base.chart)
        return float(u.components @ self.metric_at(u.base) @ v.components)

    def norm(self, v: TangentAtPoint) -> float:
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def has_oracle(self, name: str) -> bool:
        return name in self.oracles

    def use_oracle(self, name: str) -> bool:
        return self.prefer_oracles and self.has_oracle(name)

    # Analytic ground truth, available when listed in ``oracles``.

    def exact_exp(self, v: TangentAtPoint) -> PointOnManifold:
        raise NotImplementedError(f"{self.name} has no exact exponential map")

    def exact_log(self, p: PointOnManifold, q: PointOnManifold) -> TangentAtPoint:
        raise NotImplementedError(f"{self.name} has no exact logarithm map")

    def exact_distance(self, p: PointOnManifold, q: PointOnManifold) -> float:
        return self.norm(self.exact_log(p, q))

    def exact_transport(self, p: PointOnManifold, q: PointOnManifold, v: TangentAtPoint) -> TangentAtPoint:
        raise NotImplementedError(f"{self.name} has no exact parallel transport")

    def exact_sectional_curvature(self, u: TangentAtPoint, v: TangentAtPoint) -> float:
        raise NotImplementedError(f"{self.name} has no exact curvature")

    def log_guess(self, p: PointOnManifold, q: PointOnManifold) -> Optional[TangentAtPoint]:
        """Starting velocity for shooting from p to q when q is far in the chart of p"""
        return None

    # Ambient representation used by spatial indexes and net construction.

    def to_ambient(self, points: List[PointOnManifold]) -> np.ndarray:
        """Rows of ambient coordinates whose Euclidean (or periodic) distance proxies geodesic distance"""
        return np.array([self.wrap(p.chart, p.coords) * self.scale for p in points])

    def from_ambient(self, rows: np.ndarray) -> List[PointOnManifold]:
        return [self.canonicalize(PointOnManifold(0, row / self.scale)) for row in np.atleast_2d(rows)]

    def ambient_boxsize(self) -> Optional[np.ndarray]:
        """Periods of the ambient coordinates, None when not periodic"""
        return None

    def ambient_to_distance(self, ambient: np.ndarray) -> np.ndarray:
        """Convert ambient distances into (proxy) geodesic distances"""
        return np.asarray(ambient, dtype=float)

    def distance_to_ambient(self, distance: np.ndarray) -> np.ndarray:
        """Ambient radius containing every point within a geodesic distance"""
        return np.asarray(distance, dtype=float)

    @property
    def ambient_distance_exact(self) -> bool:
        """Whether ambient_to_distance reproduces geodesic distance exactly"""
        return False

    def candidate_pool(self, spacing: float, rng: np.random.Generator) -> np.ndarray:
        """Ambient rows of a candidate pool with spacing at most ``spacing``"""
        raise NotImplementedError(f"{self.name} has no candidate pool for nets")

    def covering_candidates(self, ambient_points: np.ndarray) -> Optional[np.ndarray]:
        """Voronoi vertices of a point set, the candidates for its farthest points"""
        return None
