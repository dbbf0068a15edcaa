"""Orthonormal frames and random tangent vectors"""

import numpy as np
from scipy import linalg

from src.manifolds.base import ManifoldModel
from src.manifolds.types import PointOnManifold, TangentAtPoint


def orthonormal_frame(M: ManifoldModel, p: PointOnManifold) -> np.ndarray:
    """
    Gram-Schmidt orthonormalization of the chart coordinate frame at p

    Returns the upper-triangular matrix whose columns are the frame vectors:
    with g = K K^T (Cholesky) it is K^-T, so F^T g F = I.
    """
    factor = linalg.cholesky(M.metric_at(p), lower=True)
    return linalg.solve_triangular(factor, np.eye(M.dimension), lower=True, trans="T")


def random_unit_vector(M: ManifoldModel, p: PointOnManifold, rng: np.random.Generator) -> TangentAtPoint:
    """Tangent vector drawn uniformly from the unit sphere of the metric at p"""
    direction = rng.normal(size=M.dimension)
    direction /= np.linalg.norm(direction)
    return TangentAtPoint(p, orthonormal_frame(M, p) @ direction)


def random_orthogonal_unit_vector(
    M: ManifoldModel, p: PointOnManifold, other: TangentAtPoint, rng: np.random.Generator
) -> TangentAtPoint:
    """Unit vector at p orthogonal to ``other`` (uniform on that unit sphere)"""
    g = M.metric_at(p)
    along = other.components / np.sqrt(other.components @ g @ other.components)
    while True:
        candidate = random_unit_vector(M, p, rng).components
        candidate = candidate - (candidate @ g @ along) * along
        size = np.sqrt(candidate @ g @ candidate)
        if size > 1e-6:
            return TangentAtPoint(p, candidate / size)
