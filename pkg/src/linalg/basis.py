"""Bases, Gram matrices and distances of linear maps to isometries"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import ortho_group

from src.estimates.margin_report import MarginReport
from src.exceptions import ConvergenceError, GeometryError

logger = logging.getLogger(__name__)

ABS_TOL = 1e-12
MAX_CONDITION = 1e12


def _validated_metric(metric: Optional[np.ndarray], n: int) -> np.ndarray:
    if metric is None:
        return np.eye(n)
    metric = np.asarray(metric, dtype=float)
    if metric.shape != (n, n):
        raise GeometryError(f"Metric of shape {metric.shape} does not match dimension {n}")
    if not np.all(np.isfinite(metric)):
        raise GeometryError("Metric has non-finite entries")
    return metric


@dataclass(frozen=True, eq=False)
class Basis:
    """
    Ordered basis of an n-dimensional Euclidean space

    Rows of ``vectors`` are the basis vectors written in some coordinates;
    ``metric`` is the Gram matrix of the inner product in those coordinates
    (identity when omitted), so tangent-space bases carry the metric of
    their base point.
    """

    vectors: np.ndarray
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        n = vectors.shape[1]
        if vectors.shape != (n, n):
            raise GeometryError(f"A basis needs n vectors of length n, got shape {vectors.shape}")
        if n < 2:
            raise GeometryError(f"Basis dimension must be at least 2, got {n}")
        if not np.all(np.isfinite(vectors)):
            raise GeometryError("Basis has non-finite entries")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "metric", _validated_metric(self.metric, n))
        if np.linalg.det(gram_matrix(self)) <= 0.0:
            raise GeometryError("Basis vectors are linearly dependent")

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True, eq=False)
class LinearMap:
    """
    Linear map between two Euclidean spaces given in coordinates

    ``matrix`` sends source components to target components; the metrics
    are the Gram matrices of the source and target inner products.
    """

    matrix: np.ndarray
    source_metric: Optional[np.ndarray] = None
    target_metric: Optional[np.ndarray] = None

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if not np.all(np.isfinite(matrix)):
            raise GeometryError("Linear map has non-finite entries")
        rows, cols = matrix.shape
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "source_metric", _validated_metric(self.source_metric, cols))
        object.__setattr__(self, "target_metric", _validated_metric(self.target_metric, rows))

    def __call__(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(vector, dtype=float)

    def orthonormal_matrix(self) -> np.ndarray:
        """Matrix of the map in orthonormal frames of the source and target"""
        source_factor = linalg.cholesky(self.source_metric, lower=True)
        target_factor = linalg.cholesky(self.target_metric, lower=True)
        source_inverse = linalg.solve_triangular(
            source_factor, np.eye(source_factor.shape[0]), lower=True, trans="T"
        )
        return target_factor.T @ self.matrix @ source_inverse

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.orthonormal_matrix(), compute_uv=False)


def gram_matrix(b: Basis) -> np.ndarray:
    """
    Gram matrix of a basis

    Args:
        b: Basis

    Returns:
        Symmetric n x n matrix with entries <b_i, b_j>
    """
    gram = b.vectors @ b.metric @ b.vectors.T
    return 0.5 * (gram + gram.T)


def eps_orthonormality(b: Basis) -> float:
    """Largest deviation max_ij |<b_i, b_j> - delta_ij| of the Gram matrix from the identity"""
    return float(np.max(np.abs(gram_matrix(b) - np.eye(b.dimension))))


def operator_norm(L: LinearMap) -> float:
    """Operator norm with respect to the source and target inner products"""
    return float(np.max(L.singular_values()))


def distance_to_isometry(L: LinearMap) -> float:
    """
    Distance min_Q ||L - Q|| over isometries Q in operator norm

    The polar decomposition gives the optimum max_i |sigma_i - 1| over the
    singular values of L; zero singular values are allowed.

    Args:
        L: Square linear map

    Returns:
        Distance to the nearest isometry
    """
    rows, cols = L.matrix.shape
    if rows != cols:
        raise GeometryError(f"Distance to isometry needs a square map, got {L.matrix.shape}")
    sigma = L.singular_values()
    return float(np.max(np.abs(sigma - 1.0)))


def linear_extension(E: Basis, F: Basis) -> LinearMap:
    """
    The unique linear map L with L(E_k) = F_k for every k

    Args:
        E: Source basis
        F: Target basis (same dimension)

    Returns:
        LinearMap from the space of E to the space of F
    """
    if E.dimension != F.dimension:
        raise GeometryError(f"Bases of different dimension: {E.dimension} vs {F.dimension}")
    if np.linalg.cond(E.vectors) > MAX_CONDITION:
        raise GeometryError("Source basis is singular")
    matrix = linalg.solve(E.vectors, F.vectors).T
    return LinearMap(matrix=matrix, source_metric=E.metric, target_metric=F.metric)


def _random_eps_orthonormal(rng: np.random.Generator, n: int, eps: float, max_retries: int) -> Basis:
    amplitude = rng.uniform(0.0, eps)
    for _ in range(max_retries):
        rotation = ortho_group.rvs(n, random_state=rng)
        candidate = rotation + rng.uniform(-amplitude, amplitude, size=(n, n))
        try:
            basis = Basis(candidate)
        except GeometryError:
            amplitude *= 0.5
            continue
        if eps_orthonormality(basis) < eps:
            return basis
        amplitude *= 0.5
    raise ConvergenceError(f"No {eps}-orthonormal basis generated after {max_retries} retries")


def _gram_defect(L: np.ndarray, xi: Basis) -> float:
    images = xi.vectors @ L.T
    return float(np.max(np.abs(images @ images.T - gram_matrix(xi))))


def _random_near_isometry(
    rng: np.random.Generator, xi: Basis, delta: float, max_retries: int
) -> Tuple[np.ndarray, float]:
    n = xi.dimension
    amplitude = rng.uniform(0.0, delta)
    for _ in range(max_retries):
        rotation = ortho_group.rvs(n, random_state=rng)
        candidate = rotation @ (np.eye(n) + rng.uniform(-amplitude, amplitude, size=(n, n)))
        if _gram_defect(candidate, xi) < delta:
            return candidate, amplitude
        amplitude *= 0.5
    raise ConvergenceError(f"No operator with Gram defect below {delta} after {max_retries} retries")


def check_lemma_e_orthonormal(
    trials: int,
    n: int,
    eps: float,
    delta: float,
    seed: int,
    search_steps: int = 0,
    max_retries: int = 1000,
) -> MarginReport:
    """
    Check the two bounds for operators on eps-orthonormal bases

    For each trial an eps-orthonormal basis xi is drawn and
      * an operator with ||L xi_i|| < delta, checked against ||L|| < 2 sqrt(n) delta;
      * an operator with |<L xi_i, L xi_j> - <xi_i, xi_j>| < delta, checked
        against distance_to_isometry(L) < 8 n sqrt(n) delta.
    With ``search_steps`` > 0 the second operator is pushed towards a larger
    isometry defect by random search while keeping the hypothesis.

    Args:
        trials: Number of random instances
        n: Dimension
        eps: Orthonormality threshold, must be below 1/(2n)
        delta: Operator hypothesis threshold, 8 n sqrt(n) delta must be below 1
        seed: Seed of the instance generator
        search_steps: Random-search steps per trial for adversarial operators
        max_retries: Retries allowed when drawing instances

    Returns:
        MarginReport with the worst ratio over both bounds
    """
    if eps >= 1.0 / (2 * n):
        raise ValueError(f"eps={eps} must be below 1/(2n)={1.0 / (2 * n)}")
    isometry_bound = 8 * n * math.sqrt(n) * delta
    norm_bound = 2 * math.sqrt(n) * delta
    if isometry_bound >= 1.0:
        raise ValueError(f"8 n sqrt(n) delta = {isometry_bound} must be below 1")

    ratios: List[float] = []
    instances: List[Dict[str, Any]] = []
    worst_norm = 0.0
    worst_isometry = 0.0
    for trial, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(child)
        xi = _random_eps_orthonormal(rng, n, eps, max_retries)

        small = rng.normal(size=(n, n))
        largest_image = np.max(np.linalg.norm(xi.vectors @ small.T, axis=1))
        small *= delta * rng.uniform(0.5, 1.0) * (1.0 - 1e-12) / largest_image
        norm_ratio = operator_norm(LinearMap(small)) / norm_bound

        operator, amplitude = _random_near_isometry(rng, xi, delta, max_retries)
        defect = distance_to_isometry(LinearMap(operator))
        for _ in range(search_steps):
            step = operator @ (np.eye(n) + rng.uniform(-amplitude / 4, amplitude / 4, size=(n, n)))
            if _gram_defect(step, xi) >= delta:
                continue
            step_defect = distance_to_isometry(LinearMap(step))
            if step_defect > defect:
                operator, defect = step, step_defect
        isometry_ratio = defect / isometry_bound

        worst_norm = max(worst_norm, norm_ratio)
        worst_isometry = max(worst_isometry, isometry_ratio)
        ratios.append(max(norm_ratio, isometry_ratio))
        instances.append(
            {
                "trial": trial,
                "eps_orthonormality": eps_orthonormality(xi),
                "norm_ratio": norm_ratio,
                "isometry_ratio": isometry_ratio,
            }
        )

    report = MarginReport.from_trials(
        "e-orthonormal-operator",
        ratios,
        instances,
        details={
            "n": n,
            "eps": eps,
            "delta": delta,
            "worst_norm_ratio": worst_norm,
            "worst_isometry_ratio": worst_isometry,
        },
    )
    logger.info(f"Operator bounds on {trials} instances (n={n}): worst ratio {report.worst_ratio:.4f}")
    return report
