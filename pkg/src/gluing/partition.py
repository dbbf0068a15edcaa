"""Smooth partition of unity subordinate to the 2 epsilon balls around a net"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, computed_field

from src.exceptions import GeometryError
from src.geodesics.bvp import log_map
from src.manifolds.types import PointOnManifold
from src.nets.net_builder import Net

logger = logging.getLogger(__name__)

PLATEAU = 1.0
SUPPORT = 2.0
GRADIENT_STEP = 1e-5
# exp(-1/t) underflows to zero for t below about 1/745
UNDERFLOW_MARGIN = 1.0 / 700.0


def _flat(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)


def bump(r):
    """
    Psi(r) = f(2 - r) / (f(2 - r) + f(r - 1)) with f(t) = exp(-1/t) for t > 0, else 0

    Smooth and nonincreasing, 1 on [0, 1], 0 on [2, inf), and symmetric
    about r = 1.5 in the sense Psi(1.5 + s) = 1 - Psi(1.5 - s).
    """
    r_array = np.asarray(r, dtype=float)
    if np.any(r_array < 0):
        raise ValueError(f"bump is defined for r >= 0, got {r}")
    upper = _flat(SUPPORT - r_array)
    lower = _flat(r_array - PLATEAU)
    value = upper / (upper + lower)
    return float(value) if np.ndim(value) == 0 else value


def bump_derivative(r):
    """Closed-form Psi'(r); zero outside (1, 2)"""
    r_array = np.asarray(r, dtype=float)
    upper = _flat(SUPPORT - r_array)
    lower = _flat(r_array - PLATEAU)
    inside = (r_array > PLATEAU) & (r_array < SUPPORT)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_upper = np.where(inside, -upper / np.where(inside, (SUPPORT - r_array) ** 2, 1.0), 0.0)
        d_lower = np.where(inside, lower / np.where(inside, (r_array - PLATEAU) ** 2, 1.0), 0.0)
        total = upper + lower
        value = np.where(inside, (d_upper * lower - upper * d_lower) / np.where(inside, total**2, 1.0), 0.0)
    value = np.nan_to_num(value, nan=0.0)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True, eq=False)
class WeightEvaluation:
    """Nonzero weights at a point and their differentials (covector components in the chart of x)"""

    point: PointOnManifold
    indices: Tuple[int, ...]
    weights: np.ndarray
    gradients: np.ndarray
    raw: np.ndarray

    def as_pairs(self) -> List[Tuple[int, float]]:
        return [(i, float(w)) for i, w in zip(self.indices, self.weights)]

    def gradient(self, i: int) -> np.ndarray:
        if i not in self.indices:
            return np.zeros(self.point.dimension)
        return self.gradients[self.indices.index(i)]


class PartitionOfUnity:
    """
    psi_i = psi~_i / sum_k psi~_k with psi~_i(x) = Psi(dist(x, v_i) / epsilon)

    Support queries go through the spatial tree of the net; only net points
    closer than 2 epsilon contribute.
    """

    def __init__(self, net: Net, epsilon: Optional[float] = None):
        self.net = net
        self.epsilon = float(net.epsilon if epsilon is None else epsilon)
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def model(self):
        return self.net.model

    def evaluate(self, x: PointOnManifold, with_gradients: bool = True) -> WeightEvaluation:
        """
        Weights and, optionally, their gradients at x

        Raises:
            GeometryError: if no net point lies within 2 epsilon of x
        """
        M = self.model
        x = M.canonicalize(x)
        support = self.net.within(x, SUPPORT * self.epsilon)
        indices: List[int] = []
        raw: List[float] = []
        raw_gradients: List[np.ndarray] = []
        g = M.metric_at(x) if with_gradients else None
        for i, d in support:
            value = bump(d / self.epsilon)
            if value <= 0.0:
                continue
            indices.append(i)
            raw.append(value)
            if not with_gradients:
                continue
            slope = bump_derivative(d / self.epsilon)
            if slope == 0.0:
                raw_gradients.append(np.zeros(M.dimension))
                continue
            toward = log_map(M, x, self.net.points[i]).components
            length = math.sqrt(float(toward @ g @ toward))
            # d dist(., v_i) = -g log_x v_i / |log_x v_i|
            raw_gradients.append(-(g @ toward) / length * slope / self.epsilon)
        if not indices:
            raise GeometryError(f"No net point within {SUPPORT * self.epsilon} of {x}: the net does not cover")

        raw_array = np.array(raw)
        total = float(np.sum(raw_array))
        weights = raw_array / total
        if with_gradients:
            raw_grad = np.array(raw_gradients)
            gradients = (raw_grad - weights[:, None] * np.sum(raw_grad, axis=0)) / total
        else:
            gradients = np.zeros((len(indices), M.dimension))
        return WeightEvaluation(point=x, indices=tuple(indices), weights=weights, gradients=gradients, raw=raw_array)

    def weights(self, x: PointOnManifold) -> List[Tuple[int, float]]:
        return self.evaluate(x, with_gradients=False).as_pairs()

    def weight_gradient(self, x: PointOnManifold, i: int) -> np.ndarray:
        return self.evaluate(x).gradient(i)

    def to_dict(self) -> Dict[str, Any]:
        return {"epsilon": self.epsilon, "plateau": PLATEAU, "support": SUPPORT, "profile": "exp(-1/t) transition"}


def weights(x: PointOnManifold, pou: PartitionOfUnity) -> List[Tuple[int, float]]:
    """Sparse (index, psi_i(x)) list, by index, over net points within 2 epsilon"""
    return pou.weights(x)


def weight_gradient(x: PointOnManifold, pou: PartitionOfUnity, i: int) -> np.ndarray:
    """Covector components of d_x psi_i in the chart of x"""
    return pou.weight_gradient(x, i)


def finite_difference_gradients(
    pou: PartitionOfUnity, x: PointOnManifold, step: Optional[float] = None
) -> Dict[int, np.ndarray]:
    """Central differences of every weight along the chart coordinates of x"""
    M = pou.model
    x = M.canonicalize(x)
    h = GRADIENT_STEP * pou.epsilon if step is None else step
    gradients: Dict[int, np.ndarray] = {}
    for k in range(M.dimension):
        shift = np.zeros(M.dimension)
        shift[k] = h
        forward = dict(pou.weights(M.canonicalize(PointOnManifold(x.chart, x.coords + shift))))
        backward = dict(pou.weights(M.canonicalize(PointOnManifold(x.chart, x.coords - shift))))
        for i in set(forward) | set(backward):
            difference = forward.get(i, 0.0) - backward.get(i, 0.0)
            gradients.setdefault(i, np.zeros(M.dimension))[k] = difference / (2 * h)
    return gradients


class PartitionAudit(BaseModel):
    """Invariants of a partition of unity measured on seeded probes"""

    probes: int
    epsilon: float
    max_sum_error: float
    min_weight: float
    max_weight: float
    support_violations: int
    plateau_violations: int
    max_overlap: int
    overlap_bound: int
    max_gradient_sum: float
    max_gradient_error: float
    max_gradient_norm_times_epsilon: float

    @computed_field  # type: ignore[misc]
    @property
    def overlap_exceeded(self) -> bool:
        return self.max_overlap > self.overlap_bound

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return (
            self.max_sum_error <= 1e-12
            and self.min_weight >= 0.0
            and self.max_weight <= 1.0 + 1e-12
            and self.support_violations == 0
            and self.plateau_violations == 0
            and self.max_gradient_sum <= 1e-10
            and self.max_gradient_error <= 1e-4
        )


def check_partition(
    pou: PartitionOfUnity, probes: int, seed: int, gradient_probes: Optional[int] = None
) -> PartitionAudit:
    """
    Audit sum, range, support, plateau, overlap, gradient sum and gradient accuracy

    Gradient errors are the largest central-difference mismatch (step
    1e-5 epsilon) relative to 1/epsilon, the natural size of the gradients.
    Exceeding the 7^n overlap bound is reported but does not fail the audit.

    Args:
        pou: Partition of unity
        probes: Number of seeded probe points
        seed: Probe seed
        gradient_probes: Probes also checked by finite differences (all by default)

    Returns:
        PartitionAudit
    """
    M = pou.model
    rng = np.random.default_rng(seed)
    samples = M.sample_points(rng, probes)
    gradient_probes = probes if gradient_probes is None else min(gradient_probes, probes)
    eps = pou.epsilon
    sum_error = grad_sum = grad_error = grad_norm = 0.0
    min_w, max_w = math.inf, -math.inf
    support_bad = plateau_bad = overlap = 0
    for k, x in enumerate(samples):
        result = pou.evaluate(x)
        sum_error = max(sum_error, abs(float(np.sum(result.weights)) - 1.0))
        min_w = min(min_w, float(np.min(result.weights)))
        max_w = max(max_w, float(np.max(result.weights)))
        overlap = max(overlap, len(result.indices))
        if not np.any(result.raw == 1.0):
            plateau_bad += 1
        active = set(result.indices)
        for i, d in pou.net.within(result.point, SUPPORT * eps * 1.5):
            if (i in active) != (d < SUPPORT * eps) and d < SUPPORT * eps * (1 - UNDERFLOW_MARGIN):
                support_bad += 1
        grad_sum = max(grad_sum, float(np.max(np.abs(np.sum(result.gradients, axis=0)))))
        inverse = np.linalg.inv(M.metric_at(result.point))
        for gradient in result.gradients:
            grad_norm = max(grad_norm, math.sqrt(max(float(gradient @ inverse @ gradient), 0.0)) * eps)
        if k < gradient_probes:
            numeric = finite_difference_gradients(pou, result.point)
            for i in active | set(numeric):
                mismatch = float(np.max(np.abs(result.gradient(i) - numeric.get(i, 0.0))))
                grad_error = max(grad_error, mismatch * eps)
    audit = PartitionAudit(
        probes=probes,
        epsilon=eps,
        max_sum_error=sum_error,
        min_weight=min_w,
        max_weight=max_w,
        support_violations=support_bad,
        plateau_violations=plateau_bad,
        max_overlap=overlap,
        overlap_bound=7**M.dimension,
        max_gradient_sum=grad_sum,
        max_gradient_error=grad_error,
        max_gradient_norm_times_epsilon=grad_norm,
    )
    if audit.overlap_exceeded:
        logger.warning(f"Partition overlap {audit.max_overlap} exceeds {audit.overlap_bound}")
    logger.info(
        f"Partition audit over {probes} probes: overlap {overlap}, gradient error {grad_error:.3g}, "
        f"max |d psi| epsilon {grad_norm:.4g}"
    )
    return audit
