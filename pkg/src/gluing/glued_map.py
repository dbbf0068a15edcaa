"""The glued map h(x): weighted center of mass of the chart images phi_i(x)"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from src.charts.atlas import ChartSet
from src.charts.local_chart import apply_chart, chart_with_differential
from src.exceptions import ConvergenceError, GeometryError, KarcherAssertionError
from src.geodesics.bvp import MAX_CONDITION, dexp_matrix, log_map
from src.gluing.partition import PartitionOfUnity
from src.linalg.basis import LinearMap
from src.manifolds.base import ManifoldModel
from src.manifolds.core import exp_map
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-14
DIFFERENTIAL_STEP = 1e-4
HESSIAN_STEP = 1e-3


@dataclass(eq=False)
class GluedMap:
    """
    h(x) = argmin_y Phi(x, y), Phi(x, y) = 1/2 sum_i psi_i(x) dist(phi_i(x), y)^2

    ``tolerance`` is the Karcher update tolerance (max(1e-12, 1e-8 delta)
    when unset); ``closeness_constant`` is c in dist(h(x), phi_i(x)) < c delta.
    """

    charts: ChartSet
    partition: PartitionOfUnity
    tolerance: Optional[float] = None
    max_iterations: int = 100
    closeness_constant: float = 50.0
    assert_closeness: bool = True

    def __post_init__(self):
        if self.charts.net is not self.partition.net:
            raise ValueError("The chart set and the partition of unity must share the net")

    @property
    def source(self) -> ManifoldModel:
        return self.charts.source

    @property
    def target(self) -> ManifoldModel:
        return self.charts.target

    @property
    def delta(self) -> float:
        return self.charts.delta

    @property
    def update_tolerance(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return max(1e-12, 1e-8 * self.delta)

    def __call__(self, x: PointOnManifold) -> PointOnManifold:
        return karcher_mean(self, x)


@dataclass(frozen=True, eq=False)
class ActiveTerms:
    """Charts with psi_i(x) > 0: weights, weight differentials, images and chart differentials"""

    x: PointOnManifold
    indices: Tuple[int, ...]
    weights: np.ndarray
    gradients: np.ndarray
    images: List[PointOnManifold]
    differentials: Optional[List[LinearMap]] = None


def active_terms(gm: GluedMap, x: PointOnManifold, with_differentials: bool = False) -> ActiveTerms:
    evaluation = gm.partition.evaluate(x, with_gradients=with_differentials)
    x = evaluation.point
    images: List[PointOnManifold] = []
    differentials: List[LinearMap] = []
    for i in evaluation.indices:
        chart = gm.charts.chart(i)
        if with_differentials:
            image, differential = chart_with_differential(chart, x)
            differentials.append(differential)
        else:
            image = apply_chart(chart, x)
        images.append(image)
    return ActiveTerms(
        x=x,
        indices=evaluation.indices,
        weights=evaluation.weights,
        gradients=evaluation.gradients,
        images=images,
        differentials=differentials if with_differentials else None,
    )


def phi_objective(gm: GluedMap, x: PointOnManifold, y: PointOnManifold, terms: Optional[ActiveTerms] = None) -> float:
    """1/2 sum_i psi_i(x) dist(phi_i(x), y)^2 over the charts with psi_i(x) > 0"""
    terms = active_terms(gm, x) if terms is None else terms
    W = gm.target
    total = 0.0
    for weight, image in zip(terms.weights, terms.images):
        a = log_map(W, image, y)
        total += 0.5 * float(weight) * W.norm(a) ** 2
    return total


@dataclass(frozen=True, eq=False)
class KarcherResult:
    x: PointOnManifold
    point: PointOnManifold
    iterations: int
    update_norm: float
    objective: float
    objective_trace: Tuple[float, ...]
    active: int
    image_distances: np.ndarray
    monotone: bool = True

    @property
    def gradient_norm(self) -> float:
        # the Riemannian gradient of Phi(x, .) at the result is minus the last update
        return self.update_norm

    @property
    def max_image_distance(self) -> float:
        return float(np.max(self.image_distances))


def karcher_solve(gm: GluedMap, x: PointOnManifold, terms: Optional[ActiveTerms] = None) -> KarcherResult:
    """
    Fixed-point iteration y <- exp_y(sum_i psi_i(x) log_y phi_i(x))

    Starts at phi_i0(x) for the largest weight (lowest index on ties) and
    stops when the update norm is at most the tolerance of ``gm``.

    Raises:
        ConvergenceError: no convergence within ``gm.max_iterations``
        KarcherAssertionError: the result is not within c delta of every phi_i(x)
    """
    terms = active_terms(gm, x) if terms is None else terms
    W = gm.target
    tolerance = gm.update_tolerance
    y = terms.images[int(np.argmax(terms.weights))]
    trace: List[float] = []
    monotone = True
    for iteration in range(1, gm.max_iterations + 1):
        logs = np.array([log_map(W, y, image).components for image in terms.images])
        g = W.metric_at(y)
        distances = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", logs, g, logs), 0.0))
        objective = 0.5 * float(np.dot(terms.weights, distances**2))
        if trace and objective > trace[-1] + MONOTONE_SLACK:
            monotone = False
            logger.warning(f"Karcher objective increased at {terms.x}: {trace[-1]:.17g} -> {objective:.17g}")
        trace.append(objective)
        step = terms.weights @ logs
        size = math.sqrt(max(float(step @ g @ step), 0.0))
        if size <= tolerance:
            break
        y = exp_map(W, y, TangentAtPoint(y, step))
    else:
        raise ConvergenceError(f"Center of mass at {terms.x} did not converge in {gm.max_iterations} iterations")

    result = KarcherResult(
        x=terms.x,
        point=y,
        iterations=iteration,
        update_norm=size,
        objective=objective,
        objective_trace=tuple(trace),
        active=len(terms.indices),
        image_distances=distances,
        monotone=monotone,
    )
    bound = gm.closeness_constant * gm.delta
    if gm.assert_closeness and result.max_image_distance >= bound:
        raise KarcherAssertionError(
            f"Center of mass at {terms.x} is {result.max_image_distance:.6g} from a chart image, bound {bound:.6g}",
            diagnostics={
                "x": terms.x.to_dict(),
                "point": y.to_dict(),
                "charts": list(terms.indices),
                "distances": distances.tolist(),
                "bound": bound,
            },
        )
    return result


def karcher_mean(gm: GluedMap, x: PointOnManifold) -> PointOnManifold:
    """h(x), the minimizer of Phi(x, .) near the chart images"""
    return karcher_solve(gm, x).point


@dataclass(frozen=True, eq=False)
class HessianPair:
    """
    Second derivatives of Phi at (x, y) as matrices in the chart frames

    ``d2_star`` is the form on T_yW x T_yW; ``d2_star_star`` has rows indexed
    by T_yW and columns by T_xV.
    """

    x: PointOnManifold
    y: PointOnManifold
    d2_star: np.ndarray
    d2_star_star: np.ndarray
    metric_x: np.ndarray
    metric_y: np.ndarray

    @property
    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.d2_star - self.d2_star.T)))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of d2_star relative to the metric at y"""
        symmetric = 0.5 * (self.d2_star + self.d2_star.T)
        return linalg.eigh(symmetric, self.metric_y, eigvals_only=True)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.eigenvalues()))

    def differential(self, sign: float = -1.0) -> LinearMap:
        """sign * d2_star^-1 d2_star_star as a map T_xV -> T_yW"""
        if np.linalg.cond(self.d2_star) > MAX_CONDITION:
            raise GeometryError(f"Singular Hessian of Phi at {self.y}")
        matrix = sign * np.linalg.solve(self.d2_star, self.d2_star_star)
        return LinearMap(matrix, self.metric_x, self.metric_y)

    def pairing_map(self) -> LinearMap:
        """-g_y^-1 d2_star_star, close to an isometry T_xV -> T_yW"""
        return LinearMap(-np.linalg.solve(self.metric_y, self.d2_star_star), self.metric_x, self.metric_y)


def hessians_at(
    gm: GluedMap, x: PointOnManifold, y: Optional[PointOnManifold] = None, terms: Optional[ActiveTerms] = None
) -> HessianPair:
    """
    Hessian blocks of Phi from boundary-value Jacobi fields

    For each active chart, z_i = phi_i(x), and the geodesic t -> exp_y(t a_i),
    a_i = log_y z_i, has propagators J(1) = A J(0) + B J'(0). Then for
    f_i = 1/2 dist(z_i, .)^2:
        Hess_y f_i = g_y B^-1 A,  mixed (y, z_i) block = -g_y B^-1,
    and
        d2_star = sum psi_i g_y B_i^-1 A_i
        d2_star_star = sum (-g_y a_i) (x) d psi_i + sum psi_i (-g_y B_i^-1) d_x phi_i.

    Raises:
        GeometryError: if some B_i is singular (conjugate points)
    """
    if terms is None or terms.differentials is None:
        terms = active_terms(gm, x, with_differentials=True)
    W = gm.target
    n = W.dimension
    y = karcher_mean(gm, terms.x) if y is None else W.canonicalize(y)
    g = W.metric_at(y)
    d2_star = np.zeros((n, n))
    d2_star_star = np.zeros((n, gm.source.dimension))
    for weight, gradient, image, differential in zip(terms.weights, terms.gradients, terms.images, terms.differentials):
        a = log_map(W, y, image)
        dphi = differential.matrix
        if np.any(a.components):
            propagators = dexp_matrix(W, y, a)
            A, B = propagators.A, propagators.B
            if propagators.end.chart != image.chart:
                _, frame = W.chart_transition(image.chart, propagators.end.chart, image.coords)
                dphi = frame @ dphi
        else:
            A = B = np.eye(n)
        if np.linalg.cond(B) > MAX_CONDITION:
            raise GeometryError(f"Conjugate points between {y} and {image}")
        B_inverse = np.linalg.inv(B)
        d2_star += weight * g @ B_inverse @ A
        d2_star_star += np.outer(-(g @ a.components), gradient) - weight * g @ B_inverse @ dphi
    return HessianPair(
        x=terms.x,
        y=y,
        d2_star=d2_star,
        d2_star_star=d2_star_star,
        metric_x=gm.source.metric_at(terms.x),
        metric_y=g,
    )


def glued_differential(gm: GluedMap, x: PointOnManifold, hessians: Optional[HessianPair] = None) -> LinearMap:
    """
    d_x h = -(d2_star)^-1 d2_star_star

    Differentiating the first-order condition d_y Phi(x, h(x)) = 0 gives the
    minus sign; audit_differentials confirms it against finite differences.
    """
    hessians = hessians_at(gm, x) if hessians is None else hessians
    return hessians.differential(-1.0)


def _shifted(M: ManifoldModel, p: PointOnManifold, k: int, step: float) -> PointOnManifold:
    coords = p.coords.copy()
    coords[k] += step
    return M.canonicalize(PointOnManifold(p.chart, coords))


def finite_difference_differential(
    gm: GluedMap, x: PointOnManifold, y: Optional[PointOnManifold] = None, step: Optional[float] = None
) -> np.ndarray:
    """Central differences of h along the chart coordinates of x, read through log at h(x)"""
    V, W = gm.source, gm.target
    x = V.canonicalize(x)
    y = karcher_mean(gm, x) if y is None else y
    h = DIFFERENTIAL_STEP * math.sqrt(gm.delta) if step is None else step
    columns = []
    for k in range(V.dimension):
        forward = karcher_mean(gm, _shifted(V, x, k, h))
        backward = karcher_mean(gm, _shifted(V, x, k, -h))
        columns.append((log_map(W, y, forward).components - log_map(W, y, backward).components) / (2 * h))
    return np.column_stack(columns)


def finite_difference_hessians(
    gm: GluedMap, x: PointOnManifold, y: PointOnManifold, step: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Second-order central differences of Phi in chart coordinates

    At a critical point of Phi(x, .) the coordinate Hessian in y equals the
    covariant one; the mixed block needs no correction.

    Returns:
        (d2_star, d2_star_star) estimates
    """
    V, W = gm.source, gm.target
    x = V.canonicalize(x)
    y = W.canonicalize(y)
    h = HESSIAN_STEP * math.sqrt(gm.delta) if step is None else step
    n, m = W.dimension, V.dimension
    base_terms = active_terms(gm, x)
    center = phi_objective(gm, x, y, base_terms)

    def at_y(terms: ActiveTerms, shifts: Tuple[Tuple[int, float], ...]) -> float:
        coords = y.coords.copy()
        for k, amount in shifts:
            coords[k] += amount
        return phi_objective(gm, terms.x, W.canonicalize(PointOnManifold(y.chart, coords)), terms)

    d2_star = np.zeros((n, n))
    for k in range(n):
        d2_star[k, k] = (at_y(base_terms, ((k, h),)) - 2 * center + at_y(base_terms, ((k, -h),))) / h**2
        for l in range(k + 1, n):
            value = (
                at_y(base_terms, ((k, h), (l, h)))
                - at_y(base_terms, ((k, h), (l, -h)))
                - at_y(base_terms, ((k, -h), (l, h)))
                + at_y(base_terms, ((k, -h), (l, -h)))
            ) / (4 * h**2)
            d2_star[k, l] = d2_star[l, k] = value

    d2_star_star = np.zeros((n, m))
    for j in range(m):
        forward_terms = active_terms(gm, _shifted(V, x, j, h))
        backward_terms = active_terms(gm, _shifted(V, x, j, -h))
        for k in range(n):
            d2_star_star[k, j] = (
                at_y(forward_terms, ((k, h),))
                - at_y(forward_terms, ((k, -h),))
                - at_y(backward_terms, ((k, h),))
                + at_y(backward_terms, ((k, -h),))
            ) / (4 * h**2)
    return d2_star, d2_star_star
