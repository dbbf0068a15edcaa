"""Local maps exp_w . L . log_v from a net point of V to its image in W"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.exceptions import ChartConstructionError, GeometryError
from src.geodesics.bvp import dexp_matrix, log_map
from src.geodesics.frames import orthonormal_frame
from src.linalg.basis import Basis, LinearMap, eps_orthonormality, linear_extension
from src.manifolds.base import ManifoldModel
from src.manifolds.core import exp_map
from src.manifolds.types import PointOnManifold, TangentAtPoint
from src.nets.correspondence import Correspondence
from src.nets.net_builder import Net

logger = logging.getLogger(__name__)

DOMAIN_FACTOR = 4.0
SEARCH_FACTOR = 2.0


@dataclass(frozen=True, eq=False)
class LocalChart:
    """
    The chart phi_i = exp_w . L . log_v restricted to the ball of radius 4 epsilon around v

    ``frame`` holds the orthonormal basis b_k of T_vV as columns; the rows of
    ``E`` and ``F`` are log_v e_k and log_w f_k, and L sends E_k to F_k.
    """

    index: int
    source: ManifoldModel
    target: ManifoldModel
    center: PointOnManifold
    image_center: PointOnManifold
    frame: np.ndarray
    basis_indices: Tuple[int, ...]
    E: Basis
    F: Basis
    L: LinearMap
    epsilon: float
    delta: float
    basis_distances: Tuple[float, ...] = ()

    @property
    def radius(self) -> float:
        return DOMAIN_FACTOR * self.epsilon

    @property
    def e_orthonormality(self) -> float:
        return eps_orthonormality(self.E)

    @property
    def f_orthonormality(self) -> float:
        return eps_orthonormality(self.F)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "basis_indices": list(self.basis_indices),
            "frame": self.frame.tolist(),
            "E": self.E.vectors.tolist(),
            "F": self.F.vectors.tolist(),
            "L": self.L.matrix.tolist(),
            "epsilon": self.epsilon,
            "delta": self.delta,
            "basis_distances": list(self.basis_distances),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], net: Net, correspondence: Correspondence) -> "LocalChart":
        index = int(data["index"])
        center = net.points[index]
        image_center = correspondence.images[index]
        source, target = net.model, correspondence.target
        E = Basis(np.asarray(data["E"], dtype=float), source.metric_at(center))
        F = Basis(np.asarray(data["F"], dtype=float), target.metric_at(image_center))
        return cls(
            index=index,
            source=source,
            target=target,
            center=center,
            image_center=image_center,
            frame=np.asarray(data["frame"], dtype=float),
            basis_indices=tuple(int(k) for k in data["basis_indices"]),
            E=E,
            F=F,
            L=LinearMap(np.asarray(data["L"], dtype=float), E.metric, F.metric),
            epsilon=float(data["epsilon"]),
            delta=float(data["delta"]),
            basis_distances=tuple(float(d) for d in data.get("basis_distances", [])),
        )


def construct_chart(i: int, netV: Net, chi: Correspondence, delta: float) -> LocalChart:
    """
    Build the chart centered at net point i

    b_k is the orthonormalized coordinate frame at v = v_i, e_k the nearest
    net point to exp_v(b_k) (lowest index on ties), f_k = chi(e_k), and L the
    linear map with L(log_v e_k) = log_w f_k.

    Args:
        i: Net index of the center
        netV: Net in V with covering radius at most epsilon
        chi: Correspondence from netV to W
        delta: Experiment delta

    Returns:
        LocalChart

    Raises:
        ChartConstructionError: no net point within 2 epsilon of some exp_v(b_k),
            or log_v e_k / log_w f_k do not form a basis
    """
    V, W = netV.model, chi.target
    v = netV.points[i]
    w = chi.images[i]
    epsilon = netV.epsilon
    frame = orthonormal_frame(V, v)

    basis_indices: List[int] = []
    basis_distances: List[float] = []
    for k in range(V.dimension):
        target = exp_map(V, v, TangentAtPoint(v, frame[:, k]))
        try:
            j, gap = netV.nearest(target, SEARCH_FACTOR * epsilon)
        except GeometryError as e:
            logger.error(f"Error choosing basis point {k} of chart {i}: {e}")
            raise ChartConstructionError(f"Chart {i}: no net point within {SEARCH_FACTOR * epsilon} of exp_v(b_{k})")
        basis_indices.append(j)
        basis_distances.append(gap)

    E_rows = np.array([log_map(V, v, netV.points[j]).components for j in basis_indices])
    F_rows = np.array([log_map(W, w, chi.images[j]).components for j in basis_indices])
    try:
        E = Basis(E_rows, V.metric_at(v))
        F = Basis(F_rows, W.metric_at(w))
        L = linear_extension(E, F)
    except GeometryError as e:
        logger.error(f"Error building the linear part of chart {i}: {e}")
        raise ChartConstructionError(f"Chart {i}: {e}")

    chart = LocalChart(
        index=i,
        source=V,
        target=W,
        center=v,
        image_center=w,
        frame=frame,
        basis_indices=tuple(basis_indices),
        E=E,
        F=F,
        L=L,
        epsilon=epsilon,
        delta=delta,
        basis_distances=tuple(basis_distances),
    )
    logger.debug(
        f"Chart {i}: basis points {basis_indices}, E defect {chart.e_orthonormality:.3g}, "
        f"F defect {chart.f_orthonormality:.3g}"
    )
    return chart


def chart_log(chart: LocalChart, x: PointOnManifold) -> TangentAtPoint:
    """log_v x, rejecting points outside the chart domain"""
    a = log_map(chart.source, chart.center, x)
    size = chart.source.norm(a)
    if size > chart.radius * (1 + 1e-9):
        raise GeometryError(
            f"{x} is at distance {size:.6g} from the center of chart {chart.index}, beyond {chart.radius}"
        )
    return a


def apply_chart(chart: LocalChart, x: PointOnManifold) -> PointOnManifold:
    """phi(x) = exp_w(L(log_v x)) for x within 4 epsilon of the center"""
    a = chart_log(chart, x)
    return exp_map(chart.target, chart.image_center, TangentAtPoint(chart.image_center, chart.L(a.components)))


def chart_with_differential(chart: LocalChart, x: PointOnManifold) -> Tuple[PointOnManifold, LinearMap]:
    """
    phi(x) together with d_x phi = d exp_w . L . d log_v

    d log_v at x is the inverse of d_a exp_v, a = log_v x; both differentials
    of exp are the B blocks of the Jacobi propagators, so at x = v the result
    is L.

    Returns:
        (phi(x), LinearMap from T_xV to T_phi(x)W in the canonical chart frames)
    """
    V, W = chart.source, chart.target
    x = V.canonicalize(x)
    a = chart_log(chart, x)
    source_side = dexp_matrix(V, chart.center, a)
    if source_side.end.chart != x.chart:
        _, to_end = V.chart_transition(x.chart, source_side.end.chart, x.coords)
    else:
        to_end = np.eye(V.dimension)
    try:
        dlog = np.linalg.solve(source_side.B, to_end)
    except np.linalg.LinAlgError as e:
        logger.error(f"Error inverting d exp_v in chart {chart.index}: {e}")
        raise GeometryError(f"d exp_v is singular at {x}")

    b = TangentAtPoint(chart.image_center, chart.L(a.components))
    target_side = dexp_matrix(W, chart.image_center, b)
    image = target_side.end
    matrix = target_side.B @ chart.L.matrix @ dlog
    return image, LinearMap(matrix, V.metric_at(x), W.metric_at(image))


def chart_differential(chart: LocalChart, x: PointOnManifold) -> LinearMap:
    """d_x phi as a LinearMap from T_xV to T_phi(x)W"""
    return chart_with_differential(chart, x)[1]


def sample_domain(
    chart: LocalChart, rng: np.random.Generator, count: int, radius: Optional[float] = None
) -> List[PointOnManifold]:
    """Points exp_v(a) with a uniform in the metric ball of the given radius (the domain by default)"""
    V = chart.source
    radius = chart.radius if radius is None else radius
    n = V.dimension
    points = []
    for _ in range(count):
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        size = radius * rng.uniform() ** (1.0 / n)
        points.append(exp_map(V, chart.center, TangentAtPoint(chart.center, chart.frame @ (size * direction))))
    return points
