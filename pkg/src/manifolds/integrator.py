"""Fixed-step RK4 for geodesics with parallel fields and Jacobi fields riding along"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.exceptions import ConvergenceError, GeometryError
from src.manifolds.base import ManifoldModel
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

MAX_STEP_LENGTH = 1e-2
MIN_STEPS = 100
STEP_BLOCK = 50


def step_count(length: float) -> int:
    """
    Number of RK4 steps for a geodesic of the given length

    Steps are at most 1e-2 long and never fewer than 100; counts come in
    blocks of 50 so nearby shooting iterates share one grid.
    """
    if not math.isfinite(length):
        raise GeometryError(f"Cannot integrate a geodesic of length {length}")
    needed = max(MIN_STEPS, math.ceil(length / MAX_STEP_LENGTH))
    return STEP_BLOCK * math.ceil(needed / STEP_BLOCK)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """
    Dense output of one geodesic integration on [0, duration]

    Node k sits at time ``times[k]`` in chart ``charts[k]``. Vector fields
    are stored in the chart frame of their node: ``transported[k, m]`` is the
    m-th parallel field, ``jacobi[k, m]`` and ``jacobi_derivatives[k, m]`` are
    J and its covariant derivative for the m-th Jacobi field.
    """

    model: ManifoldModel
    times: np.ndarray
    charts: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    transported: Optional[np.ndarray] = None
    jacobi: Optional[np.ndarray] = None
    jacobi_derivatives: Optional[np.ndarray] = None

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def point(self, k: int) -> PointOnManifold:
        return PointOnManifold(int(self.charts[k]), self.positions[k])

    def velocity(self, k: int) -> TangentAtPoint:
        return TangentAtPoint(self.point(k), self.velocities[k])

    @property
    def start(self) -> PointOnManifold:
        return self.point(0)

    @property
    def end(self) -> PointOnManifold:
        return self.model.canonicalize(self.point(-1))

    @property
    def initial_velocity(self) -> TangentAtPoint:
        return self.velocity(0)

    def field_at(self, values: np.ndarray, k: int, m: int) -> TangentAtPoint:
        return TangentAtPoint(self.point(k), values[k, m])

    def speeds(self) -> np.ndarray:
        return np.array(
            [
                math.sqrt(max(float(v @ self.model.metric(int(c), x) @ v), 0.0))
                for c, x, v in zip(self.charts, self.positions, self.velocities)
            ]
        )


def _contract(gamma: np.ndarray, velocity: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """Rows gamma(velocity, field)^k = gamma^k_ij velocity^i field^j"""
    return np.einsum("kij,i,mj->mk", gamma, velocity, fields)


def _derivative(model: ManifoldModel, chart: int, state: List[np.ndarray], with_jacobi: bool) -> List[np.ndarray]:
    position, velocity, transported, jacobi, covariant = state
    gamma = model.christoffel_symbols(chart, position)
    acceleration = -np.einsum("kij,i,j->k", gamma, velocity, velocity)
    d_transported = -_contract(gamma, velocity, transported)
    if not with_jacobi:
        return [velocity, acceleration, d_transported, np.zeros_like(jacobi), np.zeros_like(covariant)]
    riemann = model.riemann(chart, position)
    curvature = np.einsum("lijk,mi,j,k->ml", riemann, jacobi, velocity, velocity)
    d_jacobi = covariant - _contract(gamma, velocity, jacobi)
    d_covariant = -curvature - _contract(gamma, velocity, covariant)
    return [velocity, acceleration, d_transported, d_jacobi, d_covariant]


def _advance(state: List[np.ndarray], slope: List[np.ndarray], h: float) -> List[np.ndarray]:
    return [s + h * d for s, d in zip(state, slope)]


def integrate(
    model: ManifoldModel,
    velocity: TangentAtPoint,
    duration: float = 1.0,
    steps: Optional[int] = None,
    transported: Optional[np.ndarray] = None,
    jacobi: Optional[np.ndarray] = None,
    jacobi_derivatives: Optional[np.ndarray] = None,
) -> GeodesicPath:
    """
    Integrate the geodesic with initial velocity ``velocity`` on [0, duration]

    Args:
        model: Manifold model
        velocity: Initial velocity at the start point
        duration: Final time
        steps: Number of RK4 steps (derived from the length when omitted)
        transported: (m, n) components of vectors to parallel-transport
        jacobi: (m, n) initial values J(0) of Jacobi fields
        jacobi_derivatives: (m, n) initial covariant derivatives DJ/dt(0)

    Returns:
        GeodesicPath with every requested field at every node
    """
    if duration < 0:
        raise GeometryError(f"Duration must be nonnegative, got {duration}")
    n = model.dimension
    base = velocity.base
    if steps is None:
        steps = step_count(model.norm(velocity) * duration)
    if steps < 1:
        raise ConvergenceError(f"Step underflow: {steps} steps requested")
    h = duration / steps

    empty = np.zeros((0, n))
    parallel = empty if transported is None else np.atleast_2d(np.asarray(transported, dtype=float))
    with_jacobi = jacobi is not None or jacobi_derivatives is not None
    if with_jacobi:
        count = len(np.atleast_2d(jacobi if jacobi is not None else jacobi_derivatives))
        j0 = np.zeros((count, n)) if jacobi is None else np.atleast_2d(np.asarray(jacobi, dtype=float))
        p0 = (
            np.zeros((count, n))
            if jacobi_derivatives is None
            else np.atleast_2d(np.asarray(jacobi_derivatives, dtype=float))
        )
        if j0.shape != p0.shape:
            raise GeometryError(f"Jacobi data shapes differ: {j0.shape} vs {p0.shape}")
    else:
        j0 = empty
        p0 = empty

    chart = base.chart
    state = [base.coords.copy(), velocity.components.copy(), parallel.copy(), j0.copy(), p0.copy()]
    records = [[s.copy() for s in state]]
    charts = [chart]

    for _ in range(steps):
        k1 = _derivative(model, chart, state, with_jacobi)
        k2 = _derivative(model, chart, _advance(state, k1, h / 2), with_jacobi)
        k3 = _derivative(model, chart, _advance(state, k2, h / 2), with_jacobi)
        k4 = _derivative(model, chart, _advance(state, k3, h), with_jacobi)
        state = [s + (h / 6) * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4)]
        if not np.all(np.isfinite(state[0])) or not np.all(np.isfinite(state[1])):
            raise ConvergenceError(f"Geodesic integration diverged in chart {chart}")

        target = model.chart_switch(chart, state[0])
        if target is not None:
            try:
                coords, jacobian = model.chart_transition(chart, target, state[0])
            except GeometryError as e:
                logger.error(f"Error switching from chart {chart} to {target}: {e}")
                raise
            state = [coords, jacobian @ state[1]] + [fields @ jacobian.T for fields in state[2:]]
            chart = target

        records.append([s.copy() for s in state])
        charts.append(chart)

    return GeodesicPath(
        model=model,
        times=np.linspace(0.0, duration, steps + 1),
        charts=np.array(charts, dtype=int),
        positions=np.array([r[0] for r in records]),
        velocities=np.array([r[1] for r in records]),
        transported=np.array([r[2] for r in records]) if transported is not None else None,
        jacobi=np.array([r[3] for r in records]) if with_jacobi else None,
        jacobi_derivatives=np.array([r[4] for r in records]) if with_jacobi else None,
    )
