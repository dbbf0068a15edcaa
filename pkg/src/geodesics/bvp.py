"""Logarithm map, distance, parallel transport and Jacobi fields"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.exceptions import ConvergenceError, GeometryError
from src.manifolds.base import ManifoldModel
from src.manifolds.integrator import GeodesicPath, integrate, step_count
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

NEWTON_STEP = 1e-6
NEWTON_TOLERANCE = 1e-11
MAX_NEWTON_ITERATIONS = 50
MAX_BACKTRACKS = 6
FAR_COORDINATE = 4.0
MAX_CONDITION = 1e12


def _canonical_vector(M: ManifoldModel, point: PointOnManifold, components: np.ndarray) -> TangentAtPoint:
    """Move a vector given at a raw integration node to the canonical representative of the node"""
    canonical = M.canonicalize(point)
    if canonical.chart != point.chart:
        components = M.transform_vector(TangentAtPoint(point, components), canonical.chart).components
    return TangentAtPoint(canonical, components)


def _at(M: ManifoldModel, v: TangentAtPoint, p: PointOnManifold) -> TangentAtPoint:
    """The vector v re-expressed with base exactly p (same point, possibly another chart)"""
    if v.base.chart == p.chart:
        return TangentAtPoint(p, v.components)
    return TangentAtPoint(p, M.transform_vector(v, p.chart).components)


def log_map(
    M: ManifoldModel,
    p: PointOnManifold,
    q: PointOnManifold,
    max_distance: Optional[float] = None,
    tolerance: float = NEWTON_TOLERANCE,
    max_iterations: int = MAX_NEWTON_ITERATIONS,
) -> TangentAtPoint:
    """
    Initial velocity v at p with exp_p(v) = q, by single shooting

    Damped Newton iteration on the initial velocity with a forward-difference
    Jacobian (step 1e-6). When q sits comfortably in the chart of p the start
    is the chart coordinate difference (the shortest periodic representative
    on tori) and the endpoint is matched in that chart. Otherwise the start
    comes from the model's ``log_guess`` and the endpoint is matched in the
    chart of q, so targets across a chart boundary stay reachable.

    Args:
        M: Manifold model
        p: Base point
        q: Target point
        max_distance: Reject targets farther than this
        tolerance: Endpoint tolerance in chart coordinates
        max_iterations: Newton iteration cap

    Returns:
        TangentAtPoint at p
    """
    if M.use_oracle("log"):
        v = M.exact_log(p, q)
        _check_radius(M, v, max_distance)
        return v

    try:
        target = M.coordinates_in_chart(q, p.chart)
    except GeometryError:
        target = None
    if target is not None and (M.chart_count == 1 or float(np.linalg.norm(target)) <= FAR_COORDINATE):
        chart = p.chart
        target = M.representative(target, p.coords)
        velocity = target - p.coords
        if not np.any(velocity):
            return TangentAtPoint(p, np.zeros(M.dimension))
    else:
        if M.has_oracle("log"):
            v = M.exact_log(p, q)
            _check_radius(M, v, max_distance)
            return v
        guess = M.log_guess(p, q)
        if guess is None:
            raise GeometryError(f"{q} is not reachable from the chart of {p}")
        chart = q.chart
        target = q.coords
        velocity = _at(M, guess, p).components

    guess_length = M.norm(TangentAtPoint(p, velocity))
    _check_radius(M, TangentAtPoint(p, velocity), None if max_distance is None else 2 * max_distance)
    steps = step_count(1.5 * guess_length)

    def residual(v: np.ndarray) -> np.ndarray:
        path = integrate(M, TangentAtPoint(p, v), 1.0, steps=steps)
        end = path.point(-1)
        coords = M.representative(M.coordinates_in_chart(end, chart), target)
        return coords - target

    n = M.dimension
    try:
        r = residual(velocity)
    except GeometryError as e:
        raise ConvergenceError(f"Shooting from {p} to {q} left the atlas at the initial guess: {e}")
    for iteration in range(max_iterations):
        error = float(np.max(np.abs(r)))
        if error <= tolerance:
            v = TangentAtPoint(p, velocity)
            _check_radius(M, v, max_distance)
            return v
        jacobian = np.empty((n, n))
        for k in range(n):
            shifted = velocity.copy()
            shifted[k] += NEWTON_STEP
            jacobian[:, k] = (residual(shifted) - r) / NEWTON_STEP
        try:
            step = np.linalg.solve(jacobian, r)
        except np.linalg.LinAlgError as e:
            logger.error(f"Error solving the shooting system at iteration {iteration}: {e}")
            raise ConvergenceError(f"Singular shooting Jacobian from {p} to {q}")
        fraction = 1.0
        for _ in range(MAX_BACKTRACKS):
            candidate = velocity - fraction * step
            try:
                candidate_r = residual(candidate)
            except GeometryError:
                candidate_r = None
            if candidate_r is not None and float(np.max(np.abs(candidate_r))) < error:
                break
            fraction *= 0.5
        else:
            # no decrease found: take the full Newton step
            candidate = velocity - step
            try:
                candidate_r = residual(candidate)
            except GeometryError as e:
                raise ConvergenceError(f"Shooting from {p} to {q} left the atlas at iteration {iteration}: {e}")
        velocity, r = candidate, candidate_r
    raise ConvergenceError(f"Shooting from {p} to {q} did not converge in {max_iterations} iterations")


def _check_radius(M: ManifoldModel, v: TangentAtPoint, max_distance: Optional[float]):
    if max_distance is not None and M.norm(v) > max_distance:
        raise GeometryError(f"Target at distance {M.norm(v):.6g} is beyond the working radius {max_distance}")


def distance(M: ManifoldModel, p: PointOnManifold, q: PointOnManifold) -> float:
    """Geodesic distance |log_p q| in the metric at p"""
    if M.use_oracle("distance"):
        return M.exact_distance(p, q)
    return M.norm(log_map(M, p, q))


def parallel_transport(M: ManifoldModel, path: GeodesicPath, v0: TangentAtPoint) -> TangentAtPoint:
    """
    Transport v0 from the start to the end of a geodesic path

    The transport equation is integrated on the same RK4 grid as the path.
    """
    v0 = _at(M, v0, path.start)
    transported = integrate(
        M, path.initial_velocity, duration=path.duration, steps=path.steps, transported=v0.components[None, :]
    )
    return _canonical_vector(M, transported.point(-1), transported.transported[-1, 0])


def transport(M: ManifoldModel, p: PointOnManifold, q: PointOnManifold, v: TangentAtPoint) -> TangentAtPoint:
    """Parallel translation of v along the minimal geodesic from p to q"""
    if M.use_oracle("transport"):
        return M.exact_transport(p, q, _at(M, v, p))
    a = log_map(M, p, q)
    if not np.any(a.components):
        return _at(M, v, M.canonicalize(q))
    path = integrate(M, a, 1.0, transported=_at(M, v, p).components[None, :])
    return _canonical_vector(M, path.point(-1), path.transported[-1, 0])


@dataclass(frozen=True, eq=False)
class JacobiData:
    """A Jacobi field along a geodesic with its covariant derivative at every node"""

    geodesic: GeodesicPath
    J0: TangentAtPoint
    J0dot: TangentAtPoint
    values: np.ndarray
    derivatives: np.ndarray

    def value(self, k: int) -> TangentAtPoint:
        return TangentAtPoint(self.geodesic.point(k), self.values[k])

    def derivative(self, k: int) -> TangentAtPoint:
        return TangentAtPoint(self.geodesic.point(k), self.derivatives[k])

    @property
    def end_value(self) -> TangentAtPoint:
        return _canonical_vector(self.geodesic.model, self.geodesic.point(-1), self.values[-1])

    @property
    def end_derivative(self) -> TangentAtPoint:
        return _canonical_vector(self.geodesic.model, self.geodesic.point(-1), self.derivatives[-1])

    def norms(self) -> np.ndarray:
        M = self.geodesic.model
        return np.array([M.norm(self.value(k)) for k in range(len(self.values))])

    def residuals(self) -> np.ndarray:
        """
        |D^2 J/dt^2 + R(J, velocity) velocity| at interior nodes

        D^2 J/dt^2 is the covariant derivative of the stored DJ/dt, with its
        coordinate derivative taken by a five-point stencil inside one chart.
        """
        path = self.geodesic
        M = path.model
        h = path.times[1] - path.times[0] if path.steps else 0.0
        out = []
        for k in range(2, path.steps - 1):
            if h == 0.0 or len(set(path.charts[k - 2 : k + 3])) > 1:
                continue
            chart = int(path.charts[k])
            x, v = path.positions[k], path.velocities[k]
            covariant = self.derivatives
            d_cov = (-covariant[k + 2] + 8 * covariant[k + 1] - 8 * covariant[k - 1] + covariant[k - 2]) / (12 * h)
            gamma = M.christoffel_symbols(chart, x)
            acceleration = d_cov + np.einsum("kij,i,j->k", gamma, v, covariant[k])
            curvature = np.einsum("lijk,i,j,k->l", M.riemann(chart, x), self.values[k], v, v)
            out.append(M.norm(TangentAtPoint(path.point(k), acceleration + curvature)))
        return np.array(out)


def jacobi_field(
    M: ManifoldModel, geodesic: GeodesicPath, J0: TangentAtPoint, J0dot: TangentAtPoint
) -> JacobiData:
    """
    Jacobi field along a geodesic from its initial value and covariant derivative

    Args:
        M: Manifold model
        geodesic: Path from geodesic_ivp
        J0: J(0) at the start of the path
        J0dot: DJ/dt(0) at the start of the path

    Returns:
        JacobiData on the grid of the geodesic
    """
    start = geodesic.start
    J0 = _at(M, J0, start)
    J0dot = _at(M, J0dot, start)
    path = integrate(
        M,
        geodesic.initial_velocity,
        duration=geodesic.duration,
        steps=geodesic.steps,
        jacobi=J0.components[None, :],
        jacobi_derivatives=J0dot.components[None, :],
    )
    return JacobiData(
        geodesic=path,
        J0=J0,
        J0dot=J0dot,
        values=path.jacobi[:, 0],
        derivatives=path.jacobi_derivatives[:, 0],
    )


@dataclass(frozen=True, eq=False)
class JacobiPropagators:
    """
    Linear maps taking (J(0), DJ/dt(0)) to (J(T), DJ/dt(T)) along a geodesic

    J(T) = A J(0) + B J'(0) and J'(T) = C J(0) + D J'(0), with the start in
    the chart of the path start and the end in the canonical chart of the end.
    """

    geodesic: GeodesicPath
    end: PointOnManifold
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray


def jacobi_propagators(M: ManifoldModel, geodesic: GeodesicPath) -> JacobiPropagators:
    """Integrate the 2n basis Jacobi fields along a geodesic"""
    n = M.dimension
    identity = np.eye(n)
    zeros = np.zeros((n, n))
    path = integrate(
        M,
        geodesic.initial_velocity,
        duration=geodesic.duration,
        steps=geodesic.steps,
        jacobi=np.vstack([identity, zeros]),
        jacobi_derivatives=np.vstack([zeros, identity]),
    )
    raw_end = path.point(-1)
    end = M.canonicalize(raw_end)
    if end.chart != raw_end.chart:
        _, frame = M.chart_transition(raw_end.chart, end.chart, raw_end.coords)
    else:
        frame = identity
    values = frame @ path.jacobi[-1].T
    derivatives = frame @ path.jacobi_derivatives[-1].T
    return JacobiPropagators(
        geodesic=path,
        end=end,
        A=values[:, :n],
        B=values[:, n:],
        C=derivatives[:, :n],
        D=derivatives[:, n:],
    )


def jacobi_boundary(
    M: ManifoldModel, geodesic: GeodesicPath, J0: TangentAtPoint, J1: TangentAtPoint
) -> JacobiData:
    """
    Jacobi field with prescribed values at both ends of a geodesic

    Two families of basis initial-value solves give J(T) = A J(0) + B J'(0);
    the boundary problem is the linear system B J'(0) = J(T) - A J(0).

    Raises:
        GeometryError: if B is singular (conjugate endpoints)
    """
    propagators = jacobi_propagators(M, geodesic)
    J0 = _at(M, J0, geodesic.start)
    J1 = _at(M, J1, propagators.end)
    if np.linalg.cond(propagators.B) > MAX_CONDITION:
        raise GeometryError("Singular Jacobi boundary system: endpoints are conjugate")
    initial_derivative = np.linalg.solve(propagators.B, J1.components - propagators.A @ J0.components)
    return jacobi_field(M, geodesic, J0, TangentAtPoint(geodesic.start, initial_derivative))


def dexp_matrix(M: ManifoldModel, p: PointOnManifold, a: TangentAtPoint) -> JacobiPropagators:
    """Propagators along t -> exp_p(t a), t in [0, 1]; the B block is d_a exp_p"""
    a = _at(M, a, p)
    return jacobi_propagators(M, integrate(M, a, 1.0))


def dexp_differential(M: ManifoldModel, p: PointOnManifold, a: TangentAtPoint, xi: TangentAtPoint) -> TangentAtPoint:
    """
    Differential of exp_p at a applied to xi

    Equals J(1) for the Jacobi field with J(0) = 0, DJ/dt(0) = xi along
    t -> exp_p(t a) (the unit-speed form J(r) with J'(0) = xi / r, r = |a|,
    reparametrized). At a = 0 this is xi itself.

    Args:
        M: Manifold model
        p: Base point
        a: Tangent vector at p, |a| < 2
        xi: Tangent vector at p

    Returns:
        TangentAtPoint at exp_p(a)
    """
    a = _at(M, a, p)
    xi = _at(M, xi, p)
    geodesic = integrate(M, a, 1.0)
    data = jacobi_field(M, geodesic, TangentAtPoint(p, np.zeros(M.dimension)), xi)
    return data.end_value
