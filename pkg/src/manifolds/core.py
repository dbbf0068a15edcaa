"""Connection, curvature, exponential map, rescaling and admissibility of model manifolds"""

import dataclasses
import logging
from typing import Sequence

import numpy as np

from src.exceptions import GeometryError
from src.manifolds.base import METRIC_STEP, ManifoldModel
from src.manifolds.integrator import GeodesicPath, integrate
from src.manifolds.types import AdmissibilityReport, PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

ADMISSIBILITY_TOLERANCE = 1e-4


def _check_positive_definite(M: ManifoldModel, p: PointOnManifold) -> np.ndarray:
    g = M.metric_at(p)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise GeometryError(f"Metric of {M.name} is not positive definite at {p}")
    return g


def finite_difference_christoffel(M: ManifoldModel, p: PointOnManifold) -> np.ndarray:
    """Christoffel symbols from central differences (step 1e-5) of the metric only"""
    g = _check_positive_definite(M, p)
    n = M.dimension
    dg = np.empty((n, n, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = METRIC_STEP
        dg[k] = (M.metric(p.chart, p.coords + step) - M.metric(p.chart, p.coords - step)) / (2 * METRIC_STEP)
    lower = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    gamma = np.einsum("kl,lij->kij", np.linalg.inv(g), lower)
    return 0.5 * (gamma + np.swapaxes(gamma, 1, 2))


def christoffel(M: ManifoldModel, p: PointOnManifold, method: str = "auto") -> np.ndarray:
    """
    Christoffel symbols gamma[k, i, j] of the Levi-Civita connection at p

    Args:
        M: Manifold model
        p: Point in a chart of M
        method: "auto" (analytic where the model has it) or "finite_difference"

    Returns:
        n x n x n array symmetric in its last two indices
    """
    if method == "finite_difference":
        return finite_difference_christoffel(M, p)
    if method != "auto":
        raise ValueError(f"Unknown Christoffel method: {method}")
    _check_positive_definite(M, p)
    return M.christoffel_symbols(p.chart, p.coords)


def riemann_tensor(M: ManifoldModel, p: PointOnManifold) -> np.ndarray:
    """Riemann tensor R[l, i, j, k] at p, R(X, Y)Z = R^l_ijk X^i Y^j Z^k e_l"""
    _check_positive_definite(M, p)
    return M.riemann(p.chart, p.coords)


def curvature_operator(M: ManifoldModel, p: PointOnManifold, J: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Components of R(J, velocity) velocity at p"""
    return np.einsum("lijk,i,j,k->l", riemann_tensor(M, p), J, velocity, velocity)


def sectional_curvature(M: ManifoldModel, p: PointOnManifold, plane: Sequence[TangentAtPoint]) -> float:
    """
    Sectional curvature of the plane spanned by two tangent vectors at p

    K = <R(u, v)v, u> / (|u|^2 |v|^2 - <u, v>^2)

    Args:
        M: Manifold model
        p: Base point
        plane: Two tangent vectors at p

    Returns:
        Sectional curvature in rescaled units
    """
    u, v = plane
    u = M.transform_vector(u, p.chart)
    v = M.transform_vector(v, p.chart)
    g = M.metric_at(p)
    area = float(u.components @ g @ u.components) * float(v.components @ g @ v.components) - float(
        u.components @ g @ v.components
    ) ** 2
    scale = float(u.components @ g @ u.components) * float(v.components @ g @ v.components)
    if area <= 1e-12 * max(scale, 1e-300):
        raise GeometryError("Degenerate plane: tangent vectors are linearly dependent")
    if M.use_oracle("curvature"):
        return M.exact_sectional_curvature(u, v)
    rvv = curvature_operator(M, p, u.components, v.components)
    # <R(u, v)v, u> with R(u, v)v = R^l_ijk u^i v^j v^k
    return float(u.components @ g @ rvv) / area


def geodesic_ivp(M: ManifoldModel, p: PointOnManifold, v: TangentAtPoint, T: float = 1.0) -> GeodesicPath:
    """
    Integrate the geodesic from p with initial velocity v up to time T

    Fixed-step RK4 with step length at most min(1e-2, |v| T / 100); the
    path may change charts on multi-chart models.
    """
    if v.base.chart != p.chart or not np.allclose(v.base.coords, p.coords):
        v = TangentAtPoint(p, M.transform_vector(v, p.chart).components)
    return integrate(M, v, duration=T)


def exp_map(M: ManifoldModel, p: PointOnManifold, v: TangentAtPoint) -> PointOnManifold:
    """Endpoint exp_p(v) of the geodesic at time 1, canonicalized"""
    if v.base.chart != p.chart:
        v = TangentAtPoint(p, M.transform_vector(v, p.chart).components)
    if M.use_oracle("exp"):
        return M.exact_exp(v)
    if not np.any(v.components):
        return M.canonicalize(p)
    return geodesic_ivp(M, p, v, 1.0).end


def rescale(M: ManifoldModel, lam: float) -> ManifoldModel:
    """Copy of M with metric multiplied by lam**2: distances scale by lam, curvature by 1/lam**2"""
    if not lam > 0:
        raise ValueError(f"Rescaling factor must be positive, got {lam}")
    return dataclasses.replace(M, scale=M.scale * lam)


def _random_plane(M: ManifoldModel, p: PointOnManifold, rng: np.random.Generator):
    while True:
        u, v = rng.normal(size=(2, M.dimension))
        cross = float(u @ u) * float(v @ v) - float(u @ v) ** 2
        if cross > 1e-6 * float(u @ u) * float(v @ v):
            return TangentAtPoint(p, u), TangentAtPoint(p, v)


def admissibility(M: ManifoldModel, delta: float, sample_count: int = 200, seed: int = 0) -> AdmissibilityReport:
    """
    Check |K| <= delta and injectivity radius >= 1/delta on the rescaled model

    Curvature is sampled at ``sample_count`` seeded points and planes; the
    injectivity radius comes from model metadata.

    Args:
        M: Manifold model (already rescaled)
        delta: Target curvature bound, in (0, 0.25]
        sample_count: Number of sampled (point, plane) pairs
        seed: Sampling seed

    Returns:
        AdmissibilityReport; failures are reported in its pass flag
    """
    if not 0 < delta <= 0.25:
        raise ValueError(f"delta must be in (0, 0.25], got {delta}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in M.sample_points(rng, sample_count):
        u, v = _random_plane(M, p, rng)
        try:
            worst = max(worst, abs(sectional_curvature(M, p, (u, v))))
        except GeometryError as e:
            logger.warning(f"Skipping curvature sample at {p}: {e}")
    report = AdmissibilityReport(
        model=M.name,
        delta=delta,
        curvature_bound=worst,
        injectivity_radius=M.injectivity_radius(),
        samples=sample_count,
        scale=M.scale,
        tolerance=ADMISSIBILITY_TOLERANCE,
    )
    logger.info(
        f"Admissibility of {M.name} at delta={delta}: |K| <= {worst:.6g}, "
        f"inj >= {report.injectivity_radius:.6g}, passed={report.passed}"
    )
    return report
