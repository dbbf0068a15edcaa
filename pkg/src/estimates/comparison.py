"""Numerical checks of the comparison estimates for Jacobi fields, exp and log"""

import logging
import math
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from src.estimates.margin_report import MarginReport
from src.estimates.scaling import PowerLawFit, fit_power_law
from src.geodesics.bvp import distance, log_map, transport
from src.geodesics.frames import random_orthogonal_unit_vector, random_unit_vector
from src.manifolds.base import ManifoldModel
from src.manifolds.core import exp_map
from src.manifolds.integrator import integrate
from src.manifolds.types import PointOnManifold, TangentAtPoint

logger = logging.getLogger(__name__)

RAUCH_TOLERANCE = 1e-6
MIN_LENGTH = 0.1
MAX_LENGTH = 2.0
LOG_DIFFERENCE_RADIUS = 2.0
RAUCH_FAMILIES = ("zero_value", "zero_derivative", "aligned")


def _run_trials(
    trial: Callable[..., Dict[str, Any]],
    M: ManifoldModel,
    delta: float,
    trials: int,
    seed: int,
    n_jobs: int,
) -> List[Dict[str, Any]]:
    """Evaluate independent seeded trials; results come back in trial order"""
    children = np.random.SeedSequence(seed).spawn(trials)
    return Parallel(n_jobs=n_jobs)(delayed(trial)(M, delta, child, k) for k, child in enumerate(children))


def _rauch_trial(M: ManifoldModel, delta: float, seed: np.random.SeedSequence, index: int) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    p = M.sample_points(rng, 1)[0]
    direction = random_unit_vector(M, p, rng)
    length = rng.uniform(MIN_LENGTH, MAX_LENGTH)
    normal = random_orthogonal_unit_vector(M, p, direction, rng).components
    value_size, derivative_size = rng.uniform(0.1, 1.0, size=2)
    family = RAUCH_FAMILIES[index % len(RAUCH_FAMILIES)]
    if family == "zero_value":
        j0, j1 = np.zeros(M.dimension), derivative_size * normal
    elif family == "zero_derivative":
        j0, j1 = value_size * normal, np.zeros(M.dimension)
    else:
        j0 = value_size * normal
        j1 = rng.uniform(0.0, 1.0) * j0

    path = integrate(M, direction, duration=length, jacobi=j0[None, :], jacobi_derivatives=j1[None, :])
    g0 = M.metric_at(p)
    size0 = math.sqrt(float(j0 @ g0 @ j0))
    size1 = math.sqrt(float(j1 @ g0 @ j1))
    root = math.sqrt(delta)
    times = path.times[1:]
    norms = np.array(
        [
            math.sqrt(max(float(J @ M.metric(int(c), x) @ J), 0.0))
            for c, x, J in zip(path.charts[1:], path.positions[1:], path.jacobi[1:, 0])
        ]
    )
    lower = size0 * np.cos(root * times) + size1 * np.sin(root * times) / root
    upper = size0 * np.cosh(root * times) + size1 * np.sinh(root * times) / root
    with np.errstate(divide="ignore", invalid="ignore"):
        lower_ratio = float(np.max(np.where(norms > 0, lower / norms, np.inf)))
        upper_ratio = float(np.max(norms / upper))
    return {
        "trial": index,
        "family": family,
        "length": float(length),
        "lower_ratio": lower_ratio,
        "upper_ratio": upper_ratio,
        "lower_gap": float(np.max(np.abs(norms - lower))),
        "ratio": max(lower_ratio, upper_ratio),
    }


def check_rauch(M: ManifoldModel, delta: float, trials: int, seed: int, n_jobs: int = 1) -> MarginReport:
    """
    Check the Jacobi-field sandwich at every node of random geodesics

    |J0| cos(sqrt(d) t) + |J0'| sin(sqrt(d) t)/sqrt(d) <= |J(t)|
        <= |J0| cosh(sqrt(d) t) + |J0'| sinh(sqrt(d) t)/sqrt(d)

    on unit-speed geodesics of length in [0.1, 2]. Initial data is normal to
    the geodesic and cycles through J0 = 0, J0' = 0 and J0' = c J0 (c >= 0),
    the families for which the lower envelope is a valid comparison.

    Args:
        M: Admissible model at this delta
        delta: Curvature bound
        trials: Number of random Jacobi fields
        seed: Trial seed
        n_jobs: joblib workers

    Returns:
        MarginReport with the worst of (lower / |J|, |J| / upper)
    """
    results = _run_trials(_rauch_trial, M, delta, trials, seed, n_jobs)
    zero_value = [r["lower_gap"] for r in results if r["family"] == "zero_value"]
    report = MarginReport.from_trials(
        "rauch-comparison",
        [r["ratio"] for r in results],
        results,
        tolerance=RAUCH_TOLERANCE,
        details={
            "delta": delta,
            "worst_lower_ratio": max((r["lower_ratio"] for r in results), default=0.0),
            "worst_upper_ratio": max((r["upper_ratio"] for r in results), default=0.0),
            "max_zero_value_lower_gap": max(zero_value, default=0.0),
        },
    )
    logger.info(f"Jacobi comparison on {M.name}: worst ratio {report.worst_ratio:.6f} over {trials} trials")
    return report


def _dexp_trial(M: ManifoldModel, delta: float, seed: np.random.SeedSequence, index: int) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    p = M.sample_points(rng, 1)[0]
    r = rng.uniform(MIN_LENGTH, MAX_LENGTH)
    a = random_unit_vector(M, p, rng).scaled(r)
    xi = random_unit_vector(M, p, rng)
    path = integrate(
        M,
        a,
        1.0,
        transported=xi.components[None, :],
        jacobi=np.zeros((1, M.dimension)),
        jacobi_derivatives=xi.components[None, :],
    )
    end_metric = M.metric(int(path.charts[-1]), path.positions[-1])
    gap = path.jacobi[-1, 0] - path.transported[-1, 0]
    defect = math.sqrt(max(float(gap @ end_metric @ gap), 0.0))
    defect_ratio = defect / (r**2 * delta)

    # bi-Lipschitz check of exp_p on the ball of radius r
    other = random_unit_vector(M, p, rng).scaled(r * rng.uniform(0.0, 1.0))
    offset = TangentAtPoint(p, a.components - other.components)
    base_length = M.norm(offset)
    image_length = distance(M, exp_map(M, p, a), exp_map(M, p, other))
    stretch = max(image_length / base_length, base_length / image_length) if image_length > 0 else math.inf
    lipschitz_ratio = (stretch - 1.0) / (delta * r**2)
    return {
        "trial": index,
        "r": float(r),
        "defect": defect,
        "defect_ratio": defect_ratio,
        "stretch": stretch,
        "lipschitz_ratio": lipschitz_ratio,
        "ratio": max(defect_ratio, lipschitz_ratio),
    }


def check_dexp_transport(M: ManifoldModel, delta: float, trials: int, seed: int, n_jobs: int = 1) -> MarginReport:
    """
    Check that d_a exp_p and parallel translation are r^2 delta-close

    For random p, a with |a| = r in [0.1, 2) and unit xi, the defect
    |d_a exp_p(xi) - tau xi| is compared with r^2 delta |xi|; exp_p is also
    checked to be (1 + delta r^2)-bi-Lipschitz on a sampled pair of the
    r-ball.

    Returns:
        MarginReport with the worst of both ratios
    """
    results = _run_trials(_dexp_trial, M, delta, trials, seed, n_jobs)
    report = MarginReport.from_trials(
        "dexp-transport",
        [r["ratio"] for r in results],
        results,
        details={
            "delta": delta,
            "worst_defect_ratio": max((r["defect_ratio"] for r in results), default=0.0),
            "worst_lipschitz_ratio": max((r["lipschitz_ratio"] for r in results), default=0.0),
        },
    )
    logger.info(f"exp differential vs transport on {M.name}: worst ratio {report.worst_ratio:.6f}")
    return report


def log_difference_defect(
    M: ManifoldModel, x: PointOnManifold, y: PointOnManifold, z: PointOnManifold
) -> float:
    """|log_z y - log_z x - tau_{x,z} log_x y| in the metric at z"""
    from_z_to_y = log_map(M, z, y)
    from_z_to_x = log_map(M, z, x)
    moved = transport(M, x, z, log_map(M, x, y))
    moved = M.transform_vector(moved, z.chart)
    gap = TangentAtPoint(z, from_z_to_y.components - from_z_to_x.components - moved.components)
    return M.norm(gap)


def _log_difference_trial(M: ManifoldModel, delta: float, seed: np.random.SeedSequence, index: int) -> Dict[str, Any]:
    rng = np.random.default_rng(seed)
    center = M.sample_points(rng, 1)[0]
    radii = rng.uniform(0.0, LOG_DIFFERENCE_RADIUS, size=3)
    triple = [exp_map(M, center, random_unit_vector(M, center, rng).scaled(float(r))) for r in radii]
    defect = log_difference_defect(M, *triple)
    return {"trial": index, "defect": defect, "ratio": defect / delta, "radius": float(np.max(radii))}


def check_log_difference(M: ManifoldModel, delta: float, trials: int, seed: int, n_jobs: int = 1) -> MarginReport:
    """
    Measure the constant C in |log_z y - log_z x - tau_{x,z} log_x y| < C delta

    Triples are drawn in a ball of radius 2 around a random center (pairwise
    distances below 4). The constant is unspecified, so the report carries
    the worst observed defect / delta and passes when it is finite.
    """
    results = _run_trials(_log_difference_trial, M, delta, trials, seed, n_jobs)
    report = MarginReport.from_trials(
        "log-difference",
        [r["ratio"] for r in results],
        results,
        explicit_bound=False,
        details={
            "delta": delta,
            "worst_defect": max((r["defect"] for r in results), default=0.0),
            "max_sample_radius": max((r["radius"] for r in results), default=0.0),
        },
    )
    logger.info(f"log difference on {M.name}: empirical C = {report.worst_ratio:.6g}")
    return report


def log_difference_sweep(
    models: Sequence[Tuple[float, ManifoldModel]], trials: int, seed: int, n_jobs: int = 1
) -> Tuple[List[MarginReport], PowerLawFit]:
    """
    Run check_log_difference over (delta, model) pairs and fit worst defect against delta

    The defect is expected to vanish linearly, i.e. a fitted exponent near 1.
    """
    reports = [check_log_difference(M, delta, trials, seed, n_jobs) for delta, M in models]
    fit = fit_power_law([delta for delta, _ in models], [r.details["worst_defect"] for r in reports])
    return reports, fit
