"""Distortion, differential and injectivity audits of the glued map"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, computed_field
from scipy.spatial import cKDTree

from src.exceptions import ConvergenceError, GeometryError
from src.geodesics.bvp import distance
from src.geodesics.frames import random_unit_vector
from src.gluing.glued_map import (
    GluedMap,
    KarcherResult,
    active_terms,
    finite_difference_differential,
    finite_difference_hessians,
    hessians_at,
    karcher_solve,
)
from src.linalg.basis import LinearMap, distance_to_isometry, operator_norm
from src.manifolds.core import exp_map
from src.manifolds.types import PointOnManifold
from src.nets.net_builder import wrap_ambient

logger = logging.getLogger(__name__)

MAX_EXAMPLES = 20
MIN_PAIR_FRACTION = 0.05
DIFFERENTIAL_AGREEMENT = 1e-2
SYMMETRY_TOLERANCE = 1e-8


def _solve(gm: GluedMap, x: PointOnManifold) -> Tuple[Optional[KarcherResult], Optional[str]]:
    try:
        return karcher_solve(gm, x), None
    except (GeometryError, ConvergenceError) as e:
        return None, f"{type(e).__name__}: {e}"


def evaluate_glued_map(
    gm: GluedMap, points: Sequence[PointOnManifold], n_jobs: int = 1
) -> List[Tuple[Optional[KarcherResult], Optional[str]]]:
    """
    Solve for h at every point; results keep the order of ``points``

    Threads share the chart cache of ``gm``; per-point failures are returned
    as messages instead of raised.
    """
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_solve)(gm, x) for x in points)


def trace_frame(results: Sequence[Optional[KarcherResult]]) -> pd.DataFrame:
    """Per-sample trace: x, h(x), active chart count, iterations, gradient norm"""
    rows = []
    for k, result in enumerate(results):
        if result is None:
            continue
        row: Dict[str, Any] = {"sample": k, "x_chart": result.x.chart}
        row.update({f"x_{j}": float(c) for j, c in enumerate(result.x.coords)})
        row["h_chart"] = result.point.chart
        row.update({f"h_{j}": float(c) for j, c in enumerate(result.point.coords)})
        row.update(
            {
                "active": result.active,
                "iterations": result.iterations,
                "gradient_norm": result.gradient_norm,
                "objective": result.objective,
                "max_image_distance": result.max_image_distance,
            }
        )
        rows.append(row)
    return pd.DataFrame(rows)


class LipschitzReport(BaseModel):
    """Sampled bi-Lipschitz distortion of h"""

    pairs: int
    evaluated: int
    max_pair_distance: float
    max_ratio: float
    min_ratio: float
    d_lip_estimate: float
    differential_samples: int = 0
    max_isometry_defect: float = 0.0
    mean_isometry_defect: float = 0.0
    failures: List[Dict[str, Any]] = Field(default_factory=list)


def _pair_partners(gm: GluedMap, pair_count: int, max_pair_distance: float, seed: int):
    V = gm.source
    rng = np.random.default_rng(seed)
    points = V.sample_points(rng, pair_count)
    partners = []
    for x in points:
        r = max_pair_distance * rng.uniform(MIN_PAIR_FRACTION, 1.0)
        partners.append(exp_map(V, x, random_unit_vector(V, x, rng).scaled(r)))
    return points, partners


def measure_lipschitz(
    gm: GluedMap,
    pair_count: int,
    max_pair_distance: float = 1.0,
    seed: int = 0,
    differential_samples: Optional[int] = None,
    n_jobs: int = 1,
) -> LipschitzReport:
    """
    Distance ratios dist_W(h x, h x') / dist_V(x, x') over seeded pairs

    Pairs are x uniform on V and x' = exp_x(r u) with r up to
    ``max_pair_distance``. The d_Lip estimate is ln(max(max ratio, 1 / min ratio));
    the isometry defect of dh is measured on the first ``differential_samples``
    base points (at most 20 by default).

    Returns:
        LipschitzReport with per-point failures listed
    """
    V, W = gm.source, gm.target
    points, partners = _pair_partners(gm, pair_count, max_pair_distance, seed)
    results = evaluate_glued_map(gm, list(points) + list(partners), n_jobs)
    failures: List[Dict[str, Any]] = []
    ratios: List[float] = []
    for k in range(pair_count):
        (first, first_error), (second, second_error) = results[k], results[pair_count + k]
        if first is None or second is None:
            failures.append({"pair": k, "error": first_error or second_error})
            continue
        try:
            base = distance(V, points[k], partners[k])
            moved = distance(W, first.point, second.point)
        except (GeometryError, ConvergenceError) as e:
            failures.append({"pair": k, "error": f"{type(e).__name__}: {e}"})
            continue
        if base > 0:
            ratios.append(moved / base)

    differential_samples = min(pair_count, 20) if differential_samples is None else differential_samples
    defects = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_isometry_defect)(gm, points[k]) for k in range(min(differential_samples, pair_count))
    )
    for k, (defect, error) in enumerate(defects):
        if error is not None:
            failures.append({"differential": k, "error": error})
    measured = [d for d, error in defects if error is None]

    if ratios:
        max_ratio, min_ratio = max(ratios), min(ratios)
        estimate = math.log(max(max_ratio, 1.0 / min_ratio)) if min_ratio > 0 else math.inf
    else:
        max_ratio = min_ratio = estimate = math.nan
    report = LipschitzReport(
        pairs=pair_count,
        evaluated=len(ratios),
        max_pair_distance=max_pair_distance,
        max_ratio=max_ratio,
        min_ratio=min_ratio,
        d_lip_estimate=estimate,
        differential_samples=len(measured),
        max_isometry_defect=max(measured, default=0.0),
        mean_isometry_defect=float(np.mean(measured)) if measured else 0.0,
        failures=failures,
    )
    logger.info(
        f"Distortion of h over {len(ratios)} pairs: ratios in [{min_ratio:.9g}, {max_ratio:.9g}], "
        f"d_Lip estimate {estimate:.6g}, {len(failures)} failures"
    )
    return report


def _isometry_defect(gm: GluedMap, x: PointOnManifold) -> Tuple[float, Optional[str]]:
    try:
        hessians = hessians_at(gm, x)
        return distance_to_isometry(hessians.differential(-1.0)), None
    except (GeometryError, ConvergenceError) as e:
        return math.nan, f"{type(e).__name__}: {e}"


class CollisionReport(BaseModel):
    """Sampled injectivity and surjectivity findings for h"""

    samples: int
    evaluated: int
    lower_ratio: float
    collision_radius: float
    candidate_pairs: int
    collisions: int
    examples: List[Dict[str, Any]] = Field(default_factory=list)
    surjectivity_probes: int
    uncovered: int
    max_preimage_gap: float
    failures: List[Dict[str, Any]] = Field(default_factory=list)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return self.collisions == 0 and self.uncovered == 0


def injectivity_audit(
    gm: GluedMap,
    sample_count: int,
    seed: int,
    lower_ratio: Optional[float] = None,
    collision_radius: Optional[float] = None,
    surjectivity_probes: int = 1000,
    n_jobs: int = 1,
) -> CollisionReport:
    """
    Look for near-collisions of h on seeded samples and for uncovered targets

    Image pairs closer than ``collision_radius`` (epsilon by default) are
    candidates; a pair is a collision when dist_W(h x1, h x2) is below half
    of lower_ratio * dist_V(x1, x2). ``lower_ratio`` is the measured lower
    bi-Lipschitz ratio, 1 when not given. A random target of W is uncovered
    when no sample image lies within 3 epsilon of it.
    """
    V, W = gm.source, gm.target
    epsilon = gm.charts.epsilon
    lower = 1.0 if lower_ratio is None or not math.isfinite(lower_ratio) else lower_ratio
    radius = epsilon if collision_radius is None else collision_radius
    rng = np.random.default_rng(seed)
    samples = V.sample_points(rng, sample_count)
    results = evaluate_glued_map(gm, samples, n_jobs)
    failures = [{"sample": k, "error": error} for k, (result, error) in enumerate(results) if result is None]
    kept = [k for k, (result, _) in enumerate(results) if result is not None]
    images = [results[k][0].point for k in kept]

    collisions: List[Dict[str, Any]] = []
    candidate_count = 0
    uncovered = 0
    worst_gap = 0.0
    probes = W.sample_points(rng, surjectivity_probes)
    if images:
        rows = wrap_ambient(W, W.to_ambient(images))
        tree = cKDTree(rows, boxsize=W.ambient_boxsize())
        reach = float(W.distance_to_ambient(radius)) * 1.1
        for a, b in sorted(tree.query_pairs(reach)):
            try:
                moved = distance(W, images[a], images[b])
                if moved >= radius:
                    continue
                candidate_count += 1
                base = distance(V, samples[kept[a]], samples[kept[b]])
            except (GeometryError, ConvergenceError) as e:
                failures.append({"pair": [kept[a], kept[b]], "error": f"{type(e).__name__}: {e}"})
                continue
            if moved < 0.5 * lower * base:
                collisions.append({"samples": [kept[a], kept[b]], "image_distance": moved, "source_distance": base})

        neighbours = min(4, len(images))
        _, index = tree.query(wrap_ambient(W, W.to_ambient(probes)), k=neighbours)
        index = np.asarray(index).reshape(len(probes), neighbours)
        for probe, candidates in zip(probes, index):
            gap = min(distance(W, probe, images[int(j)]) for j in candidates)
            worst_gap = max(worst_gap, gap)
            if gap > 3 * epsilon:
                uncovered += 1
    else:
        uncovered = surjectivity_probes
        worst_gap = math.inf

    report = CollisionReport(
        samples=sample_count,
        evaluated=len(images),
        lower_ratio=lower,
        collision_radius=radius,
        candidate_pairs=candidate_count,
        collisions=len(collisions),
        examples=collisions[:MAX_EXAMPLES],
        surjectivity_probes=surjectivity_probes,
        uncovered=uncovered,
        max_preimage_gap=worst_gap,
        failures=failures,
    )
    logger.info(
        f"Injectivity audit over {len(images)} samples: {len(collisions)} collisions among {candidate_count} "
        f"close pairs, {uncovered} of {surjectivity_probes} targets uncovered"
    )
    return report


class DifferentialAudit(BaseModel):
    """Analytic dh against finite differences, and the Hessian bounds, over sampled points"""

    points: int
    evaluated: int
    delta: float
    resolved_sign: str
    negative_votes: int
    positive_votes: int
    max_agreement_error: float
    max_asymmetry: float
    min_eigenvalue: float
    max_hessian_defect: float
    max_pairing_defect: float
    max_isometry_defect: float
    max_hessian_fd_error: Optional[float] = None
    failures: List[Dict[str, Any]] = Field(default_factory=list)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return (
            self.evaluated > 0
            and self.max_agreement_error <= DIFFERENTIAL_AGREEMENT
            and self.max_asymmetry <= SYMMETRY_TOLERANCE
            and self.min_eigenvalue > 0.0
        )


def _differential_point(gm: GluedMap, x: PointOnManifold, hessian_check: bool) -> Dict[str, Any]:
    result = karcher_solve(gm, x)
    terms = active_terms(gm, result.x, with_differentials=True)
    hessians = hessians_at(gm, result.x, result.point, terms)
    negative = hessians.differential(-1.0).matrix
    numeric = finite_difference_differential(gm, result.x, result.point)
    metrics = (hessians.metric_x, hessians.metric_y)
    eigenvalues = hessians.eigenvalues()
    entry = {
        "negative_error": operator_norm(LinearMap(negative - numeric, *metrics)),
        "positive_error": operator_norm(LinearMap(-negative - numeric, *metrics)),
        "asymmetry": hessians.asymmetry,
        "min_eigenvalue": float(np.min(eigenvalues)),
        "hessian_defect": float(np.max(np.abs(eigenvalues - 1.0))),
        "pairing_defect": distance_to_isometry(hessians.pairing_map()),
        "isometry_defect": distance_to_isometry(LinearMap(negative, *metrics)),
    }
    if hessian_check:
        d2_star, d2_star_star = finite_difference_hessians(gm, result.x, result.point)
        scale = max(float(np.max(np.abs(hessians.d2_star))), 1.0)
        entry["hessian_fd_error"] = (
            max(
                float(np.max(np.abs(d2_star - hessians.d2_star))),
                float(np.max(np.abs(d2_star_star - hessians.d2_star_star))),
            )
            / scale
        )
    return entry


def _safe_differential_point(gm: GluedMap, x: PointOnManifold, hessian_check: bool) -> Dict[str, Any]:
    try:
        return _differential_point(gm, x, hessian_check)
    except (GeometryError, ConvergenceError) as e:
        return {"error": f"{type(e).__name__}: {e}"}


def audit_differentials(
    gm: GluedMap, points: int, seed: int, hessian_check: bool = True, n_jobs: int = 1
) -> DifferentialAudit:
    """
    Cross-check dh = -(d2_star)^-1 d2_star_star against central differences of h

    Both signs are compared at every point; the resolved sign is the one
    closer to the finite differences at the majority of points. Also records
    the symmetry and smallest eigenvalue of d2_star, the distance of d2_star
    from the metric and of d2_star_star from an isometric pairing, and
    optionally the finite-difference error of both Hessian blocks.
    """
    V = gm.source
    rng = np.random.default_rng(seed)
    samples = V.sample_points(rng, points)
    entries = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_safe_differential_point)(gm, x, hessian_check) for x in samples
    )
    failures = [{"point": k, "error": e["error"]} for k, e in enumerate(entries) if "error" in e]
    good = [e for e in entries if "error" not in e]
    negative_votes = sum(1 for e in good if e["negative_error"] <= e["positive_error"])
    positive_votes = len(good) - negative_votes
    if not good:
        sign = "unresolved"
    else:
        sign = "negative" if negative_votes >= positive_votes else "positive"
    key = "negative_error" if sign != "positive" else "positive_error"
    audit = DifferentialAudit(
        points=points,
        evaluated=len(good),
        delta=gm.delta,
        resolved_sign=sign,
        negative_votes=negative_votes,
        positive_votes=positive_votes,
        max_agreement_error=max((e[key] for e in good), default=math.inf),
        max_asymmetry=max((e["asymmetry"] for e in good), default=0.0),
        min_eigenvalue=min((e["min_eigenvalue"] for e in good), default=math.nan),
        max_hessian_defect=max((e["hessian_defect"] for e in good), default=0.0),
        max_pairing_defect=max((e["pairing_defect"] for e in good), default=0.0),
        max_isometry_defect=max((e["isometry_defect"] for e in good), default=0.0),
        max_hessian_fd_error=max((e["hessian_fd_error"] for e in good), default=0.0) if hessian_check else None,
        failures=failures,
    )
    if sign == "positive":
        logger.warning("Finite differences favour dh = +(d2_star)^-1 d2_star_star")
    logger.info(
        f"Differential audit over {len(good)} points: sign {sign}, agreement {audit.max_agreement_error:.3g}, "
        f"min eigenvalue {audit.min_eigenvalue:.6g}"
    )
    return audit
