"""Numerical checks that charts respect the net, are near-isometric and agree on overlaps"""

import logging
import math
from typing import Any, Dict, List

import numpy as np

from src.charts.local_chart import LocalChart, apply_chart, chart_with_differential, sample_domain
from src.estimates.margin_report import MarginReport
from src.exceptions import GeometryError
from src.geodesics.bvp import distance, log_map, transport
from src.linalg.basis import LinearMap, distance_to_isometry, operator_norm
from src.manifolds.types import TangentAtPoint
from src.nets.correspondence import Correspondence
from src.nets.net_builder import Net

logger = logging.getLogger(__name__)

MAX_DRAWS_PER_SAMPLE = 20


def check_chart_respects_net(
    chart: LocalChart, netV: Net, chi: Correspondence, radius: float = 2.0
) -> MarginReport:
    """
    Measure |L(log_v e') - log_w chi(e')| over net points e' with dist(e', v) < radius

    The defect vanishes on the basis points e_k by construction; the report
    carries the worst defect / delta as an empirical constant.
    """
    V, W = chart.source, chart.target
    g_w = W.metric_at(chart.image_center)
    instances: List[Dict[str, Any]] = []
    ratios: List[float] = []
    for j, _ in netV.within(chart.center, radius):
        predicted = chart.L(log_map(V, chart.center, netV.points[j]).components)
        actual = log_map(W, chart.image_center, chi.images[j]).components
        gap = predicted - actual
        defect = math.sqrt(max(float(gap @ g_w @ gap), 0.0))
        ratios.append(defect / chart.delta)
        instances.append({"chart": chart.index, "net_point": j, "defect": defect})
    report = MarginReport.from_trials(
        "chart-respects-net",
        ratios,
        instances,
        explicit_bound=False,
        details={
            "chart": chart.index,
            "delta": chart.delta,
            "points": len(ratios),
            "worst_defect": max((r["defect"] for r in instances), default=0.0),
        },
    )
    logger.debug(f"Chart {chart.index} respects the net up to {report.worst_ratio:.6g} delta")
    return report


def check_chart_lipschitz(chart: LocalChart, samples: int, seed: int) -> MarginReport:
    """
    Bi-Lipschitz ratio of phi on sampled pairs of its domain and isometry defect of d_x phi

    Each sample draws x, x' in the domain; the stretch is the larger of
    dist_W(phi x, phi x') / dist_V(x, x') and its inverse. The report carries
    max((stretch - 1) / delta, |d_x phi - isometry| / delta).
    """
    V, W = chart.source, chart.target
    rng = np.random.default_rng(seed)
    ratios: List[float] = []
    instances: List[Dict[str, Any]] = []
    worst_stretch = 1.0
    worst_isometry = 0.0
    for k in range(samples):
        x, x_other = sample_domain(chart, rng, 2)
        image, differential = chart_with_differential(chart, x)
        image_other = apply_chart(chart, x_other)
        base = distance(V, x, x_other)
        if base <= 0.0:
            continue
        moved = distance(W, image, image_other)
        stretch = max(moved / base, base / moved) if moved > 0 else math.inf
        isometry = distance_to_isometry(differential)
        worst_stretch = max(worst_stretch, stretch)
        worst_isometry = max(worst_isometry, isometry)
        ratio = max((stretch - 1.0) / chart.delta, isometry / chart.delta)
        ratios.append(ratio)
        instances.append({"chart": chart.index, "sample": k, "stretch": stretch, "isometry_defect": isometry})
    report = MarginReport.from_trials(
        "chart-lipschitz",
        ratios,
        instances,
        explicit_bound=False,
        details={
            "chart": chart.index,
            "delta": chart.delta,
            "worst_stretch": worst_stretch,
            "worst_isometry_defect": worst_isometry,
            "center_isometry_defect": distance_to_isometry(chart.L),
        },
    )
    logger.debug(f"Chart {chart.index}: worst stretch {worst_stretch:.9g}, isometry defect {worst_isometry:.3g}")
    return report


def _transport_matrix(chart: LocalChart, start, end) -> np.ndarray:
    W = chart.target
    columns = [transport(W, start, end, TangentAtPoint(start, e)).components for e in np.eye(W.dimension)]
    return np.column_stack(columns)


def check_pairwise_closeness(chart1: LocalChart, chart2: LocalChart, samples: int, seed: int) -> MarginReport:
    """
    C0 and C1 closeness of two overlapping charts

    Over sampled x in both domains: dist(phi1 x, phi2 x) / delta and
    |tau o d_x phi1 - d_x phi2| / delta, tau the transport from phi1 x to
    phi2 x.

    Raises:
        GeometryError: if the centers are 4 epsilon or more apart
    """
    V = chart1.source
    W = chart1.target
    centers = distance(V, chart1.center, chart2.center)
    if centers >= chart1.radius:
        raise GeometryError(f"Charts {chart1.index} and {chart2.index} are {centers:.6g} apart, not overlapping")
    rng = np.random.default_rng(seed)
    delta = chart1.delta
    ratios: List[float] = []
    instances: List[Dict[str, Any]] = []
    worst_c0 = worst_c1 = 0.0
    draws = 0
    while len(ratios) < samples and draws < MAX_DRAWS_PER_SAMPLE * samples:
        draws += 1
        x = sample_domain(chart1, rng, 1)[0]
        if distance(V, x, chart2.center) > chart2.radius:
            continue
        first, d_first = chart_with_differential(chart1, x)
        second, d_second = chart_with_differential(chart2, x)
        c0 = distance(W, first, second)
        moved = _transport_matrix(chart1, first, second) @ d_first.matrix
        c1 = operator_norm(LinearMap(moved - d_second.matrix, d_second.source_metric, d_second.target_metric))
        worst_c0, worst_c1 = max(worst_c0, c0), max(worst_c1, c1)
        ratios.append(max(c0, c1) / delta)
        instances.append({"charts": [chart1.index, chart2.index], "c0": c0, "c1": c1})
    if len(ratios) < samples:
        logger.warning(
            f"Only {len(ratios)} of {samples} samples landed in the overlap of charts {chart1.index} and {chart2.index}"
        )
    return MarginReport.from_trials(
        "chart-closeness",
        ratios,
        instances,
        explicit_bound=False,
        details={
            "charts": [chart1.index, chart2.index],
            "delta": delta,
            "center_distance": centers,
            "worst_c0": worst_c0,
            "worst_c1": worst_c1,
            "worst_c0_ratio": worst_c0 / delta,
            "worst_c1_ratio": worst_c1 / delta,
        },
    )
