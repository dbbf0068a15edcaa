"""Staged experiment pipeline: net, correspondence, charts, partition, glue, measure, lemma checks"""

import logging
import math
import time
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, computed_field

from src.charts.atlas import ChartSet
from src.charts.local_chart import apply_chart, chart_differential
from src.charts.verification import check_chart_lipschitz, check_chart_respects_net, check_pairwise_closeness
from src.estimates.comparison import check_dexp_transport, check_log_difference, check_rauch
from src.estimates.margin_report import MarginReport
from src.estimates.scaling import PowerLawFit, fit_power_law
from src.experiments.config import STAGES, ExperimentConfig, ExperimentSettings
from src.experiments.serialization import dump_json, load_json, write_csv
from src.experiments.tracking import log_run
from src.geodesics.bvp import distance
from src.gluing.audit import (
    CollisionReport,
    DifferentialAudit,
    LipschitzReport,
    audit_differentials,
    evaluate_glued_map,
    injectivity_audit,
    measure_lipschitz,
    trace_frame,
)
from src.gluing.glued_map import GluedMap
from src.gluing.partition import PartitionAudit, PartitionOfUnity, check_partition
from src.linalg.basis import check_lemma_e_orthonormal
from src.manifolds.base import ManifoldModel
from src.manifolds.core import admissibility
from src.manifolds.factory import build_model
from src.manifolds.types import AdmissibilityReport
from src.nets.correspondence import (
    Correspondence,
    brute_force_match,
    coordinate_identity,
    effective_delta,
    oracle_correspondence,
)
from src.nets.net_builder import Net, build_net, validate_net

logger = logging.getLogger(__name__)

DEPENDENCIES: Dict[str, Sequence[str]] = {
    "admissibility": (),
    "net": (),
    "correspondence": ("net",),
    "charts": ("net", "correspondence"),
    "partition": ("net",),
    "glue": ("charts", "partition"),
    "measure": ("glue",),
    "verify_lemmas": (),
}
NET_TOLERANCE = 1e-6
ROUNDTRIP_TOLERANCE = 1e-6
CENTER_DIFFERENTIAL_TOLERANCE = 1e-8
E_ORTHONORMALITY_FACTOR = 3.0
EXPECTED_LIPSCHITZ_EXPONENT = 0.5
LIPSCHITZ_EXPONENT_SLACK = 0.2
EXPECTED_CLOSENESS_EXPONENT = 1.0
CLOSENESS_EXPONENT_SLACK = 0.3


def child_seed(base: int, stream: int) -> int:
    """Independent seed for one consumer of a base seed"""
    return int(np.random.SeedSequence([base, stream]).generate_state(1)[0])


class StageResult(BaseModel):
    name: str
    status: Literal["succeeded", "failed", "skipped"]
    passed: bool = False
    cause: Optional[str] = None


class NetSummary(BaseModel):
    points: int
    epsilon: float
    separation: float
    covering_radius: float
    probes: int

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return (
            self.separation >= self.epsilon * (1 - NET_TOLERANCE)
            and self.covering_radius <= self.epsilon * (1 + NET_TOLERANCE)
        )


class CorrespondenceSummary(BaseModel):
    kind: str
    delta: float
    epsilon: float
    distortion: float
    covering_defect: float
    pairs: int
    max_pair_distance: float

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        # the image of an epsilon-net under a delta-approximation covers up to epsilon + delta
        covering_ok = math.isnan(self.covering_defect) or self.covering_defect <= self.epsilon + self.delta
        return self.distortion <= self.delta and covering_ok


class ChartSummary(BaseModel):
    """Per-chart construction invariants over the checked charts"""

    checked: List[int]
    overlapping_pairs: List[List[int]]
    max_e_orthonormality: float
    max_f_orthonormality: float
    max_basis_roundtrip: float
    max_center_differential_error: float
    max_l_isometry_defect: float

    @computed_field  # type: ignore[misc]
    @property
    def invariants_hold(self) -> bool:
        return (
            self.max_basis_roundtrip <= ROUNDTRIP_TOLERANCE
            and self.max_center_differential_error <= CENTER_DIFFERENTIAL_TOLERANCE
        )


class GlueSummary(BaseModel):
    samples: int
    evaluated: int
    max_iterations: int
    max_gradient_norm: float
    max_active_charts: int
    max_image_distance_over_delta: float
    non_monotone: int
    failures: List[Dict[str, Any]] = Field(default_factory=list)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return self.evaluated == self.samples and not self.failures


class ExperimentReport(BaseModel):
    """Everything measured by one run; stages that did not run leave their sections empty"""

    name: str
    config_hash: str
    delta: float
    epsilon: float
    stages: List[StageResult] = Field(default_factory=list)
    admissibility: Dict[str, AdmissibilityReport] = Field(default_factory=dict)
    net: Optional[NetSummary] = None
    correspondence: Optional[CorrespondenceSummary] = None
    effective_delta: Optional[float] = None
    lemmas: Dict[str, MarginReport] = Field(default_factory=dict)
    charts: Optional[ChartSummary] = None
    partition: Optional[PartitionAudit] = None
    glue: Optional[GlueSummary] = None
    lipschitz: Optional[LipschitzReport] = None
    injectivity: Optional[CollisionReport] = None
    differentials: Optional[DifferentialAudit] = None
    constants: Dict[str, float] = Field(default_factory=dict)
    timings: Dict[str, float] = Field(default_factory=dict)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return bool(self.stages) and all(s.status == "succeeded" and s.passed for s in self.stages)

    def stage(self, name: str) -> Optional[StageResult]:
        return next((s for s in self.stages if s.name == name), None)

    def deterministic_payload(self) -> Dict[str, Any]:
        """The report without wall-clock timings"""
        return self.model_dump(mode="python", exclude={"timings"})


class ExperimentPipeline:
    """
    Runs the selected stages of one experiment in order

    Artifacts (models, net, correspondence, charts, partition, glued map) are
    built on first use whether or not their own stage is selected. Nets,
    correspondences and charts are cached as JSON under
    ``<output_dir>/cache/<config hash>/``.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        output_dir: Union[str, Path],
        settings: Optional[ExperimentSettings] = None,
        use_cache: bool = True,
    ):
        self.config = config
        self.settings = settings or ExperimentSettings()
        self.output_dir = Path(output_dir)
        self.cache_dir = self.output_dir / "cache" / config.config_hash()
        self.use_cache = use_cache
        self.n_jobs = config.n_jobs if "n_jobs" in config.model_fields_set else self.settings.n_jobs
        self.traces: Optional[pd.DataFrame] = None
        self._failed: set = set()

    # artifacts

    @cached_property
    def source(self) -> ManifoldModel:
        return build_model(self.config.source.resolved(self.config.delta), self.config.delta)

    @cached_property
    def target(self) -> ManifoldModel:
        return build_model(self.config.target.resolved(self.config.delta), self.config.delta)

    def _cached(self, name: str) -> Optional[Any]:
        path = self.cache_dir / f"{name}.json"
        if self.use_cache and path.exists():
            logger.info(f"Loading cached {name} from {path}")
            return load_json(path)
        return None

    def _store(self, name: str, data: Dict[str, Any]):
        if self.use_cache:
            dump_json(data, self.cache_dir / f"{name}.json")

    @cached_property
    def net(self) -> Net:
        data = self._cached("net")
        if data is not None:
            return Net.from_dict(data, self.source)
        net = build_net(self.source, self.config.epsilon, self.config.seeds.net)
        self._store("net", net.to_dict())
        return net

    @cached_property
    def correspondence(self) -> Correspondence:
        data = self._cached("correspondence")
        if data is not None:
            return Correspondence.from_dict(data, self.net, self.target)
        spec = self.config.correspondence
        if spec.kind == "coordinate_identity":
            chi = oracle_correspondence(
                coordinate_identity(self.source, self.target),
                self.net,
                self.target,
                max_pair_distance=spec.max_pair_distance,
                max_pairs=spec.max_pairs,
                covering_probes=spec.covering_probes,
                seed=child_seed(self.config.seeds.sampling, 0),
            )
        else:
            chi = brute_force_match(self.net, build_net(self.target, self.config.epsilon, self.config.seeds.net))
        self._store("correspondence", chi.to_dict())
        return chi

    @cached_property
    def charts(self) -> ChartSet:
        data = self._cached("charts")
        if data is not None:
            return ChartSet.from_dict(data, self.net, self.correspondence, n_jobs=self.n_jobs)
        return ChartSet(self.net, self.correspondence, self.config.delta, n_jobs=self.n_jobs)

    @cached_property
    def partition(self) -> PartitionOfUnity:
        return PartitionOfUnity(self.net)

    @cached_property
    def glued_map(self) -> GluedMap:
        solver = self.config.solver
        return GluedMap(
            charts=self.charts,
            partition=self.partition,
            tolerance=solver.karcher_tolerance,
            max_iterations=solver.karcher_max_iterations,
            closeness_constant=solver.closeness_constant,
        )

    @cached_property
    def admissibility_reports(self) -> Dict[str, AdmissibilityReport]:
        seed = child_seed(self.config.seeds.sampling, 1)
        count = self.config.samples.admissibility
        return {
            "V": admissibility(self.source, self.config.delta, count, seed),
            "W": admissibility(self.target, self.config.delta, count, seed),
        }

    @cached_property
    def partition_audit(self) -> PartitionAudit:
        samples = self.config.samples
        return check_partition(
            self.partition,
            samples.partition_probes,
            child_seed(self.config.seeds.sampling, 2),
            gradient_probes=samples.gradient_probes,
        )

    def save_charts(self):
        if self.use_cache and "charts" in self.__dict__ and len(self.charts):
            self._store("charts", self.charts.to_dict())

    # stages

    def stage_admissibility(self, report: ExperimentReport) -> bool:
        report.admissibility = self.admissibility_reports
        return all(r.passed for r in report.admissibility.values())

    def stage_net(self, report: ExperimentReport) -> bool:
        probes = self.config.samples.net_probes
        separation, covering = validate_net(self.net, probes, child_seed(self.config.seeds.sampling, 3))
        report.net = NetSummary(
            points=len(self.net),
            epsilon=self.net.epsilon,
            separation=separation,
            covering_radius=covering,
            probes=probes,
        )
        return report.net.passed

    def stage_correspondence(self, report: ExperimentReport) -> bool:
        chi = self.correspondence
        report.correspondence = CorrespondenceSummary(
            kind=self.config.correspondence.kind,
            delta=self.config.delta,
            epsilon=self.config.epsilon,
            distortion=chi.distortion,
            covering_defect=chi.covering_defect,
            pairs=chi.pairs,
            max_pair_distance=chi.max_pair_distance,
        )
        curvature = max(r.curvature_bound for r in self.admissibility_reports.values())
        report.effective_delta = effective_delta(curvature, chi)
        if report.effective_delta > self.config.delta:
            logger.warning(f"Effective delta {report.effective_delta:.6g} exceeds the configured {self.config.delta}")
        return report.correspondence.passed

    def _checked_charts(self) -> List[int]:
        rng = np.random.default_rng(child_seed(self.config.seeds.sampling, 4))
        count = min(self.config.samples.chart_checks, len(self.net))
        return sorted(int(i) for i in rng.choice(len(self.net), size=count, replace=False))

    def _overlap_partners(self, checked: List[int]) -> List[List[int]]:
        rng = np.random.default_rng(child_seed(self.config.seeds.sampling, 5))
        radius = 4 * self.net.epsilon
        pairs: List[List[int]] = []
        for i in checked:
            if len(pairs) >= self.config.samples.overlap_pairs:
                break
            neighbours = [j for j, d in self.net.within(self.net.points[i], radius) if j != i and d < radius]
            if neighbours:
                pairs.append([i, int(neighbours[int(rng.integers(len(neighbours)))])])
        return pairs

    def stage_charts(self, report: ExperimentReport) -> bool:
        samples = self.config.samples
        checked = self._checked_charts()
        pairs = self._overlap_partners(checked)
        charts = self.charts
        charts.build(sorted(set(checked) | {j for pair in pairs for j in pair}))
        V, W = self.source, self.target
        chi = self.correspondence

        respects, lipschitz, closeness = [], [], []
        roundtrip = center_error = l_defect = e_defect = f_defect = 0.0
        for i in checked:
            chart = charts.chart(i)
            e_defect = max(e_defect, chart.e_orthonormality)
            f_defect = max(f_defect, chart.f_orthonormality)
            for k in chart.basis_indices:
                roundtrip = max(roundtrip, distance(W, apply_chart(chart, self.net.points[k]), chi.images[k]))
            at_center = chart_differential(chart, chart.center).matrix
            center_error = max(center_error, float(np.max(np.abs(at_center - chart.L.matrix))))
            respects.append(check_chart_respects_net(chart, self.net, chi))
            seed = child_seed(self.config.seeds.trials, i)
            lipschitz.append(check_chart_lipschitz(chart, samples.chart_samples, seed))
            l_defect = max(l_defect, lipschitz[-1].details["center_isometry_defect"])
        for i, j in pairs:
            closeness.append(
                check_pairwise_closeness(
                    charts.chart(i), charts.chart(j), samples.chart_samples, child_seed(self.config.seeds.trials, i)
                )
            )
        report.lemmas["chart-respects-net"] = MarginReport.combine("chart-respects-net", respects)
        report.lemmas["chart-lipschitz"] = MarginReport.combine("chart-lipschitz", lipschitz)
        if closeness:
            report.lemmas["chart-closeness"] = MarginReport.combine("chart-closeness", closeness)
        report.charts = ChartSummary(
            checked=checked,
            overlapping_pairs=pairs,
            max_e_orthonormality=e_defect,
            max_f_orthonormality=f_defect,
            max_basis_roundtrip=roundtrip,
            max_center_differential_error=center_error,
            max_l_isometry_defect=l_defect,
        )
        if e_defect > E_ORTHONORMALITY_FACTOR * self.net.epsilon:
            logger.warning(f"E bases are only {e_defect:.4g}-orthonormal at epsilon={self.net.epsilon}")
        reports = respects + lipschitz + closeness
        return (
            report.charts.invariants_hold
            and e_defect <= E_ORTHONORMALITY_FACTOR * self.net.epsilon
            and all(r.passed for r in reports)
        )

    def stage_partition(self, report: ExperimentReport) -> bool:
        report.partition = self.partition_audit
        return report.partition.passed

    def stage_glue(self, report: ExperimentReport) -> bool:
        count = self.config.samples.trace_samples
        rng = np.random.default_rng(child_seed(self.config.seeds.sampling, 6))
        points = self.source.sample_points(rng, count)
        evaluated = evaluate_glued_map(self.glued_map, points, self.n_jobs)
        results = [result for result, _ in evaluated]
        good = [r for r in results if r is not None]
        self.traces = trace_frame(results)
        delta = self.config.delta
        report.glue = GlueSummary(
            samples=count,
            evaluated=len(good),
            max_iterations=max((r.iterations for r in good), default=0),
            max_gradient_norm=max((r.gradient_norm for r in good), default=0.0),
            max_active_charts=max((r.active for r in good), default=0),
            max_image_distance_over_delta=max((r.max_image_distance for r in good), default=0.0) / delta,
            non_monotone=sum(1 for r in good if not r.monotone),
            failures=[{"sample": k, "error": error} for k, (result, error) in enumerate(evaluated) if result is None],
        )
        return report.glue.passed

    def stage_measure(self, report: ExperimentReport) -> bool:
        samples, solver = self.config.samples, self.config.solver
        base = self.config.seeds.sampling
        gm = self.glued_map
        report.lipschitz = measure_lipschitz(
            gm,
            samples.lipschitz_pairs,
            max_pair_distance=solver.max_pair_distance,
            seed=child_seed(base, 7),
            differential_samples=samples.differential_samples,
            n_jobs=self.n_jobs,
        )
        report.injectivity = injectivity_audit(
            gm,
            samples.injectivity_samples,
            child_seed(base, 8),
            lower_ratio=report.lipschitz.min_ratio,
            surjectivity_probes=samples.surjectivity_probes,
            n_jobs=self.n_jobs,
        )
        report.differentials = audit_differentials(
            gm, samples.differential_points, child_seed(base, 9), hessian_check=solver.hessian_check, n_jobs=self.n_jobs
        )
        lipschitz_ok = report.lipschitz.evaluated > 0 and math.isfinite(report.lipschitz.d_lip_estimate)
        return (
            lipschitz_ok
            and not report.lipschitz.failures
            and report.injectivity.passed
            and report.differentials.passed
        )

    def stage_verify_lemmas(self, report: ExperimentReport) -> bool:
        config = self.config
        trials, delta = config.samples.lemma_trials, config.delta
        seed = config.seeds.trials
        models = {"V": self.source}
        if config.target != config.source:
            models["W"] = self.target
        for label, M in models.items():
            report.lemmas[f"rauch-comparison/{label}"] = check_rauch(M, delta, trials, child_seed(seed, 0), self.n_jobs)
            report.lemmas[f"dexp-transport/{label}"] = check_dexp_transport(
                M, delta, trials, child_seed(seed, 1), self.n_jobs
            )
            report.lemmas[f"log-difference/{label}"] = check_log_difference(
                M, delta, trials, child_seed(seed, 2), self.n_jobs
            )
        n = self.source.dimension
        eps = config.solver.linear_eps if config.solver.linear_eps is not None else 1.0 / (4 * n)
        linear_delta = config.solver.linear_delta
        if linear_delta is None:
            linear_delta = min(delta, 1.0 / (16 * n * math.sqrt(n)))
        report.lemmas["e-orthonormal-operator"] = check_lemma_e_orthonormal(
            trials, n, eps, linear_delta, child_seed(seed, 3)
        )
        report.partition = self.partition_audit
        return all(r.passed for r in report.lemmas.values()) and report.partition.passed

    # orchestration

    def _run_stage(self, name: str, stage: Callable[[ExperimentReport], bool], report: ExperimentReport):
        blocked = [d for d in DEPENDENCIES[name] if d in self._failed]
        if blocked:
            logger.warning(f"Skipping stage {name}: stage {blocked[0]} failed")
            cause = f"depends on failed stage {blocked[0]}"
            report.stages.append(StageResult(name=name, status="skipped", cause=cause))
            self._failed.add(name)
            return
        logger.info(f"Running stage {name}")
        start = time.perf_counter()
        try:
            passed = stage(report)
        except Exception as e:
            logger.error(f"Error in stage {name}: {e}")
            report.stages.append(StageResult(name=name, status="failed", cause=f"{type(e).__name__}: {e}"))
            self._failed.add(name)
        else:
            report.stages.append(StageResult(name=name, status="succeeded", passed=bool(passed)))
            if not passed:
                logger.warning(f"Stage {name} finished but its checks did not pass")
        finally:
            report.timings[name] = time.perf_counter() - start

    def execute(self, stages: Optional[Sequence[str]] = None) -> ExperimentReport:
        """Run the selected stages (all configured stages by default) in pipeline order"""
        selected = set(self.config.stages if stages is None else stages)
        unknown = selected - set(STAGES)
        if unknown:
            raise ValueError(f"Unknown stages {sorted(unknown)}; expected a subset of {STAGES}")
        report = ExperimentReport(
            name=self.config.name,
            config_hash=self.config.config_hash(),
            delta=self.config.delta,
            epsilon=self.config.epsilon,
        )
        for name in STAGES:
            if name in selected:
                self._run_stage(name, getattr(self, f"stage_{name}"), report)
        report.constants = constants_table(report)
        self.save_charts()
        return report


def constants_table(report: ExperimentReport) -> Dict[str, float]:
    """Measured constants: each observed defect over delta or epsilon"""
    table: Dict[str, float] = {}
    for key, lemma in report.lemmas.items():
        if not lemma.explicit_bound:
            table[f"{key} C"] = lemma.worst_ratio
    closeness = report.lemmas.get("chart-closeness")
    if closeness is not None:
        table["chart-closeness C0"] = closeness.details.get("worst_c0_ratio", math.nan)
        table["chart-closeness C1"] = closeness.details.get("worst_c1_ratio", math.nan)
    if report.glue is not None:
        table["karcher closeness c"] = report.glue.max_image_distance_over_delta
    if report.lipschitz is not None:
        table["d_lip / epsilon"] = report.lipschitz.d_lip_estimate / report.epsilon
        table["dh isometry defect / epsilon"] = report.lipschitz.max_isometry_defect / report.epsilon
    if report.differentials is not None:
        table["hessian defect / delta"] = report.differentials.max_hessian_defect / report.delta
    if report.effective_delta is not None:
        table["effective delta / delta"] = report.effective_delta / report.delta
    return table


def headline(report: ExperimentReport) -> Dict[str, Any]:
    """One summary row: identity, pass flags per stage, and headline measurements"""
    row: Dict[str, Any] = {
        "name": report.name,
        "config_hash": report.config_hash,
        "delta": report.delta,
        "epsilon": report.epsilon,
        "passed": report.passed,
    }
    for stage in report.stages:
        if stage.status != "succeeded":
            row[f"stage_{stage.name}"] = stage.status
        else:
            row[f"stage_{stage.name}"] = "passed" if stage.passed else "checks_failed"
    row["net_points"] = report.net.points if report.net else None
    row["distortion"] = report.correspondence.distortion if report.correspondence else None
    row["effective_delta"] = report.effective_delta
    row["d_lip_estimate"] = report.lipschitz.d_lip_estimate if report.lipschitz else None
    row["max_isometry_defect"] = report.lipschitz.max_isometry_defect if report.lipschitz else None
    row["collisions"] = report.injectivity.collisions if report.injectivity else None
    row["min_hessian_eigenvalue"] = report.differentials.min_eigenvalue if report.differentials else None
    closeness = report.lemmas.get("chart-closeness")
    row["closeness_c0"] = closeness.details.get("worst_c0") if closeness else None
    row["closeness_c1"] = closeness.details.get("worst_c1") if closeness else None
    return row


def _resolve_output(config: ExperimentConfig, output_dir, settings: ExperimentSettings) -> Path:
    return Path(output_dir or config.output_dir or settings.output_dir)


def run(
    config: ExperimentConfig,
    stages: Optional[Sequence[str]] = None,
    output_dir: Optional[Union[str, Path]] = None,
    settings: Optional[ExperimentSettings] = None,
) -> ExperimentReport:
    """
    Run an experiment and write report.json, summary.csv and, when the glue stage ran, traces.csv

    Args:
        config: Validated experiment configuration
        stages: Stage subset (the configured stages by default)
        output_dir: Output directory (config, then LIPSCHITZ_OUTPUT_DIR, by default)
        settings: Environment settings

    Returns:
        ExperimentReport
    """
    settings = settings or ExperimentSettings()
    out = _resolve_output(config, output_dir, settings)
    logger.info(f"Experiment {config.name}: delta={config.delta}, epsilon={config.epsilon:.6g}, output {out}")
    pipeline = ExperimentPipeline(config, out, settings)
    report = pipeline.execute(stages)
    dump_json(report, out / "report.json")
    write_csv(pd.DataFrame([headline(report)]), out / "summary.csv")
    if pipeline.traces is not None:
        write_csv(pipeline.traces, out / "traces.csv")
    log_run(config, {k: v for k, v in headline(report).items() if isinstance(v, float)}, settings)
    logger.info(f"Experiment {config.name} {'passed' if report.passed else 'did not pass'}")
    return report


def verify_lemmas(
    config: ExperimentConfig,
    output_dir: Optional[Union[str, Path]] = None,
    settings: Optional[ExperimentSettings] = None,
) -> ExperimentReport:
    """Comparison, linear-algebra and partition checks only; no charts or gluing"""
    return run(config, stages=["verify_lemmas"], output_dir=output_dir, settings=settings)


class SweepReport(BaseModel):
    """Headline rows of a delta sweep and the fitted trends"""

    name: str
    deltas: List[float]
    rows: List[Dict[str, Any]]
    lipschitz_fit: Optional[PowerLawFit] = None
    closeness_fit: Optional[PowerLawFit] = None
    decreasing: bool = False
    all_passed: bool = False

    @computed_field  # type: ignore[misc]
    @property
    def lipschitz_exponent_ok(self) -> bool:
        if self.lipschitz_fit is None:
            return False
        return self.lipschitz_fit.within(EXPECTED_LIPSCHITZ_EXPONENT, LIPSCHITZ_EXPONENT_SLACK)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return self.all_passed and self.decreasing and self.lipschitz_exponent_ok


def _try_fit(xs: List[float], ys: List[Optional[float]], label: str) -> Optional[PowerLawFit]:
    pairs = [(x, y) for x, y in zip(xs, ys) if y is not None and math.isfinite(y) and y > 0]
    if len(pairs) < 2:
        logger.warning(f"Not enough positive {label} values for a power-law fit")
        return None
    try:
        return fit_power_law([x for x, _ in pairs], [y for _, y in pairs])
    except ValueError as e:
        logger.warning(f"Power-law fit of {label} failed: {e}")
        return None


def sweep(
    config: ExperimentConfig,
    output_dir: Optional[Union[str, Path]] = None,
    settings: Optional[ExperimentSettings] = None,
) -> SweepReport:
    """
    Run the pipeline at every sweep delta and fit d_Lip against delta

    Each delta gets its own sub-directory; trend.csv and sweep.json combine
    them. d_Lip is expected to decrease like sqrt(delta) and the chart
    closeness defects like delta.
    """
    settings = settings or ExperimentSettings()
    out = _resolve_output(config, output_dir, settings)
    deltas = sorted(config.sweep_deltas or [config.delta], reverse=True)
    reports = [run(config.with_delta(d), output_dir=out / f"delta_{d:g}", settings=settings) for d in deltas]
    rows = [headline(r) for r in reports]
    estimates = [row["d_lip_estimate"] for row in rows]
    finite = [e for e in estimates if e is not None and math.isfinite(e)]
    decreasing = len(finite) == len(estimates) and all(a > b for a, b in zip(finite, finite[1:]))
    result = SweepReport(
        name=config.name,
        deltas=deltas,
        rows=rows,
        lipschitz_fit=_try_fit(deltas, estimates, "d_Lip"),
        closeness_fit=_try_fit(deltas, [row["closeness_c0"] for row in rows], "chart closeness"),
        decreasing=decreasing,
        all_passed=all(r.passed for r in reports),
    )
    if result.closeness_fit is not None and not result.closeness_fit.within(
        EXPECTED_CLOSENESS_EXPONENT, CLOSENESS_EXPONENT_SLACK
    ):
        logger.warning(f"Chart closeness scales with exponent {result.closeness_fit.exponent:.3f}, not about 1")
    write_csv(pd.DataFrame(rows), out / "trend.csv")
    dump_json(result, out / "sweep.json")
    logger.info(
        f"Sweep over {deltas}: decreasing={decreasing}, "
        f"exponent {result.lipschitz_fit.exponent if result.lipschitz_fit else float('nan'):.4f}"
    )
    return result
