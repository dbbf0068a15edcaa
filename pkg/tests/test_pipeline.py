import json
import math

import numpy as np
import pandas as pd
import pytest
import yaml

from src.experiments.cli import build_parser, main
from src.experiments.config import (
    CorrespondenceSpec,
    ExperimentConfig,
    ExperimentSettings,
    ManifoldSpec,
    SampleSpec,
)
from src.experiments.pipeline import (
    ExperimentPipeline,
    SweepReport,
    child_seed,
    constants_table,
    headline,
    run,
)
from src.experiments.serialization import dump_json, dumps, load_json, to_jsonable
from src.experiments.tracking import log_run, run_parameters

SMALL_SAMPLES = SampleSpec(
    admissibility=20,
    net_probes=300,
    lemma_trials=6,
    chart_checks=3,
    chart_samples=3,
    overlap_pairs=2,
    partition_probes=50,
    gradient_probes=5,
    lipschitz_pairs=10,
    differential_samples=2,
    differential_points=2,
    injectivity_samples=400,
    surjectivity_probes=50,
    trace_samples=10,
)
BUILD_STAGES = ["net", "correspondence", "charts", "partition", "glue"]


@pytest.fixture
def settings():
    return ExperimentSettings(_env_file=None, mlflow_tracking_uri=None)


@pytest.fixture
def identity_config():
    torus = ManifoldSpec(model="flat_torus", period=8.0)
    return ExperimentConfig(name="identity", source=torus, target=torus, delta=0.25, samples=SMALL_SAMPLES)


def test_child_seeds_are_stable_and_distinct():
    assert child_seed(0, 1) == child_seed(0, 1)
    assert len({child_seed(0, k) for k in range(10)}) == 10
    assert child_seed(0, 1) != child_seed(1, 1)


def test_identity_run_passes_and_writes_outputs(identity_config, tmp_path, settings):
    report = run(identity_config, output_dir=tmp_path, settings=settings)
    assert report.passed
    assert [s.name for s in report.stages] == list(identity_config.stages)
    assert report.correspondence.distortion == pytest.approx(0.0, abs=1e-12)
    assert report.lipschitz.d_lip_estimate <= 1e-4
    assert report.injectivity.collisions == 0
    assert report.differentials.resolved_sign == "negative"
    assert report.glue.max_image_distance_over_delta < 1e-8
    assert "e-orthonormal-operator" in report.lemmas

    stored = load_json(tmp_path / "report.json")
    assert stored["passed"] is True
    assert stored["config_hash"] == identity_config.config_hash()
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert summary.loc[0, "stage_measure"] == "passed"
    traces = pd.read_csv(tmp_path / "traces.csv")
    assert len(traces) == SMALL_SAMPLES.trace_samples


def test_artifacts_are_cached_by_config_hash(identity_config, tmp_path, settings):
    pipeline = ExperimentPipeline(identity_config, tmp_path, settings)
    pipeline.execute(["net", "correspondence", "charts"])
    cache = tmp_path / "cache" / identity_config.config_hash()
    assert (cache / "net.json").exists()
    assert (cache / "correspondence.json").exists()
    assert (cache / "charts.json").exists()

    reloaded = ExperimentPipeline(identity_config, tmp_path, settings)
    assert reloaded.net.to_dict() == pipeline.net.to_dict()
    assert len(reloaded.charts) == len(pipeline.charts)


def test_runs_are_deterministic_across_workers(identity_config, tmp_path, settings):
    serial = ExperimentPipeline(identity_config.model_copy(update={"n_jobs": 1}), tmp_path / "a", settings, False)
    parallel = ExperimentPipeline(identity_config.model_copy(update={"n_jobs": 2}), tmp_path / "b", settings, False)
    first = serial.execute(BUILD_STAGES)
    second = parallel.execute(BUILD_STAGES)
    assert parallel.n_jobs == 2
    assert dumps(first.deterministic_payload()) == dumps(second.deterministic_payload())
    assert set(first.timings) == set(BUILD_STAGES)


def test_failed_stage_skips_its_dependents(identity_config, tmp_path, settings):
    config = identity_config.model_copy(update={"correspondence": CorrespondenceSpec(kind="brute_force")})
    report = ExperimentPipeline(config, tmp_path, settings, use_cache=False).execute(BUILD_STAGES)
    statuses = {s.name: s.status for s in report.stages}
    assert statuses == {
        "net": "succeeded",
        "correspondence": "failed",
        "charts": "skipped",
        "partition": "succeeded",
        "glue": "skipped",
    }
    assert "ValueError" in report.stage("correspondence").cause
    assert report.stage("glue").cause == "depends on failed stage charts"
    assert not report.passed


def test_failed_checks_do_not_block_later_stages(tmp_path, settings):
    short = ManifoldSpec(model="flat_torus", period=6.0)
    config = ExperimentConfig(source=short, target=short, samples=SMALL_SAMPLES)
    report = ExperimentPipeline(config, tmp_path, settings, use_cache=False).execute(["admissibility", "net"])
    assert report.stage("admissibility").status == "succeeded"
    assert not report.stage("admissibility").passed
    assert report.stage("net").status == "succeeded"
    assert not report.admissibility["V"].injectivity_ok


def test_scaled_target_reports_its_distortion(tmp_path, settings):
    config = ExperimentConfig(
        name="scaled",
        source=ManifoldSpec(period=8.0),
        target=ManifoldSpec(period=8.0, scale=1.02),
        samples=SMALL_SAMPLES,
    )
    report = ExperimentPipeline(config, tmp_path, settings, use_cache=False).execute(
        ["net", "correspondence", "charts", "partition", "glue", "measure"]
    )
    assert report.lipschitz.d_lip_estimate == pytest.approx(math.log(1.02), abs=1e-6)
    assert report.charts.max_l_isometry_defect == pytest.approx(0.02, abs=1e-9)
    assert report.constants["d_lip / epsilon"] == pytest.approx(math.log(1.02) / 0.5, abs=1e-5)
    row = headline(report)
    assert row["stage_charts"] in {"passed", "checks_failed"}
    assert row["d_lip_estimate"] == pytest.approx(math.log(1.02), abs=1e-6)


def test_constants_table_of_an_empty_report(identity_config):
    report = ExperimentPipeline(identity_config, "unused").execute([])
    assert report.stages == []
    assert not report.passed
    assert constants_table(report) == {}


def test_unknown_stage_is_rejected(identity_config):
    with pytest.raises(ValueError):
        ExperimentPipeline(identity_config, "unused").execute(["smooth"])


def test_sweep_report_needs_decreasing_trend():
    report = SweepReport(name="s", deltas=[0.25, 0.09], rows=[], decreasing=False, all_passed=True)
    assert not report.lipschitz_exponent_ok
    assert not report.passed


def test_non_finite_values_serialize_as_strings(tmp_path):
    assert to_jsonable({"a": math.nan, "b": -math.inf, "c": np.float64(0.1), "d": np.array([1, 2])}) == {
        "a": "nan",
        "b": "-inf",
        "c": 0.1,
        "d": [1, 2],
    }
    path = dump_json({"x": np.int64(3)}, tmp_path / "nested" / "value.json")
    assert json.loads(path.read_text()) == {"x": 3}


def test_tracking_is_off_without_a_uri(identity_config, settings):
    assert not log_run(identity_config, {"d_lip_estimate": 0.1}, settings)
    assert run_parameters(identity_config)["config_hash"] == identity_config.config_hash()


def test_tracking_logs_to_a_local_store(identity_config, tmp_path):
    settings = ExperimentSettings(_env_file=None, mlflow_tracking_uri=(tmp_path / "mlruns").as_uri())
    assert log_run(identity_config, {"d_lip_estimate": 0.1, "collisions": math.nan}, settings)


def _write_config(tmp_path, config: ExperimentConfig):
    path = tmp_path / "experiment.yaml"
    payload = config.model_dump(mode="json", exclude={"epsilon"})
    path.write_text(yaml.safe_dump({"experiment": payload}))
    return path


def test_cli_net_command_succeeds(identity_config, tmp_path, monkeypatch):
    monkeypatch.delenv("LIPSCHITZ_MLFLOW_TRACKING_URI", raising=False)
    path = _write_config(tmp_path, identity_config)
    assert main(["net", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    stored = load_json(tmp_path / "out" / "report.json")
    assert [s["name"] for s in stored["stages"]] == ["admissibility", "net", "correspondence"]


def test_cli_returns_one_on_failed_checks(tmp_path, monkeypatch):
    monkeypatch.delenv("LIPSCHITZ_MLFLOW_TRACKING_URI", raising=False)
    short = ManifoldSpec(model="flat_torus", period=6.0)
    path = _write_config(tmp_path, ExperimentConfig(source=short, target=short, samples=SMALL_SAMPLES))
    assert main(["net", "--config", str(path), "--out", str(tmp_path / "out"), "--stage", "admissibility"]) == 1


def test_cli_returns_one_on_missing_config(tmp_path):
    assert main(["report", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_parser_accepts_repeated_stages():
    args = build_parser().parse_args(["report", "--stage", "net", "--stage", "glue", "--seed", "4"])
    assert args.stage == ["net", "glue"]
    assert args.seed == 4
    with pytest.raises(SystemExit):
        build_parser().parse_args(["report", "--stage", "smooth"])
