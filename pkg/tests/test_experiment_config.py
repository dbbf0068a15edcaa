from pathlib import Path

import pytest
from pydantic import ValidationError

from src.experiments.config import (
    ExperimentConfig,
    ExperimentSettings,
    ManifoldSpec,
    SeedSpec,
    expand_placeholders,
    load_config,
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


def test_epsilon_is_root_delta():
    assert ExperimentConfig(delta=0.16).epsilon == pytest.approx(0.4)


@pytest.mark.parametrize("delta", [0.0, -0.1, 0.3])
def test_delta_outside_range_is_rejected(delta):
    with pytest.raises(ValidationError):
        ExperimentConfig(delta=delta)


def test_unknown_stage_is_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig(stages=["net", "smooth"])


def test_bad_sweep_delta_is_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig(sweep_deltas=[0.25, 0.5])


def test_ellipsoid_needs_matching_axes():
    with pytest.raises(ValidationError):
        ManifoldSpec(model="ellipsoid", axes=[1.0, 1.0])
    with pytest.raises(ValidationError):
        ManifoldSpec(model="graph_surface")


def test_hash_ignores_non_semantic_fields():
    base = ExperimentConfig()
    moved = ExperimentConfig(output_dir="/tmp/elsewhere", n_jobs=8, stages=["net"])
    assert base.config_hash() == moved.config_hash()


def test_hash_changes_with_semantic_fields():
    base = ExperimentConfig()
    assert base.config_hash() != ExperimentConfig(delta=0.16).config_hash()
    assert base.config_hash() != base.with_seed(5).config_hash()
    assert base.config_hash() != ExperimentConfig(target=ManifoldSpec(scale=1.02)).config_hash()


def test_with_delta_clears_the_sweep():
    config = ExperimentConfig(sweep_deltas=[0.25, 0.16])
    single = config.with_delta(0.16)
    assert single.delta == 0.16
    assert single.sweep_deltas == []
    assert config.sweep_deltas == [0.25, 0.16]


def test_seed_streams_follow_the_base_seed():
    assert SeedSpec.from_base(10) == SeedSpec(net=10, sampling=11, trials=12)


def test_placeholders_use_environment_or_default(monkeypatch):
    monkeypatch.setenv("LIPSCHITZ_TEST_VALUE", "7")
    monkeypatch.delenv("LIPSCHITZ_TEST_MISSING", raising=False)
    text = "a: ${LIPSCHITZ_TEST_VALUE}\nb: ${LIPSCHITZ_TEST_MISSING:-3}"
    assert expand_placeholders(text) == "a: 7\nb: 3"


def test_placeholder_without_default_must_be_set(monkeypatch):
    monkeypatch.delenv("LIPSCHITZ_TEST_MISSING", raising=False)
    with pytest.raises(ValueError):
        expand_placeholders("a: ${LIPSCHITZ_TEST_MISSING}")


def test_load_config_from_file(tmp_path, monkeypatch):
    monkeypatch.setenv("LIPSCHITZ_TEST_DELTA", "0.16")
    path = tmp_path / "experiment.yaml"
    path.write_text(
        "experiment:\n"
        "  name: scaled\n"
        "  delta: ${LIPSCHITZ_TEST_DELTA}\n"
        "  target:\n"
        "    model: flat_torus\n"
        "    scale: 1.02\n"
    )
    config = load_config(path)
    assert config.name == "scaled"
    assert config.delta == pytest.approx(0.16)
    assert config.target.scale == pytest.approx(1.02)


def test_load_config_without_wrapper_key(tmp_path):
    path = tmp_path / "plain.yaml"
    path.write_text("name: plain\ndelta: 0.09\n")
    assert load_config(path).name == "plain"


def test_load_config_reports_invalid_files(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("experiment:\n  delta: 0.9\n")
    with pytest.raises(ValidationError):
        load_config(path)


def test_shipped_configurations_load(monkeypatch):
    monkeypatch.delenv("LIPSCHITZ_SEED", raising=False)
    monkeypatch.delenv("LIPSCHITZ_N_JOBS", raising=False)
    default = load_config(CONFIG_DIR / "config.yaml")
    assert default.name == "identity"
    assert default.source.period == 8
    assert default.n_jobs == 1
    for path in sorted((CONFIG_DIR / "experiments").glob("*.yaml")):
        assert load_config(path).delta <= 0.25


def test_settings_read_the_prefixed_environment(monkeypatch):
    monkeypatch.setenv("LIPSCHITZ_N_JOBS", "3")
    monkeypatch.setenv("LIPSCHITZ_LOG_LEVEL", "DEBUG")
    settings = ExperimentSettings(_env_file=None)
    assert settings.n_jobs == 3
    assert settings.log_level == "DEBUG"
    assert settings.mlflow_tracking_uri is None
