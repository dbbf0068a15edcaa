"""Experiment configuration: manifold pairs, correspondence, delta, seeds and sample counts"""

import hashlib
import json
import logging
import math
import os
import re
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, computed_field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

STAGES = ("admissibility", "net", "correspondence", "charts", "partition", "glue", "measure", "verify_lemmas")
MAX_DELTA = 0.25
NON_SEMANTIC_FIELDS = {"output_dir", "stages", "n_jobs"}

_PLACEHOLDER = re.compile(r"\$\{(?P<name>[A-Za-z_][A-Za-z0-9_]*)(?::-(?P<default>[^}]*))?\}")


class ExperimentSettings(BaseSettings):
    """Environment-level settings (LIPSCHITZ_ prefix, .env file)"""

    model_config = SettingsConfigDict(env_prefix="LIPSCHITZ_", env_file=".env", extra="ignore")

    output_dir: str = "./results"
    log_level: str = "INFO"
    n_jobs: int = 1
    mlflow_tracking_uri: Optional[str] = None
    mlflow_experiment_name: str = "lipschitz_gluing"


class ManifoldSpec(BaseModel):
    """One model manifold; unused fields are ignored by the chosen model"""

    model: Literal["flat_torus", "conformal_torus", "round_sphere", "ellipsoid", "graph_surface"] = "flat_torus"
    dimension: int = Field(2, ge=2, le=4)
    period: Optional[float] = None
    eta: float = 0.0
    eta_per_delta: Optional[float] = None
    perturbation_seed: int = 0
    modes: int = 3
    radius: float = 1.0
    axes: Optional[List[float]] = None
    hessian: Optional[List[List[float]]] = None
    scale: float = 1.0
    scale_per_root_delta: Optional[float] = None
    prefer_oracles: bool = True

    @model_validator(mode="after")
    def check_model_fields(self) -> "ManifoldSpec":
        if self.model == "ellipsoid" and (self.axes is None or len(self.axes) != self.dimension + 1):
            raise ValueError(f"An ellipsoid of dimension {self.dimension} needs {self.dimension + 1} axes")
        if self.model == "graph_surface" and self.hessian is None:
            raise ValueError("A graph surface needs a hessian")
        return self

    def resolved(self, delta: float) -> "ManifoldSpec":
        """Copy with the scale fixed for this delta when it is tied to 1 / sqrt(delta)"""
        if self.scale_per_root_delta is None:
            return self
        return self.model_copy(update={"scale": self.scale_per_root_delta / math.sqrt(delta)})


class CorrespondenceSpec(BaseModel):
    kind: Literal["coordinate_identity", "brute_force"] = "coordinate_identity"
    max_pair_distance: float = 4.0
    max_pairs: Optional[int] = 2000
    covering_probes: int = 1000


class SeedSpec(BaseModel):
    net: int = 0
    sampling: int = 1
    trials: int = 2

    @classmethod
    def from_base(cls, seed: int) -> "SeedSpec":
        return cls(net=seed, sampling=seed + 1, trials=seed + 2)


class SampleSpec(BaseModel):
    admissibility: int = 200
    net_probes: int = 2000
    lemma_trials: int = 100
    chart_checks: int = 10
    chart_samples: int = 10
    overlap_pairs: int = 10
    partition_probes: int = 1000
    gradient_probes: int = 100
    lipschitz_pairs: int = 200
    differential_samples: int = 10
    differential_points: int = 10
    injectivity_samples: int = 2000
    surjectivity_probes: int = 1000
    trace_samples: int = 200


class SolverSpec(BaseModel):
    karcher_tolerance: Optional[float] = None
    karcher_max_iterations: int = 100
    closeness_constant: float = 50.0
    max_pair_distance: float = 1.0
    hessian_check: bool = True
    linear_eps: Optional[float] = None
    linear_delta: Optional[float] = None


class ExperimentConfig(BaseModel):
    """
    A complete experiment: V, W, the correspondence between a net of V and W, and delta

    epsilon = sqrt(delta) is derived. ``sweep_deltas`` lists the deltas of a
    sweep run.
    """

    name: str = "identity"
    source: ManifoldSpec = Field(default_factory=ManifoldSpec)
    target: ManifoldSpec = Field(default_factory=ManifoldSpec)
    correspondence: CorrespondenceSpec = Field(default_factory=CorrespondenceSpec)
    delta: float = 0.25
    seeds: SeedSpec = Field(default_factory=SeedSpec)
    samples: SampleSpec = Field(default_factory=SampleSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    stages: List[str] = Field(default_factory=lambda: list(STAGES))
    sweep_deltas: List[float] = Field(default_factory=list)
    output_dir: Optional[str] = None
    n_jobs: int = 1

    @field_validator("delta")
    @classmethod
    def check_delta(cls, value: float) -> float:
        if not 0 < value <= MAX_DELTA:
            raise ValueError(f"delta must be in (0, {MAX_DELTA}], got {value}")
        return value

    @field_validator("sweep_deltas")
    @classmethod
    def check_sweep(cls, values: List[float]) -> List[float]:
        for value in values:
            if not 0 < value <= MAX_DELTA:
                raise ValueError(f"sweep deltas must be in (0, {MAX_DELTA}], got {value}")
        return values

    @field_validator("stages")
    @classmethod
    def check_stages(cls, values: List[str]) -> List[str]:
        unknown = [s for s in values if s not in STAGES]
        if unknown:
            raise ValueError(f"Unknown stages {unknown}; expected a subset of {STAGES}")
        return values

    @computed_field  # type: ignore[misc]
    @property
    def epsilon(self) -> float:
        return math.sqrt(self.delta)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the semantic fields"""
        payload = self.model_dump(mode="json", exclude=NON_SEMANTIC_FIELDS)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_delta(self, delta: float) -> "ExperimentConfig":
        return self.model_copy(update={"delta": delta, "sweep_deltas": []}, deep=True)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={"seeds": SeedSpec.from_base(seed)}, deep=True)


def expand_placeholders(text: str) -> str:
    """Replace ${VAR} and ${VAR:-default} with environment values"""

    def substitute(match: re.Match) -> str:
        value = os.getenv(match.group("name"))
        if value is None or value == "":
            default = match.group("default")
            if default is None:
                raise ValueError(f"Environment variable {match.group('name')} is not set and has no default")
            return default
        return value

    return _PLACEHOLDER.sub(substitute, text)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load a YAML (or JSON) experiment configuration

    Args:
        path: Configuration file

    Returns:
        Validated ExperimentConfig
    """
    load_dotenv()
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(expand_placeholders(text)) or {}
        if "experiment" in data:
            data = data["experiment"]
        config = ExperimentConfig.model_validate(data)
    except Exception as e:
        logger.error(f"Error loading configuration {path}: {e}")
        raise
    logger.info(f"Loaded experiment {config.name} (delta={config.delta}, hash {config.config_hash()[:12]})")
    return config
