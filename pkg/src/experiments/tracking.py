"""Optional MLflow tracking of experiment parameters and headline metrics"""

import logging
import math
from typing import Dict, Optional

import mlflow

from src.experiments.config import ExperimentConfig, ExperimentSettings

logger = logging.getLogger(__name__)


def configure_tracking(settings: ExperimentSettings) -> bool:
    """
    Point MLflow at the configured tracking URI

    Returns:
        False when no tracking URI is set; nothing is logged then
    """
    if not settings.mlflow_tracking_uri:
        return False
    mlflow.set_tracking_uri(settings.mlflow_tracking_uri)
    mlflow.set_experiment(settings.mlflow_experiment_name)
    logger.info(
        f"MLflow tracking URI: {settings.mlflow_tracking_uri}, experiment {settings.mlflow_experiment_name}"
    )
    return True


def run_parameters(config: ExperimentConfig) -> Dict[str, str]:
    return {
        "name": config.name,
        "source": config.source.model,
        "target": config.target.model,
        "correspondence": config.correspondence.kind,
        "delta": str(config.delta),
        "epsilon": str(config.epsilon),
        "dimension": str(config.source.dimension),
        "net_seed": str(config.seeds.net),
        "config_hash": config.config_hash(),
    }


def log_run(config: ExperimentConfig, metrics: Dict[str, Optional[float]], settings: ExperimentSettings) -> bool:
    """
    Log one run; non-finite and missing metrics are skipped

    Returns:
        Whether anything was sent to MLflow
    """
    if not configure_tracking(settings):
        return False
    try:
        with mlflow.start_run(run_name=f"{config.name}-{config.delta}"):
            mlflow.log_params(run_parameters(config))
            for key, value in metrics.items():
                if value is not None and math.isfinite(value):
                    mlflow.log_metric(key, float(value))
    except Exception as e:
        logger.error(f"Error logging to MLflow: {e}")
        raise
    return True
