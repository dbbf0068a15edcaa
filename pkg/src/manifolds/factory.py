"""Build model manifolds from experiment configuration entries"""

import logging
import math
from typing import Any, Optional

from src.manifolds.base import ManifoldModel
from src.manifolds.graph_surface import GraphSurface
from src.manifolds.sphere import Ellipsoid, RoundSphere
from src.manifolds.torus import ConformalTorus, FlatTorus

logger = logging.getLogger(__name__)

MODEL_NAMES = ("flat_torus", "conformal_torus", "round_sphere", "ellipsoid", "graph_surface")


def default_period(delta: float) -> float:
    """Smallest integer period whose flat torus has injectivity radius at least 1/delta"""
    return float(math.ceil(2.0 / delta - 1e-12))


def build_model(spec: Any, delta: Optional[float] = None) -> ManifoldModel:
    """
    Instantiate the model described by a manifold spec

    Args:
        spec: Object with the ManifoldSpec fields (model, dimension, period, ...)
        delta: Experiment delta, used for derived periods and eta_per_delta

    Returns:
        ManifoldModel
    """
    common = {"scale": spec.scale, "prefer_oracles": spec.prefer_oracles}
    if spec.model in ("flat_torus", "conformal_torus"):
        period = spec.period
        if period is None:
            if delta is None:
                raise ValueError("A torus without an explicit period needs delta")
            period = default_period(delta)
        if spec.model == "flat_torus":
            model = FlatTorus(period=period, n=spec.dimension, **common)
        else:
            eta = spec.eta
            if spec.eta_per_delta is not None:
                if delta is None:
                    raise ValueError("eta_per_delta needs delta")
                eta = spec.eta_per_delta * delta
            model = ConformalTorus(
                period=period,
                n=spec.dimension,
                eta=eta,
                perturbation_seed=spec.perturbation_seed,
                modes=spec.modes,
                **common,
            )
    elif spec.model == "round_sphere":
        model = RoundSphere(radius=spec.radius, n=spec.dimension, **common)
    elif spec.model == "ellipsoid":
        model = Ellipsoid(axes=tuple(spec.axes), n=spec.dimension, **common)
    elif spec.model == "graph_surface":
        model = GraphSurface(hessian=tuple(tuple(row) for row in spec.hessian), **common)
    else:
        raise ValueError(f"Unknown model {spec.model}; expected one of {MODEL_NAMES}")
    logger.info(f"Built {model.name} (dimension {model.dimension}, scale {model.scale})")
    return model
