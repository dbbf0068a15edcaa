"""Power-law fits of measured defects against delta"""

import logging
import math
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel
from scipy.stats import linregress

logger = logging.getLogger(__name__)


class PowerLawFit(BaseModel):
    """Least-squares fit of log(y) = log(prefactor) + exponent * log(x)"""

    exponent: float
    prefactor: float
    r_value: float
    xs: List[float]
    ys: List[float]

    def within(self, expected: float, slack: float) -> bool:
        return abs(self.exponent - expected) <= slack


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> PowerLawFit:
    """
    Fit y = prefactor * x**exponent by linear regression in log-log space

    Args:
        xs: Positive abscissae (typically delta values)
        ys: Positive measurements

    Returns:
        PowerLawFit
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or len(x) < 2:
        raise ValueError(f"Need at least two paired values, got {len(x)} and {len(y)}")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError(f"Power-law fit needs positive finite values, got xs={xs}, ys={ys}")
    if len(np.unique(x)) < 2:
        raise ValueError("Power-law fit needs at least two distinct abscissae")
    result = linregress(np.log(x), np.log(y))
    fit = PowerLawFit(
        exponent=float(result.slope),
        prefactor=float(math.exp(result.intercept)),
        r_value=float(result.rvalue) if np.isfinite(result.rvalue) else 0.0,
        xs=[float(v) for v in x],
        ys=[float(v) for v in y],
    )
    logger.info(f"Power-law fit over {len(x)} points: exponent {fit.exponent:.4f}, prefactor {fit.prefactor:.4g}")
    return fit
