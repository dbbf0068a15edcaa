"""Points, tangent vectors and admissibility reports on model manifolds"""

import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, computed_field

from src.exceptions import GeometryError


@dataclass(frozen=True, eq=False)
class PointOnManifold:
    """A point given by a chart id and its coordinates in that chart"""

    chart: int
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1)
        if not np.all(np.isfinite(coords)):
            raise GeometryError(f"Non-finite coordinates {coords} in chart {self.chart}")
        object.__setattr__(self, "chart", int(self.chart))
        object.__setattr__(self, "coords", coords)

    @property
    def dimension(self) -> int:
        return self.coords.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {"chart": self.chart, "coords": [float(c) for c in self.coords]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PointOnManifold":
        return cls(chart=data["chart"], coords=np.asarray(data["coords"], dtype=float))

    def __repr__(self) -> str:
        return f"PointOnManifold(chart={self.chart}, coords={self.coords.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentAtPoint:
    """A tangent vector: base point plus components in the chart frame of the base"""

    base: PointOnManifold
    components: np.ndarray

    def __post_init__(self):
        components = np.asarray(self.components, dtype=float).reshape(-1)
        if components.shape[0] != self.base.dimension:
            raise GeometryError(
                f"Tangent vector of length {components.shape[0]} at a point of dimension {self.base.dimension}"
            )
        if not np.all(np.isfinite(components)):
            raise GeometryError(f"Non-finite tangent components {components}")
        object.__setattr__(self, "components", components)

    def scaled(self, factor: float) -> "TangentAtPoint":
        return TangentAtPoint(self.base, factor * self.components)

    def to_dict(self) -> Dict[str, Any]:
        return {"base": self.base.to_dict(), "components": [float(c) for c in self.components]}


class AdmissibilityReport(BaseModel):
    """Curvature and injectivity radius of a rescaled model against a target delta"""

    model: str
    delta: float
    curvature_bound: float
    injectivity_radius: float
    samples: int
    scale: float = 1.0
    tolerance: float = 1e-4

    @computed_field  # type: ignore[misc]
    @property
    def curvature_ok(self) -> bool:
        return self.curvature_bound <= self.delta * (1.0 + self.tolerance)

    @computed_field  # type: ignore[misc]
    @property
    def injectivity_ok(self) -> bool:
        if math.isinf(self.injectivity_radius):
            return True
        return self.injectivity_radius >= (1.0 / self.delta) * (1.0 - self.tolerance)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        return self.curvature_ok and self.injectivity_ok
