"""Exception hierarchy shared by the geometry, gluing and experiment modules"""

from typing import Any, Dict, Optional


class GeometryError(ValueError):
    """Invalid geometric input: degenerate bases, points outside a domain, chart failures"""


class ChartConstructionError(GeometryError):
    """A local chart could not be built from the net and the correspondence"""


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance"""


class KarcherAssertionError(ConvergenceError):
    """The center of mass converged but violates the closeness bound to the chart images"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
