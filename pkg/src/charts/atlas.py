"""Lazily built, cached set of local charts keyed by net index"""

import logging
import threading
from typing import Any, Dict, Iterable, List, Optional, Tuple

from joblib import Parallel, delayed

from src.charts.local_chart import LocalChart, construct_chart
from src.nets.correspondence import Correspondence
from src.nets.net_builder import Net

logger = logging.getLogger(__name__)


class ChartSet:
    """
    Charts centered at the net points of V

    Charts are constructed on first use and kept; ``build`` constructs a
    batch of them concurrently. Charts are immutable once built.
    """

    def __init__(self, net: Net, correspondence: Correspondence, delta: float, n_jobs: int = 1):
        self.net = net
        self.correspondence = correspondence
        self.delta = float(delta)
        self.n_jobs = n_jobs
        self._charts: Dict[int, LocalChart] = {}
        self._lock = threading.Lock()

    @property
    def source(self):
        return self.net.model

    @property
    def target(self):
        return self.correspondence.target

    @property
    def epsilon(self) -> float:
        return self.net.epsilon

    def __len__(self) -> int:
        return len(self._charts)

    def __contains__(self, index: int) -> bool:
        return index in self._charts

    def chart(self, index: int) -> LocalChart:
        with self._lock:
            cached = self._charts.get(index)
        if cached is not None:
            return cached
        chart = construct_chart(index, self.net, self.correspondence, self.delta)
        with self._lock:
            return self._charts.setdefault(index, chart)

    def build(self, indices: Optional[Iterable[int]] = None) -> List[LocalChart]:
        """
        Construct the charts at ``indices`` (all net points by default)

        Args:
            indices: Net indices

        Returns:
            The charts in index order
        """
        indices = sorted(range(len(self.net)) if indices is None else set(indices))
        missing = [i for i in indices if i not in self._charts]
        if missing:
            try:
                built = Parallel(n_jobs=self.n_jobs)(
                    delayed(construct_chart)(i, self.net, self.correspondence, self.delta) for i in missing
                )
            except Exception as e:
                logger.error(f"Error building charts: {e}")
                raise
            with self._lock:
                for chart in built:
                    self._charts.setdefault(chart.index, chart)
            logger.info(f"Built {len(missing)} charts ({len(self._charts)} cached)")
        return [self._charts[i] for i in indices]

    def overlapping_pairs(self, indices: Optional[Iterable[int]] = None) -> List[Tuple[int, int]]:
        """Pairs (i, j), i < j, of chart centers closer than the domain radius 4 epsilon"""
        indices = sorted(range(len(self.net)) if indices is None else set(indices))
        chosen = set(indices)
        radius = 4 * self.epsilon
        pairs = []
        for i in indices:
            for j, _ in self.net.within(self.net.points[i], radius):
                if j > i and j in chosen:
                    pairs.append((i, j))
        return pairs

    def to_dict(self) -> Dict[str, Any]:
        return {"delta": self.delta, "charts": [self._charts[i].to_dict() for i in sorted(self._charts)]}

    @classmethod
    def from_dict(
        cls, data: Dict[str, Any], net: Net, correspondence: Correspondence, n_jobs: int = 1
    ) -> "ChartSet":
        charts = cls(net, correspondence, data["delta"], n_jobs=n_jobs)
        for entry in data["charts"]:
            chart = LocalChart.from_dict(entry, net, correspondence)
            charts._charts[chart.index] = chart
        return charts
