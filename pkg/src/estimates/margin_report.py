"""Margin reports: observed quantity over claimed bound, worst case over trials"""

import math
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field, computed_field


class MarginReport(BaseModel):
    """Outcome of checking one estimate over many random instances

    For estimates with an explicit constant, ``worst_ratio`` is the largest
    observed (quantity / bound) and the check passes when it does not exceed
    1 (plus ``tolerance``). For estimates stated with an unspecified constant
    C, ``worst_ratio`` is the measured constant (quantity / delta) and the
    check passes when it is finite.
    """

    lemma: str
    trials: int
    worst_ratio: float
    explicit_bound: bool = True
    tolerance: float = 0.0
    violations: List[Dict[str, Any]] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)

    @computed_field  # type: ignore[misc]
    @property
    def passed(self) -> bool:
        if not math.isfinite(self.worst_ratio):
            return False
        if self.explicit_bound:
            return self.worst_ratio <= 1.0 + self.tolerance
        return True

    @classmethod
    def from_trials(
        cls,
        lemma: str,
        ratios: Sequence[float],
        instances: Sequence[Dict[str, Any]],
        explicit_bound: bool = True,
        tolerance: float = 0.0,
        details: Optional[Dict[str, Any]] = None,
        max_violations: int = 20,
    ) -> "MarginReport":
        """
        Reduce per-trial ratios (in trial order) into a report

        Args:
            lemma: Identifier of the checked estimate
            ratios: One ratio per trial
            instances: One descriptor per trial, kept for violating trials
            explicit_bound: Whether the ratio is against an explicit bound
            tolerance: Slack added to 1 before a ratio counts as a violation
            details: Extra measured quantities
            max_violations: Cap on the number of stored violating instances

        Returns:
            MarginReport
        """
        worst = 0.0
        violations: List[Dict[str, Any]] = []
        for ratio, instance in zip(ratios, instances):
            if not math.isfinite(ratio):
                worst = math.inf
            else:
                worst = max(worst, ratio)
            violating = not math.isfinite(ratio) or (explicit_bound and ratio > 1.0 + tolerance)
            if violating and len(violations) < max_violations:
                violations.append({"ratio": ratio, **instance})
        return cls(
            lemma=lemma,
            trials=len(ratios),
            worst_ratio=worst,
            explicit_bound=explicit_bound,
            tolerance=tolerance,
            violations=violations,
            details=details or {},
        )

    @classmethod
    def combine(
        cls, lemma: str, reports: Sequence["MarginReport"], details: Optional[Dict[str, Any]] = None
    ) -> "MarginReport":
        """
        Merge reports of the same estimate over several instances (charts, models)

        Numeric details are reduced by their maximum; violations are
        concatenated up to 20.
        """
        merged: Dict[str, Any] = {"reports": len(reports)}
        for report in reports:
            for key, value in report.details.items():
                if key != "chart" and isinstance(value, (int, float)) and not isinstance(value, bool):
                    merged[key] = max(merged.get(key, value), value)
        merged.update(details or {})
        violations = [v for report in reports for v in report.violations][:20]
        worst = max((r.worst_ratio for r in reports), default=0.0)
        return cls(
            lemma=lemma,
            trials=sum(r.trials for r in reports),
            worst_ratio=worst,
            explicit_bound=all(r.explicit_bound for r in reports) if reports else True,
            tolerance=max((r.tolerance for r in reports), default=0.0),
            violations=violations,
            details=merged,
        )
