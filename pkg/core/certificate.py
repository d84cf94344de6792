"""
Certificates: structured verdicts of verification runs.

A certificate records the property checked, the verdict, the signed margin
to violation, the tolerance, an optional refinement trend and, on failure,
a counterexample payload. Certificates serialize to plain dictionaries with
sorted keys so identical runs give identical JSON.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class Verdict(Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


@dataclass(frozen=True)
class Certificate:
    """Verdict of one property check.

    Invariants: a failing certificate carries a counterexample, and a passing
    one has margin >= -tolerance.
    """

    property_id: str
    verdict: Verdict
    margin: float
    tolerance: float
    trend: List[float] = field(default_factory=list)
    counterexample: Optional[Dict[str, Any]] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict is Verdict.FAIL and self.counterexample is None:
            raise ValueError(f"Failing certificate {self.property_id} needs a counterexample")
        if self.verdict is Verdict.PASS and not self.margin >= -self.tolerance:
            raise ValueError(
                f"Passing certificate {self.property_id} has margin {self.margin} "
                f"below -{self.tolerance}"
            )

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    @property
    def failed(self) -> bool:
        return self.verdict is Verdict.FAIL

    def with_trend(self, values: Sequence[float]) -> "Certificate":
        return replace(self, trend=[float(v) for v in values])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "property": self.property_id,
            "verdict": self.verdict.value,
            "margin": _plain(self.margin),
            "tolerance": _plain(self.tolerance),
            "trend": _plain(self.trend),
            "counterexample": _plain(self.counterexample),
            "details": _plain(self.details),
        }


def verdict_of(ok: bool) -> Verdict:
    return Verdict.PASS if ok else Verdict.FAIL


def combine(property_id: str, parts: Sequence[Certificate],
            details: Optional[Dict[str, Any]] = None) -> Certificate:
    """Conjunction of certificates: fails on the first failing part."""
    if not parts:
        raise ValueError("Cannot combine an empty list of certificates")
    margin = min(c.margin for c in parts)
    tolerance = max(c.tolerance for c in parts)
    failing = [c for c in parts if c.failed]
    merged = dict(details or {})
    merged["parts"] = {c.property_id: c.verdict.value for c in parts}
    if failing:
        first = failing[0]
        payload = dict(first.counterexample or {})
        payload["clause"] = first.property_id
        return Certificate(property_id, Verdict.FAIL, margin, tolerance,
                           counterexample=payload, details=merged)
    if any(c.verdict is Verdict.INCONCLUSIVE for c in parts):
        return Certificate(property_id, Verdict.INCONCLUSIVE, margin, tolerance, details=merged)
    return Certificate(property_id, Verdict.PASS, max(margin, -tolerance), tolerance, details=merged)
