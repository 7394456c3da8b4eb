"""Small result record shared by every invariant checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one numerical check.

    ``max_violation`` is the largest amount by which the checked inequality
    was exceeded (clipped below at zero is NOT applied, so a negative value
    means there was slack everywhere).  ``passed`` compares it against
    ``tolerance``.
    """

    name: str
    max_violation: float
    tolerance: float
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance)

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "max_violation": float(self.max_violation),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "details": self.details,
        }

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: max_violation={self.max_violation:.3e} (tol {self.tolerance:.1e})"
