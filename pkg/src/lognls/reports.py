"""Result records shared by the verification and admissibility checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any


@dataclass
class CheckReport:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    tolerance: float
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.satisfied else "FAIL"
        return (f"[{status}] {self.name}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"tol={self.tolerance:.1e}")
