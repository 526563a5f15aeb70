"""Operational boundaries and safety limits for explored capabilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .model import ProcessEvent

Interval = tuple[float, float]


class ConstraintKind(str, Enum):
    OPERATIONAL = "operational"
    SAFETY = "safety"


@dataclass(frozen=True)
class ConstraintViolation:
    param: str
    kind: ConstraintKind
    value: float
    bounds: Interval

    def __str__(self):
        lo, hi = self.bounds
        return f"{self.param}={self.value:g} outside {self.kind.value} [{lo:g}, {hi:g}]"


@dataclass(frozen=True)
class ConstraintSet:
    operation_bounds: Mapping[str, Interval] = field(default_factory=dict)
    safety_limits: Mapping[str, Interval] = field(default_factory=dict)

    def __post_init__(self):
        for name, table in (("operation_bounds", self.operation_bounds),
                            ("safety_limits", self.safety_limits)):
            for param, (lo, hi) in table.items():
                if lo > hi:
                    raise ValueError(f"{name}[{param}]: min {lo} > max {hi}")

    def to_dict(self) -> dict:
        return {
            "operation_bounds": {k: list(v) for k, v in sorted(self.operation_bounds.items())},
            "safety_limits": {k: list(v) for k, v in sorted(self.safety_limits.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConstraintSet":
        return cls(
            {k: (float(v[0]), float(v[1])) for k, v in data.get("operation_bounds", {}).items()},
            {k: (float(v[0]), float(v[1])) for k, v in data.get("safety_limits", {}).items()},
        )


def check_constraints(constraints: ConstraintSet, capability: ProcessEvent) -> list[ConstraintViolation]:
    """Violations of either interval set; parameters without bounds pass.

    Both sets are checked independently, so a value can fail twice.
    """
    violations = []
    for param, value in sorted(capability.params.items()):
        for kind, table in ((ConstraintKind.OPERATIONAL, constraints.operation_bounds),
                            (ConstraintKind.SAFETY, constraints.safety_limits)):
            bounds = table.get(param)
            if bounds is not None and not bounds[0] <= value <= bounds[1]:
                violations.append(ConstraintViolation(param, kind, value, bounds))
    return violations
