"""Result record shared by every inequality check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

REPORT_SCHEMA_VERSION = 1

EXPLICIT = "explicit"
DIMENSIONAL = "dimensional"


def _clean(value):
    """Make a value JSON friendly (floats stay floats, inf becomes a string)."""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        return _clean(value.item())
    return value


@dataclass
class CheckReport:
    """Outcome of one inequality check.

    ``rhs`` is ``rhs_structural * empirical_constant`` for checks whose
    constant is not known in closed form; for explicit checks the constant is
    part of ``rhs`` and ``empirical_constant`` is the observed ``lhs/rhs``.
    """

    check_id: str
    params: dict
    lhs: float
    rhs: float
    passed: bool
    mode: str = EXPLICIT
    rhs_structural: float | None = None
    empirical_constant: float | None = None
    trace: list = field(default_factory=list)
    seed: int | None = None
    wall_time: float | None = None
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    error: str | None = None

    @property
    def ratio(self) -> float:
        return safe_ratio(self.lhs, self.rhs)

    def to_record(self, timing: bool = False) -> dict:
        return _clean(
            {
                "schema": REPORT_SCHEMA_VERSION,
                "check_id": self.check_id,
                "seed": self.seed,
                "params": self.params,
                "mode": self.mode,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "rhs_structural": self.rhs_structural,
                "empirical_constant": self.empirical_constant,
                "ratio": self.ratio,
                "passed": bool(self.passed),
                "trace": self.trace,
                "wall_time": self.wall_time if timing else None,
                "details": self.details,
                "flags": self.flags,
                "error": self.error,
            }
        )


def safe_ratio(lhs: float, rhs: float) -> float:
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs
