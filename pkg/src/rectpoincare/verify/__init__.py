"""Check engine: run catalog entries and parameter sweeps."""

from __future__ import annotations

import time

from ..analysis import AnalysisError
from ..conditions import ConditionError
from ..expr import ExprError
from ..functionals import FunctionalError
from ..grid import GridError
from ..kernels import DEFAULT_PAIR_BUDGET, KernelBudgetError
from ..report import CheckReport
from ..weights import WeightError
from .catalog import CATALOG, ENTRIES, CatalogEntry, get_entry, resolve_params
from .common import CheckError, setup_from
from .riesz import riesz_potential_bound

EXECUTION_ERRORS = (CheckError, GridError, AnalysisError, ConditionError, FunctionalError, WeightError, ExprError,
                    KernelBudgetError, ValueError, ZeroDivisionError, OverflowError)


def run_check(check_id: str, params: dict | None = None, seed: int = 0, jobs: int = 1,
              budget: int = DEFAULT_PAIR_BUDGET) -> CheckReport:
    """Run one catalog check.

    Unknown ids and invalid parameters raise ``CheckError``. Failures while
    the check runs (pair budget exceeded, unsupported regime, bad
    expressions) come back as a failed report with ``error`` set, so a
    suite keeps going.
    """
    entry = get_entry(check_id)
    resolved = resolve_params(check_id, params)
    start = time.perf_counter()
    try:
        setup = setup_from(resolved, seed, jobs, budget)
        report = entry.runner(resolved, setup)
    except EXECUTION_ERRORS as exc:
        kind = "budget_exceeded" if isinstance(exc, KernelBudgetError) else "error"
        report = CheckReport(check_id, resolved, float("nan"), float("nan"), False, entry.mode, seed=seed,
                             flags=[kind], error=f"{type(exc).__name__}: {exc}")
    report.params = resolved
    report.seed = seed
    report.wall_time = time.perf_counter() - start
    return report


def sweep(check_id: str, name: str, values, params: dict | None = None, seed: int = 0, jobs: int = 1,
          budget: int = DEFAULT_PAIR_BUDGET) -> list:
    """One report per value of parameter ``name``, all with the same seed."""
    schema = get_entry(check_id).schema()
    if name not in schema:
        raise CheckError(f"{check_id} has no parameter {name!r}; valid: {', '.join(sorted(schema))}")
    base = dict(params or {})
    out = []
    for v in values:
        base[name] = v
        out.append(run_check(check_id, base, seed, jobs, budget))
    return out


__all__ = ["CATALOG", "ENTRIES", "CatalogEntry", "CheckError", "get_entry", "resolve_params", "run_check", "sweep",
           "riesz_potential_bound"]
