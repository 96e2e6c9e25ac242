"""CSV tables and PNG figures for parameter sweeps."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SWEEP_COLUMNS = ("value", "check_id", "passed", "lhs", "rhs", "ratio", "empirical_constant", "drift", "seed", "error")


def sweep_rows(name: str, values, reports) -> list:
    rows = []
    for v, r in zip(values, reports):
        rows.append({
            "value": v,
            "check_id": r.check_id,
            "passed": bool(r.passed),
            "lhs": r.lhs,
            "rhs": r.rhs,
            "ratio": r.ratio,
            "empirical_constant": r.empirical_constant,
            "drift": r.details.get("drift", ""),
            "seed": r.seed,
            "error": r.error or "",
        })
    return rows


def write_sweep_csv(path: Path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row[k]) for k in SWEEP_COLUMNS})
    return path


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def _numeric(values):
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        return None


def plot_sweep(path: Path, check_id: str, name: str, rows) -> Path:
    """Ratio and empirical constant against the swept value; failing points are marked."""
    xs = _numeric([r["value"] for r in rows])
    labels = None
    if xs is None:
        labels = [str(r["value"]) for r in rows]
        xs = list(range(len(rows)))
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=110)
    for key, style in (("ratio", "o-"), ("empirical_constant", "s--")):
        ys = [r[key] if isinstance(r[key], (int, float)) and r[key] is not None and math.isfinite(r[key]) else math.nan
              for r in rows]
        ax.plot(xs, ys, style, label=key.replace("_", " "))
    bad = [x for x, r in zip(xs, rows) if not r["passed"]]
    if bad:
        ax.plot(bad, [0.0] * len(bad), "rx", markersize=9, label="failed")
    positive = labels is None and all(x > 0 for x in xs)
    if positive and len(xs) > 1 and max(xs) / min(xs) > 20:
        ax.set_xscale("log")
    if labels is not None:
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, rotation=30, fontsize=7)
    ax.set_xlabel(name)
    ax.set_title(f"{check_id}: sweep over {name}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
