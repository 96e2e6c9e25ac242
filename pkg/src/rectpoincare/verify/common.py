"""Shared setup for the checks: domains, rectangle pools, test functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..analysis import lq_norm, project_polynomial
from ..functionals import KernelSettings, SampledFunction
from ..grid import BASIS_PRODUCT, BASIS_RECT, Box, Grid, Rect, build_grid, root_rect, subtree
from ..kernels import DEFAULT_PAIR_BUDGET
from ..report import DIMENSIONAL, CheckReport
from ..weights import Weight, make_weight, unit_weight


class CheckError(ValueError):
    pass


def random_trig(n: int, seed: int, terms: int = 3) -> str:
    """Seeded trigonometric polynomial as an expression string."""
    rng = np.random.default_rng(seed)
    parts = []
    for _ in range(terms):
        c = round(float(rng.uniform(0.3, 1.0)), 3)
        k = [int(v) for v in rng.integers(1, 3, size=n)]
        ph = round(float(rng.uniform(0, 2 * math.pi)), 3)
        arg = " + ".join(f"{kk}*x{i + 1}" for i, kk in enumerate(k))
        parts.append(f"{c}*sin(pi*({arg}) + {ph})")
    return " + ".join(parts)


def default_corpus(n: int, seed: int = 0) -> list:
    if n == 1:
        base = ["x", "x^2", "sin(pi*x)", "exp(-20*(x - 0.3)^2)"]
    elif n == 2:
        base = ["x1", "x1^2 + x2", "sin(pi*x1)*cos(pi*x2)", "exp(-10*((x1 - 0.3)^2 + (x2 - 0.2)^2))", "x1*x2"]
    else:
        coords = [f"x{i + 1}" for i in range(n)]
        base = [
            coords[0],
            " + ".join(f"{c}^2" for c in coords),
            "*".join(f"sin(pi*{c})" for c in coords[:2]),
            "exp(-4*(" + " + ".join(f"({c} - 0.2)^2" for c in coords) + "))",
        ]
    return base + [random_trig(n, seed)]


@dataclass
class Setup:
    """Domain, resolution and pool parameters resolved from a check's parameters."""

    box: Box
    basis: str
    resolution: int
    functions: list
    weight: str | None
    depth: int
    roots: int
    seed: int
    min_cells: int = 8
    kernel: KernelSettings = field(default_factory=KernelSettings)

    def grid(self, factor: int = 1) -> Grid:
        return build_grid(self.box, (self.resolution * factor,) * self.box.ndim)

    def sampled(self, grid: Grid) -> list:
        return [SampledFunction(grid, expr) for expr in self.functions]

    def weight_on(self, grid: Grid, spec: str | None = None) -> Weight:
        spec = self.weight if spec is None else spec
        if spec in (None, "", "unit", "1"):
            return unit_weight(grid)
        return make_weight(spec, grid)


def setup_from(params: dict, seed: int, jobs: int = 1, budget: int = DEFAULT_PAIR_BUDGET) -> Setup:
    n = int(params.get("dim", 1))
    lo = params.get("lower", 0.0)
    hi = params.get("upper", 1.0)
    lower = tuple(lo) if isinstance(lo, (list, tuple)) else (float(lo),) * n
    upper = tuple(hi) if isinstance(hi, (list, tuple)) else (float(hi),) * n
    split = params.get("split")
    basis = params.get("basis") or (BASIS_PRODUCT if split else BASIS_RECT)
    box = Box(lower, upper, tuple(split) if split and basis == BASIS_PRODUCT else None)
    functions = params.get("functions") or default_corpus(n, seed)
    return Setup(
        box=box,
        basis=basis,
        resolution=int(params.get("resolution", 64)),
        functions=list(functions),
        weight=params.get("weight"),
        depth=int(params.get("depth", 2)),
        roots=int(params.get("roots", 3)),
        seed=seed,
        min_cells=int(params.get("min_cells", 8)),
        kernel=KernelSettings(budget=budget, jobs=jobs),
    )


def random_roots(box: Box, basis: str, resolution: int, depth: int, count: int, seed,
                 cubes: bool = False, min_cells: int = 2, groups=None) -> list:
    """Random proper sub-boxes aligned with a ``resolution`` grid.

    Side lengths are ``2^a`` cells, large enough that every descendant to
    ``depth`` keeps ``min_cells`` cells per axis. Sides are tied within each
    axis group: the blocks of a product-of-cubes box, all axes with
    ``cubes``, or an explicit ``groups``. Boxes are given in coordinates, so
    they stay aligned on every finer grid.
    """
    rng = np.random.default_rng(seed)
    n = box.ndim
    top = int(resolution).bit_length() - 1
    low = depth + max(1, int(min_cells).bit_length() - 1)
    if top <= low:
        return []
    if groups is None:
        if cubes:
            groups = (tuple(range(n)),)
        elif basis == BASIS_PRODUCT:
            groups = box.blocks
        else:
            groups = tuple((a,) for a in range(n))
    h = [s / resolution for s in box.sides]
    out = []
    for _ in range(count):
        lo = [0.0] * n
        hi = [0.0] * n
        for grp in groups:
            a = int(rng.integers(low, top))
            size = 1 << a
            for ax in grp:
                start = int(rng.integers(0, resolution - size + 1))
                lo[ax] = box.lower[ax] + start * h[ax]
                hi[ax] = lo[ax] + size * h[ax]
        split = box.split if basis == BASIS_PRODUCT else None
        out.append(Box(tuple(lo), tuple(hi), split))
    return out


def rect_pool(setup: Setup, cubes: bool = False, groups=None) -> list:
    """Root rect, random roots, and their dyadic descendants to ``setup.depth``."""
    boxes = [setup.box] + random_roots(setup.box, setup.basis, setup.resolution, setup.depth, setup.roots,
                                       setup.seed + 7, cubes, setup.min_cells, groups)
    out = []
    for b in boxes:
        out.extend(subtree(root_rect(b, setup.basis), setup.depth))
    return out


def ap_characteristic(vals: np.ndarray, p: float) -> float:
    scale = float(vals.mean())
    v = vals / scale
    if p == 1:
        return float(v.mean() / v.min())
    return float(v.mean() * np.mean(v ** (-1.0 / (p - 1.0))) ** (p - 1.0))


def pool_ap(w: Weight, rects, p: float) -> float:
    """Largest ``A_p`` characteristic over exactly the given rects."""
    return max(ap_characteristic(w.function.on(r), p) for r in rects)


def residual(f: SampledFunction, r: Rect, m: int = 1, wv: np.ndarray | None = None) -> np.ndarray:
    """``f - P_R f`` on the cells of ``r`` with ``P_R`` of degree below ``m``.

    ``m = 1`` subtracts the mean (weighted when ``wv`` is given).
    """
    vals = f.on(r)
    if m <= 1:
        c = float(np.mean(vals)) if wv is None else float(np.sum(vals * wv) / np.sum(wv))
        return vals - c
    return vals - project_polynomial(f.function, r, m - 1).values()


def grad_term(f: SampledFunction, r: Rect, p: float, wv: np.ndarray | None, m: int = 1, axes=None) -> float:
    """``((1/w(R)) int_R |nabla^m f|^p w)^(1/p)`` (plain average without ``wv``)."""
    grid = f.grid
    axes = tuple(range(grid.ndim)) if axes is None else tuple(axes)
    g = f.derivative_norm(axes, m)[grid.slices(r)]
    return lq_norm(g, p, wv)


@dataclass
class Collector:
    """Worst ``lhs / structural`` over a corpus and a pool.

    Items with ``lhs`` at round-off level and a vanishing structural factor
    (for instance a polynomial of degree below ``m``) carry no information
    and are skipped; a positive ``lhs`` over a vanishing factor counts as
    degenerate and makes the constant infinite.
    """

    best: float = 0.0
    lhs: float = 0.0
    structural: float = 0.0
    where: str = ""
    count: int = 0
    skipped: int = 0
    degenerate: int = 0

    def add(self, lhs: float, structural: float, where: str = "", atol: float = 1e-10):
        if not math.isfinite(structural) or structural <= atol:
            if abs(lhs) <= atol:
                self.skipped += 1
                return
            self.degenerate += 1
            ratio = math.inf
        else:
            ratio = lhs / structural
        self.count += 1
        if self.count == 1 or ratio > self.best:
            self.best, self.lhs, self.structural, self.where = ratio, lhs, structural, where

    def merge(self, other: "Collector"):
        if other.count and (self.count == 0 or other.best > self.best):
            self.best, self.lhs, self.structural, self.where = other.best, other.lhs, other.structural, other.where
        self.count += other.count
        self.skipped += other.skipped
        self.degenerate += other.degenerate


def describe(r: Rect) -> str:
    return "x".join(f"[{a:.4g},{b:.4g}]" for a, b in zip(r.lower, r.upper))


DRIFT_LIMIT = 0.10


def drift(c1: float, c2: float) -> float:
    """Relative change of an empirical constant between two resolutions."""
    if not (math.isfinite(c1) and math.isfinite(c2)):
        return math.inf
    top = max(abs(c1), abs(c2))
    return 0.0 if top == 0 else abs(c2 - c1) / top


@dataclass
class Measurement:
    """One resolution's worth of a dimensional check."""

    collector: Collector
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    extra_ok: bool = True


def dimensional_report(check_id: str, params: dict, setup: Setup, measure, factors=(1, 2)) -> CheckReport:
    """Run ``measure(grid, factor)`` at ``N`` and ``2N`` and assemble the report.

    The empirical constant is the worst ratio at the finer resolution; the
    check passes when it is finite, changes by at most 10% between the two
    resolutions, and every named sub-condition reported by ``measure`` holds.
    """
    trace, runs = [], []
    for k in factors:
        grid = setup.grid(k)
        m = measure(grid, k)
        runs.append(m)
        trace.append({"resolution": setup.resolution * k, "constant": m.collector.best,
                      "items": m.collector.count, "worst": m.collector.where})
    last = runs[-1]
    col = last.collector
    d = drift(runs[0].collector.best, col.best) if len(runs) > 1 else 0.0
    finite = col.count > 0 and math.isfinite(col.best)
    flags = sorted({f for m in runs for f in m.flags} | set(setup.kernel.flags))
    if col.count == 0:
        flags.append("no_items")
    if col.degenerate:
        flags.append("degenerate")
    details = dict(last.details)
    details["drift"] = d
    details["drift_limit"] = DRIFT_LIMIT
    details["skipped_items"] = col.skipped
    passed = finite and d <= DRIFT_LIMIT and all(m.extra_ok for m in runs)
    structural = col.structural
    constant = col.best if finite else math.inf
    return CheckReport(
        check_id=check_id,
        params=params,
        lhs=col.lhs,
        rhs=structural * constant if finite else math.inf,
        passed=bool(passed),
        mode=DIMENSIONAL,
        rhs_structural=structural,
        empirical_constant=constant,
        trace=trace,
        seed=setup.seed,
        details=details,
        flags=flags,
    )


def corpus_pairs(setup: Setup, grid: Grid, rects):
    """``(f, r)`` over the corpus sampled on ``grid`` and the rect pool."""
    for f in setup.sampled(grid):
        for r in rects:
            yield f, r


def pool_roots(rects) -> list:
    """Distinct level-0 rects of a pool."""
    return [r for r in rects if r.level == 0]
