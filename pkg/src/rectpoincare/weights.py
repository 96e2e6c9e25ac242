"""Muckenhoupt weights and pool-based estimates of their constants.

Every constant here is a supremum over a finite pool of rectangles and is
therefore a lower bound for the true constant. The default pool is the
strong dyadic pool of a root rect: all products of dyadic intervals down to
``depth`` (block levels tied for product-of-cubes rects). Optional extra
rects are random translates aligned to a coarse lattice so that the same
rects are scanned at every grid refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .grid import (
    BASIS_PRODUCT,
    BASIS_RECT,
    POOL_STRONG,
    Box,
    Grid,
    GridError,
    GridFunction,
    Rect,
    box_sums,
    level_tuples,
    prefix_sums,
    reduce_blocks,
    subtree,
    upsample,
)
from .report import EXPLICIT, CheckReport

# name -> (description, expression builder taking the dimension)
WEIGHT_CATALOG = {
    "unit": ("constant weight", lambda n: "1"),
    "power_half": ("|x|^(1/2), an A_p weight for every p > 1", lambda n: "|x|^0.5"),
    "power_neg_half": ("|x|^(-1/2)", lambda n: "|x|^(-0.5)"),
    "product_power": (
        "prod |x_i|^(-0.6): product weight with A_1 constant about 2.5^n",
        lambda n: " * ".join(f"|x{i + 1}|^(-0.6)" for i in range(n)),
    ),
    "flat": (
        "1 + 0.3 sin(pi x1): bounded, close to constant",
        lambda n: "1 + 0.3*sin(pi*x1)",
    ),
    "bump": ("1 + 4 exp(-8|x|^2)", lambda n: "1 + 4*exp(-8*|x|^2)"),
}


class WeightError(GridError):
    pass


@dataclass(frozen=True, eq=False)
class Weight:
    """Strictly positive density on a grid."""

    function: GridFunction
    label: str = ""

    def __post_init__(self):
        vals = self.function.values
        if vals.min() <= 0:
            idx = np.unravel_index(int(np.argmin(vals)), vals.shape)
            raise WeightError(f"weight must be positive; value {vals[idx]:.6g} at cell {tuple(int(i) for i in idx)}")

    @property
    def grid(self) -> Grid:
        return self.function.grid

    @property
    def values(self) -> np.ndarray:
        return self.function.values

    @property
    def total(self) -> float:
        return float(np.sum(self.values)) * self.grid.cell_volume

    def mass(self, r: Rect) -> float:
        """``w(R)``."""
        return float(np.sum(self.function.on(r))) * self.grid.cell_volume

    def scaled(self, c: float) -> "Weight":
        return Weight(self.function.scaled(c), self.label)


def weight_from_values(grid: Grid, values, label: str = "") -> Weight:
    return Weight(GridFunction(grid, values, True), label)


def unit_weight(grid: Grid) -> Weight:
    return weight_from_values(grid, np.ones(grid.shape), "1")


def make_weight(spec, grid: Grid) -> Weight:
    """Weight from a catalog id, an expression string or a parsed tree."""
    label = spec if isinstance(spec, str) else ex.to_string(spec)
    if isinstance(spec, str) and spec in WEIGHT_CATALOG:
        spec = WEIGHT_CATALOG[spec][1](grid.ndim)
    node = ex.parse(spec, grid.ndim) if isinstance(spec, str) else spec
    vals = np.broadcast_to(ex.evaluate(node, grid.mesh), grid.shape)
    bad = ~np.isfinite(vals) | (vals <= 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        center = tuple(float(grid.centers[a][i]) for a, i in enumerate(idx))
        raise WeightError(f"weight {label!r} is not positive at cell {idx} (center {center}): {vals[idx]!r}")
    return weight_from_values(grid, np.array(vals), label)


def _normalized(w: Weight, r: Rect) -> np.ndarray:
    vals = w.function.on(r)
    return vals / vals.mean()


def _sigma(vals: np.ndarray, p: float) -> np.ndarray:
    return vals ** (-1.0 / (p - 1.0))


def ap_values(vals: np.ndarray, levels, p: float) -> np.ndarray:
    """``A_p`` characteristic of every block at per-axis ``levels``."""
    count = math.prod(c >> j for c, j in zip(vals.shape, levels))
    avg = reduce_blocks(vals, levels) / count
    if p == 1:
        return avg / reduce_blocks(vals, levels, np.minimum)
    avg_s = reduce_blocks(_sigma(vals, p), levels) / count
    return avg * avg_s ** (p - 1.0)


def pool_levels(w: Weight, r: Rect, depth: int | None, pool: str = POOL_STRONG, basis: str | None = None):
    counts = tuple(e - s for s, e in w.grid.cell_span(r))
    depth = max(int(c).bit_length() - 1 for c in counts) if depth is None else depth
    basis = r.basis if basis is None else basis
    return level_tuples(counts, depth, basis, r.root.split, pool)


def random_boxes(counts, basis: str, split, count: int, seed, lattice: int = 64) -> tuple:
    """Random cell boxes aligned to a ``lattice``-per-axis coarse grid.

    Returns ``(starts, stops)`` in cells. Block axes share one length for
    product-of-cubes rects. The same seed gives the same physical rects at
    every resolution that is a multiple of the lattice.
    """
    rng = np.random.default_rng(seed)
    n = len(counts)
    k = [min(lattice, c) for c in counts]
    if basis == BASIS_PRODUCT:
        groups = [tuple(range(split[0])), tuple(range(split[0], n))]
    else:
        groups = [(a,) for a in range(n)]
    starts = np.zeros((count, n), dtype=np.int64)
    stops = np.zeros((count, n), dtype=np.int64)
    for grp in groups:
        kk = k[grp[0]]
        logs = rng.uniform(0.0, math.log2(kk), size=count)
        length = np.clip(np.round(2.0 ** logs).astype(np.int64), 1, kk)
        for a in grp:
            off = rng.integers(0, kk - length + 1)
            scale = counts[a] // k[a]
            starts[:, a] = off * scale
            stops[:, a] = (off + length) * scale
    return starts, stops


def muckenhoupt_constant(w: Weight, p: float, basis: str = BASIS_RECT, depth: int | None = None,
                         extra_rects: int = 0, seed=0, root: Rect | None = None,
                         pool: str = POOL_STRONG) -> float:
    """Largest ``A_p`` characteristic over the pool (a lower bound of ``[w]_{A_p}``).

    For ``p > 1`` this is ``avg(w) avg(w^(-1/(p-1)))^(p-1)``; for ``p = 1``
    it is ``avg(w) / min(w)`` with the minimum over cells of the rect.
    """
    return ap_scan(w, p, basis, depth, extra_rects, seed, root, pool)["max"]


def ap_scan(w: Weight, p: float, basis: str = BASIS_RECT, depth: int | None = None,
            extra_rects: int = 0, seed=0, root: Rect | None = None, pool: str = POOL_STRONG) -> dict:
    if p < 1:
        raise WeightError("p must be >= 1")
    root = w.grid.root(basis) if root is None else root
    vals = _normalized(w, root)
    best, arg, scanned = -math.inf, None, 0
    for levels in pool_levels(w, root, depth, pool, basis):
        a = ap_values(vals, levels, p)
        scanned += a.size
        i = int(np.argmax(a))
        if a.flat[i] > best:
            best = float(a.flat[i])
            arg = (levels, np.unravel_index(i, a.shape))
    if extra_rects:
        starts, stops = random_boxes(vals.shape, basis, root.root.split, extra_rects, seed)
        cnt = np.prod(stops - starts, axis=1).astype(float)
        avg = box_sums(prefix_sums(vals), starts, stops) / cnt
        if p == 1:
            mins = np.array([vals[tuple(slice(s, e) for s, e in zip(a, b))].min() for a, b in zip(starts, stops)])
            a = avg / mins
        else:
            avg_s = box_sums(prefix_sums(_sigma(vals, p)), starts, stops) / cnt
            a = avg * avg_s ** (p - 1.0)
        scanned += a.size
        best = max(best, float(a.max()))
    return {"max": best, "argmax": arg, "scanned": scanned}


def _piece_bounds(count: int, coarse: int, fine: int, shift: int) -> np.ndarray:
    """Piece starts on one axis: cuts of the ``coarse`` blocks refined by a
    lattice of ``fine`` blocks shifted by ``shift`` cells (cyclically)."""
    step_c = count // coarse
    step_f = count // fine
    cuts = set(range(0, count, step_c))
    cuts.update((np.arange(fine) * step_f + shift) % count)
    return np.array(sorted(cuts), dtype=np.int64)


def _shifted_max(vals: np.ndarray, levels, fine_levels, shifts, require_full: bool) -> np.ndarray:
    """Cellwise max of piece averages ``J cap R`` for one shifted lattice."""
    n = vals.ndim
    bounds = []
    for ax in range(n):
        c = vals.shape[ax]
        bounds.append(_piece_bounds(c, 1 << levels[ax], 1 << fine_levels[ax], shifts[ax]))
    sums = vals
    for ax in range(n):
        sums = np.add.reduceat(sums, bounds[ax], axis=ax)
    lens = [np.diff(np.append(b, vals.shape[ax])) for ax, b in enumerate(bounds)]
    cnt = np.ones(sums.shape)
    for ax in range(n):
        sh = [1] * n
        sh[ax] = -1
        cnt = cnt * lens[ax].reshape(sh)
    avg = sums / cnt
    if require_full:
        ok = np.ones(sums.shape, dtype=bool)
        for ax in range(n):
            full = lens[ax] == vals.shape[ax] >> fine_levels[ax]
            sh = [1] * n
            sh[ax] = -1
            ok = ok & full.reshape(sh)
        avg = np.where(ok, avg, 0.0)
    for ax in range(n):
        avg = np.repeat(avg, lens[ax], axis=ax)
    return avg


def shift_sequence(shape, count: int, seed) -> list:
    """Nested cell shifts: the first ``k`` are the same for every ``count >= k``."""
    rng = np.random.default_rng(seed)
    out = [tuple(0 for _ in shape)]
    for _ in range(max(count - 1, 0)):
        out.append(tuple(int(rng.integers(0, c)) for c in shape))
    return out[:max(count, 1)]


def fujii_wilson_constant(w: Weight, basis: str = BASIS_RECT, depth: int | None = None, shifts: int = 1,
                          seed=0, root: Rect | None = None, pool: str = POOL_STRONG) -> float:
    """Pool estimate of ``sup_R (1/w(R)) int_R M(w 1_R)``.

    The maximal function is the max of dyadic maximal functions over
    ``shifts`` translated lattices (shift 0 is the unshifted one), restricted
    to pieces inside ``R``.
    """
    return fw_scan(w, basis, depth, shifts, seed, root, pool)["max"]


def fw_scan(w: Weight, basis: str = BASIS_RECT, depth: int | None = None, shifts: int = 1, seed=0,
            root: Rect | None = None, pool: str = POOL_STRONG) -> dict:
    root = w.grid.root(basis) if root is None else root
    vals = _normalized(w, root)
    shape = vals.shape
    levels_all = pool_levels(w, root, depth, pool, basis)
    caps = pool_levels(w, root, None, pool, basis)
    n = vals.ndim

    # unshifted: G_j = max_{k >= j} avg_k, built from the finest level tuple up
    avg_up = {}
    for lv in caps:
        count = math.prod(c >> j for c, j in zip(shape, lv))
        avg_up[lv] = upsample(reduce_blocks(vals, lv) / count, shape)
    gmax = {}
    for lv in sorted(caps, key=lambda t: -sum(t)):
        g = avg_up[lv]
        for ax in range(n):
            nxt = list(lv)
            for a in _axis_group(ax, basis, root.root.split, n, pool):
                nxt[a] += 1
            nxt = tuple(nxt)
            if nxt in gmax:
                g = np.maximum(g, gmax[nxt])
        gmax[lv] = g

    shift_list = shift_sequence(shape, shifts, seed)
    best, scanned = -math.inf, 0
    for lv in levels_all:
        g = gmax[lv]
        for sh in shift_list[1:]:
            for fine in caps:
                if all(f >= j for f, j in zip(fine, lv)):
                    g = np.maximum(g, _shifted_max(vals, lv, fine, sh, basis == BASIS_PRODUCT))
        ratio = reduce_blocks(g, lv) / reduce_blocks(vals, lv)
        scanned += ratio.size
        best = max(best, float(ratio.max()))
    return {"max": best, "scanned": scanned, "shifts": shift_list}


def _axis_group(ax, basis, split, n, pool):
    if pool != POOL_STRONG:
        return tuple(range(n))
    if basis == BASIS_PRODUCT:
        n1 = split[0]
        return tuple(range(n1)) if ax < n1 else tuple(range(n1, n))
    return (ax,)


def lebesgue_r_average(w: Weight, r: float, rect: Rect) -> float:
    """``w_r(R) = |R| (avg_R w^r)^(1/r)``."""
    if r <= 1:
        raise WeightError("r must exceed 1")
    vals = w.function.on(rect)
    scale = vals.max()
    return rect.measure * scale * float(np.mean((vals / scale) ** r)) ** (1.0 / r)


def rhi_epsilon(ainf: float, n: int) -> float:
    return 1.0 / (2 ** (n + 1) * ainf - 1.0)


def reverse_holder_check(w: Weight, rect: Rect, ainf: float, depth: int = 0) -> CheckReport:
    """``avg(w^(1+eps)) <= 2 avg(w)^(1+eps)`` at ``eps = 1/(2^(n+1) ainf - 1)``.

    With ``depth > 0`` every dyadic descendant of ``rect`` to that depth is
    checked and the worst one reported.
    """
    if ainf < 1:
        raise WeightError("A_infinity constant must be >= 1")
    n = rect.ndim
    eps = rhi_epsilon(ainf, n)
    worst = None
    checked = 0
    for sub in subtree(rect, depth):
        vals = w.function.on(sub)
        scale = vals.mean()
        # normalize before powering, then restore the common factor
        lhs = float(np.mean((vals / scale) ** (1 + eps))) * scale ** (1 + eps)
        rhs = 2.0 * scale ** (1 + eps)
        checked += 1
        if worst is None or lhs / rhs > worst[0] / worst[1]:
            worst = (lhs, rhs, sub)
    lhs, rhs, sub = worst
    return CheckReport(
        check_id="W1",
        params={"epsilon": eps, "ainf": ainf, "depth": depth, "n": n},
        lhs=lhs,
        rhs=rhs,
        passed=lhs <= rhs,
        mode=EXPLICIT,
        empirical_constant=2.0 * lhs / rhs,
        details={"worst_rect": repr(sub), "rects_checked": checked},
    )


@dataclass
class WeightReport:
    ap: dict
    ainf: float
    depth: int | None
    scanned: int
    flags: list = field(default_factory=list)


def weight_report(w: Weight, ps=(1.0, 2.0), basis: str = BASIS_RECT, depth: int | None = None,
                  extra_rects: int = 0, shifts: int = 2, seed=0) -> WeightReport:
    ap, scanned = {}, 0
    for p in ps:
        res = ap_scan(w, p, basis, depth, extra_rects, seed)
        ap[float(p)] = res["max"]
        scanned = max(scanned, res["scanned"])
    fw = fw_scan(w, basis, depth, shifts, seed)
    return WeightReport(ap=ap, ainf=fw["max"], depth=depth, scanned=scanned)
