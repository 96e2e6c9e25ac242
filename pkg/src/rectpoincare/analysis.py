"""Oscillations, polynomial projections, maximal functions, CZ decomposition,
truncations and weak norms on grid functions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import brentq

from .grid import (
    DisjointFamily,
    GridError,
    GridFunction,
    Rect,
    block_sums,
    descendants,
    upsample,
)
from .weights import Weight

MAX_DEGREE = 3


class AnalysisError(GridError):
    pass


def multi_indices(n: int, m: int) -> list:
    """Exponent vectors of total degree ``<= m``, graded."""
    out = [a for a in product(range(m + 1), repeat=n) if sum(a) <= m]
    return sorted(out, key=lambda a: (sum(a), tuple(-x for x in a)))


def _local_coords(counts) -> list:
    """Cell-center coordinates scaled to ``[-1, 1]`` inside a block."""
    return [(2.0 * np.arange(c) + 1.0) / c - 1.0 for c in counts]


def _monomials(counts, m: int) -> np.ndarray:
    """Monomial table, shape ``(n_basis, *counts)``."""
    coords = np.meshgrid(*_local_coords(counts), indexing="ij")
    rows = []
    for a in multi_indices(len(counts), m):
        v = np.ones(tuple(counts))
        for t, k in zip(coords, a):
            if k:
                v = v * t ** k
        rows.append(v)
    return np.array(rows)


class _Basis:
    """Orthonormal polynomial basis for ``<f, g> = avg(f g)`` on a block."""

    def __init__(self, counts, m: int):
        if not 0 <= m <= MAX_DEGREE:
            raise AnalysisError(f"degree must be in 0..{MAX_DEGREE}")
        mono = _monomials(counts, m).reshape(len(multi_indices(len(counts), m)), -1)
        if mono.shape[0] > mono.shape[1]:
            raise AnalysisError(f"{mono.shape[1]} cells cannot carry {mono.shape[0]} basis polynomials")
        gram = mono @ mono.T / mono.shape[1]
        chol = np.linalg.cholesky(gram)
        self.phi = np.linalg.solve(chol, mono)  # rows orthonormal
        self.counts = tuple(counts)
        self.m = m

    @property
    def gram(self) -> np.ndarray:
        return self.phi @ self.phi.T / self.phi.shape[1]

    @property
    def kernel_sup(self) -> float:
        """Sharp constant ``C`` in ``max|P f| <= C avg|f|``: the kernel diagonal max."""
        return float(np.max(np.sum(self.phi ** 2, axis=0)))


@dataclass
class PolyProjection:
    """``P_R f``: coefficients in the orthonormal basis of the rect."""

    rect: Rect
    degree: int
    coefficients: np.ndarray
    basis: _Basis

    def values(self) -> np.ndarray:
        """``P_R f`` on the cells of the rect."""
        return (self.coefficients @ self.basis.phi).reshape(self.basis.counts)

    @property
    def projection_constant(self) -> float:
        return self.basis.kernel_sup


def _counts(f: GridFunction, r: Rect) -> tuple:
    return tuple(e - s for s, e in f.grid.cell_span(r))


def project_polynomial(f: GridFunction, r: Rect, m: int) -> PolyProjection:
    """Least-squares projection of ``f`` onto polynomials of degree ``<= m`` on ``r``."""
    vals = f.on(r)
    basis = _Basis(vals.shape, m)
    if m == 0:
        coef = np.array([float(np.mean(vals))])
    else:
        coef = basis.phi @ vals.ravel() / vals.size
    return PolyProjection(r, m, coef, basis)


def _weighted_mean(vals, wv):
    if wv is None:
        return float(np.mean(vals))
    return float(np.sum(vals * wv) / np.sum(wv))


def _delta_objective(vals, wv, cs, q):
    """``sum w |v - c|^q`` for each ``c`` in ``cs`` (chunked)."""
    out = np.empty(len(cs))
    flat = vals.ravel()
    wflat = None if wv is None else wv.ravel()
    chunk = max(1, 2_000_000 // max(flat.size, 1))
    for i in range(0, len(cs), chunk):
        d = np.abs(flat[None, :] - cs[i:i + chunk, None]) ** q
        out[i:i + chunk] = d.sum(axis=1) if wflat is None else d @ wflat
    return out


def optimal_center(vals: np.ndarray, q: float, wv: np.ndarray | None = None) -> float:
    """Minimizer over constants ``c`` of ``avg_w |v - c|^q``.

    ``q = 1`` gives the weighted median. For ``q < 1`` the objective is
    concave between consecutive data values, so the minimum is attained at a
    data value; small inputs are scanned exhaustively, large ones on 256
    quantiles followed by an exhaustive scan of the neighbouring brackets.
    For ``q > 1`` the objective is convex and its derivative is solved for zero.
    """
    flat = np.asarray(vals, dtype=float).ravel()
    wflat = None if wv is None else np.asarray(wv, dtype=float).ravel()
    if flat.min() == flat.max():
        return float(flat[0])
    if q == 1:
        order = np.argsort(flat, kind="stable")
        ws = np.ones(flat.size) if wflat is None else wflat[order]
        cum = np.cumsum(ws)
        i = int(np.searchsorted(cum, 0.5 * cum[-1]))
        return float(flat[order][min(i, flat.size - 1)])
    if q > 1:
        # the derivative of the convex objective is monotone in c
        ws = np.ones(flat.size) if wflat is None else wflat

        def slope(c):
            d = flat - c
            return float(np.sum(ws * np.sign(d) * np.abs(d) ** (q - 1)))

        lo, hi = float(flat.min()), float(flat.max())
        return float(brentq(slope, lo, hi, xtol=4 * np.finfo(float).eps * (1 + hi - lo), rtol=4 * np.finfo(float).eps))
    uniq = np.unique(flat)
    if uniq.size <= 4096:
        obj = _delta_objective(flat, wflat, uniq, q)
        return float(uniq[int(np.argmin(obj))])
    qs = np.unique(np.quantile(uniq, np.linspace(0, 1, 256), method="inverted_cdf"))
    obj = _delta_objective(flat, wflat, qs, q)
    i = int(np.argmin(obj))
    lo = qs[max(i - 1, 0)]
    hi = qs[min(i + 1, qs.size - 1)]
    cand = uniq[(uniq >= lo) & (uniq <= hi)]
    obj = _delta_objective(flat, wflat, cand, q)
    return float(cand[int(np.argmin(obj))])


def oscillation(f: GridFunction, r: Rect, q: float = 1.0, w: Weight | None = None,
                center: str = "mean", m: int = 0) -> float:
    """``((1/w(R)) int_R |f - c|^q w)^(1/q)``.

    ``center`` is ``"mean"`` (``c = f_R``, weighted mean when ``w`` is
    given), ``"poly"`` (``c = P_R f`` of degree ``m``) or ``"optimal"`` (the
    best constant for this ``q``).
    """
    if q <= 0:
        raise AnalysisError("q must be positive")
    vals = f.on(r)
    if vals.size == 0:
        raise AnalysisError("empty rect")
    wv = None if w is None else w.function.on(r)
    if center == "mean":
        c = _weighted_mean(vals, wv)
    elif center == "poly":
        c = project_polynomial(f, r, m).values()
    elif center == "optimal":
        c = optimal_center(vals, q, wv)
    else:
        raise AnalysisError(f"unknown center {center!r}")
    dev = np.abs(vals - c)
    return _lq_mean(dev, wv, q)


def _lq_mean(dev: np.ndarray, wv, q: float) -> float:
    scale = float(dev.max())
    if scale == 0:
        return 0.0
    t = (dev / scale) ** q
    avg = float(np.mean(t)) if wv is None else float(np.sum(t * wv) / np.sum(wv))
    return scale * avg ** (1.0 / q)


def lq_norm(g: np.ndarray, q: float, wv: np.ndarray | None = None) -> float:
    """Normalized ``L^q`` norm of cell values (``avg`` under ``w``)."""
    return _lq_mean(np.abs(np.asarray(g, dtype=float)), wv, q)


def weak_norm_values(vals: np.ndarray, p: float, wv: np.ndarray | None = None) -> float:
    """Exact normalized weak ``L^{p,inf}`` norm of a discrete distribution.

    ``sup_t t (w{|g| > t}/w(R))^(1/p)``, attained as ``t`` increases to a
    distinct value ``v``, where the level set is ``{|g| >= v}``.
    """
    if p <= 0:
        raise AnalysisError("p must be positive")
    a = np.abs(np.asarray(vals, dtype=float)).ravel()
    ws = np.ones(a.size) if wv is None else np.asarray(wv, dtype=float).ravel()
    order = np.argsort(-a, kind="stable")
    a, ws = a[order], ws[order]
    cum = np.cumsum(ws) / np.sum(ws)
    # last index of each run of equal values gives the mass of {|g| >= v}
    last = np.r_[a[1:] != a[:-1], True]
    v, mass = a[last], cum[last]
    return float(np.max(v * mass ** (1.0 / p)))


def weak_norm(f: GridFunction, r: Rect, p: float, w: Weight | None = None) -> float:
    return weak_norm_values(f.on(r), p, None if w is None else w.function.on(r))


def alignment_depth(f: GridFunction, r: Rect) -> int:
    """Deepest dyadic level below ``r`` that is still cell aligned."""
    return min(int(c).bit_length() - 1 for c in _counts(f, r))


def _avg_pyramid(vals: np.ndarray, depth: int) -> list:
    sums = block_sums(vals, depth)
    n = vals.ndim
    return [s / (vals.size >> (n * j)) for j, s in enumerate(sums)]


def dyadic_maximal(g: GridFunction, r: Rect) -> GridFunction:
    """``M^d_R g``: max of ``avg_J |g|`` over dyadic ``J`` with ``x in J subset R``.

    Cells outside ``r`` are set to 0.
    """
    vals = np.abs(g.on(r))
    depth = alignment_depth(g, r)
    avgs = _avg_pyramid(vals, depth)
    m = np.zeros(vals.shape)
    for a in avgs:
        np.maximum(m, upsample(a, vals.shape), out=m)
    out = np.zeros(g.grid.shape)
    out[g.grid.slices(r)] = m
    return GridFunction(g.grid, out, True)


class CZFamily(DisjointFamily):
    """CZ family plus the selection averages and the level used."""

    __slots__ = ("level", "averages", "root_exceeds")


def cz_decompose(g: GridFunction, r: Rect, level: float) -> CZFamily:
    """Maximal dyadic subrectangles of ``r`` with ``avg_J g > level``.

    Averages come from one bottom-up pyramid, so every selected ``J``
    satisfies ``level < avg_J <= 2^n level`` exactly in floating point and the
    union equals ``{M^d_R g > level}`` cell by cell. If the root average
    already exceeds ``level`` the family is ``{r}`` and ``root_exceeds`` is set.
    """
    if level <= 0:
        raise AnalysisError("level must be positive")
    vals = g.on(r)
    if vals.min() < 0:
        raise AnalysisError("CZ decomposition needs a nonnegative function")
    depth = alignment_depth(g, r)
    avgs = _avg_pyramid(vals, depth)
    n = vals.ndim
    members, averages = [], []
    root_exceeds = avgs[0].flat[0] > level
    if root_exceeds:
        members, averages = [r], [float(avgs[0].flat[0])]
    else:
        blocked = np.zeros((1,) * n, dtype=bool)
        for j in range(1, depth + 1):
            blocked = upsample(blocked, avgs[j].shape)
            hit = (avgs[j] > level) & ~blocked
            for idx in map(tuple, np.argwhere(hit)):
                base = tuple(i << j for i in r.index)
                members.append(Rect(r.root, r.level + j, tuple(b + i for b, i in zip(base, idx)), r.basis))
                averages.append(float(avgs[j][idx]))
            blocked = blocked | hit
    fam = CZFamily(r, members)
    fam.level = level
    fam.averages = tuple(averages)
    fam.root_exceeds = bool(root_exceeds)
    return fam


def family_mask(f_grid_shape, grid, family) -> np.ndarray:
    """Boolean cell mask of the union of a family."""
    mask = np.zeros(f_grid_shape, dtype=bool)
    for m in family:
        mask[grid.slices(m)] = True
    return mask


def dyadic_pool(r: Rect, depth: int) -> list:
    return [d for j in range(depth + 1) for d in descendants(r, j)]


def sharp_maximal(f: GridFunction, m: int, pool=None, root: Rect | None = None,
                  depth: int | None = None) -> GridFunction:
    """``M^#_m f(x) = max_{J in pool, x in J} avg_J |f - P_J f|``.

    Without an explicit ``pool`` of rects the pool is every dyadic
    descendant of ``root`` (default: grid root) down to ``depth`` levels,
    evaluated level by level with one shared basis per level.
    """
    grid = f.grid
    if pool is None:
        out = np.zeros(grid.shape)
        root = grid.root() if root is None else root
        vals = f.on(root)
        dmax = alignment_depth(f, root)
        depth = dmax if depth is None else min(depth, dmax)
        sub = np.zeros(vals.shape)
        for j in range(depth + 1):
            counts = tuple(c >> j for c in vals.shape)
            if math.prod(counts) < len(multi_indices(vals.ndim, m)):
                break
            np.maximum(sub, upsample(_block_poly_osc(vals, j, m), vals.shape), out=sub)
        out[grid.slices(root)] = sub
        return GridFunction(grid, out, True)
    out = np.full(grid.shape, -np.inf)
    for rect in pool:
        proj = project_polynomial(f, rect, m)
        osc = float(np.mean(np.abs(f.on(rect) - proj.values())))
        sl = grid.slices(rect)
        out[sl] = np.maximum(out[sl], osc)
    if np.isneginf(out).any():
        raise AnalysisError("some cells are not covered by the rectangle pool")
    return GridFunction(grid, out, True)


def _block_poly_osc(vals: np.ndarray, j: int, m: int) -> np.ndarray:
    """``avg_J |f - P_J f|`` for every dyadic block ``J`` of level ``j``."""
    n = vals.ndim
    k = 1 << j
    counts = tuple(c // k for c in vals.shape)
    shape = []
    for c in vals.shape:
        shape += [k, c // k]
    blocks = vals.reshape(shape).transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
    blocks = blocks.reshape(k ** n, -1)
    if m == 0:
        resid = blocks - blocks.mean(axis=1, keepdims=True)
    else:
        phi = _Basis(counts, m).phi
        coef = blocks @ phi.T / phi.shape[1]
        resid = blocks - coef @ phi
    return np.abs(resid).mean(axis=1).reshape((k,) * n)


def truncate_level_values(g: np.ndarray, k: int) -> np.ndarray:
    """``T_k g = clamp(g - 2^k, 0, 2^k)``."""
    t = 2.0 ** k
    return np.clip(np.asarray(g, dtype=float) - t, 0.0, t)


def truncate(g: GridFunction, level: int | None = None, height: float | None = None) -> GridFunction:
    """Dyadic band truncation ``T_k`` (``level=k``) or ``min(|g|, m)`` (``height=m``)."""
    if (level is None) == (height is None):
        raise AnalysisError("give exactly one of level or height")
    if level is not None:
        if g.values.min() < 0:
            raise AnalysisError("level truncation needs a nonnegative function")
        return GridFunction(g.grid, truncate_level_values(g.values, level), True)
    if height < 0:
        raise AnalysisError("height must be nonnegative")
    return GridFunction(g.grid, np.minimum(np.abs(g.values), height), True)


def band_range(g: np.ndarray) -> tuple:
    """Levels ``(k_min, k_max)`` whose bands cover the positive values of ``g``.

    Band ``k`` covers ``(2^k, 2^(k+1)]``; values in ``(0, 2^k_min]`` are
    left to the remainder ``min(g, 2^k_min)``.
    """
    pos = np.asarray(g)[np.asarray(g) > 0]
    if pos.size == 0:
        return (0, -1)
    lo = math.floor(math.log2(pos.min())) - 1
    hi = math.ceil(math.log2(pos.max()))
    return lo, hi
