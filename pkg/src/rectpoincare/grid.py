"""Boxes, dyadic rectangles, sampled functions and midpoint quadrature.

A :class:`Rect` is an address (root box, level, index vector) inside a root
:class:`Box`. Its geometry is derived from the address, so two rects with
the same address are equal and hashable. Integration runs on a
:class:`Grid` whose per-axis resolution is a power of two, which makes every
rect of level ``j <= log2(N)`` a union of whole cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Iterator, Sequence

import numpy as np

BASIS_RECT = "R"
BASIS_PRODUCT = "Rtilde"
BASES = (BASIS_RECT, BASIS_PRODUCT)
MAX_DIM = 4

_ALIGN_TOL = 1e-9


class GridError(ValueError):
    """Invalid box, grid or rectangle request."""


class AlignmentError(GridError):
    """A rectangle does not fall on whole cells of the grid."""


def is_power_of_two(k: int) -> bool:
    return isinstance(k, (int, np.integer)) and k >= 1 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class Box:
    """Axis-parallel box ``prod [lower_i, upper_i]``.

    ``split`` is ``(n1, n2)`` for product-of-cubes boxes; the first ``n1`` axes
    form block 1 and the remaining ``n2`` axes block 2.
    """

    lower: tuple
    upper: tuple
    split: tuple | None = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not 1 <= len(lo) <= MAX_DIM:
            raise GridError(f"box needs 1..{MAX_DIM} axes with matching bounds")
        for a, b in zip(lo, hi):
            if not (math.isfinite(a) and math.isfinite(b) and b > a):
                raise GridError(f"upper bound must exceed lower bound, got [{a}, {b}]")
        if self.split is not None:
            split = tuple(int(v) for v in self.split)
            object.__setattr__(self, "split", split)
            if len(split) != 2 or min(split) < 1 or sum(split) != len(lo):
                raise GridError(f"split {split} must be two positive block sizes summing to {len(lo)}")
            sides = self.sides
            for blk in self.blocks:
                ref = sides[blk[0]]
                if any(abs(sides[i] - ref) > 1e-12 * max(1.0, ref) for i in blk):
                    raise GridError("product-of-cubes box needs equal sides within each block")

    @property
    def ndim(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> tuple:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def measure(self) -> float:
        return math.prod(self.sides)

    @property
    def blocks(self) -> tuple:
        """Axis index tuples of the two blocks, or one block holding every axis."""
        if self.split is None:
            return (tuple(range(self.ndim)),)
        n1 = self.split[0]
        return (tuple(range(n1)), tuple(range(n1, self.ndim)))

    @classmethod
    def cube(cls, n: int, lo: float = 0.0, hi: float = 1.0, split=None) -> "Box":
        return cls((lo,) * n, (hi,) * n, split)


@dataclass(frozen=True)
class Geometry:
    sides: tuple
    diameter: float
    measure: float
    eccentricity: float
    block_eccentricity: float | None = None


@dataclass(frozen=True)
class Rect:
    """Dyadic descendant of ``root`` at ``level`` with per-axis ``index``."""

    root: Box
    level: int = 0
    index: tuple = None
    basis: str = BASIS_RECT

    def __post_init__(self):
        n = self.root.ndim
        idx = (0,) * n if self.index is None else tuple(int(i) for i in self.index)
        object.__setattr__(self, "index", idx)
        if self.level < 0:
            raise GridError("level must be nonnegative")
        if len(idx) != n:
            raise GridError(f"index needs {n} entries")
        if any(i < 0 or i >= (1 << self.level) for i in idx):
            raise GridError(f"index {idx} out of range for level {self.level}")
        if self.basis not in BASES:
            raise GridError(f"unknown basis {self.basis!r}")
        if self.basis == BASIS_PRODUCT and self.root.split is None:
            raise GridError("product-of-cubes rect needs a root box with a block split")

    @property
    def ndim(self) -> int:
        return self.root.ndim

    @cached_property
    def sides(self) -> tuple:
        s = 0.5 ** self.level
        return tuple(side * s for side in self.root.sides)

    @cached_property
    def lower(self) -> tuple:
        return tuple(a + i * h for a, i, h in zip(self.root.lower, self.index, self.sides))

    @cached_property
    def upper(self) -> tuple:
        return tuple(a + (i + 1) * h for a, i, h in zip(self.root.lower, self.index, self.sides))

    @property
    def measure(self) -> float:
        return math.prod(self.sides)

    @property
    def diameter(self) -> float:
        return math.sqrt(sum(s * s for s in self.sides))

    @property
    def eccentricity(self) -> float:
        return self.measure ** (1.0 / self.ndim) / self.diameter

    @property
    def block_sides(self) -> tuple:
        """Common side length of each block (only for product-of-cubes rects)."""
        if self.basis != BASIS_PRODUCT:
            raise GridError("block sides exist only for product-of-cubes rects")
        return tuple(self.sides[blk[0]] for blk in self.root.blocks)

    @property
    def block_eccentricity(self) -> float | None:
        if self.basis != BASIS_PRODUCT:
            return None
        l1, l2 = self.block_sides
        n2 = self.root.split[1]
        return (l2 / l1) ** n2

    def geometry(self) -> Geometry:
        return geometry(self)

    def children(self) -> list:
        return dyadic_children(self)

    def contains(self, other: "Rect") -> bool:
        """True when ``other`` is this rect or one of its dyadic descendants."""
        if other.root != self.root or other.level < self.level:
            return False
        shift = other.level - self.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def as_root(self) -> Box:
        """A standalone box equal to this rect (used to re-root a subtree)."""
        return Box(self.lower, self.upper, self.root.split)

    def __repr__(self):
        span = " x ".join(f"[{a:.6g},{b:.6g}]" for a, b in zip(self.lower, self.upper))
        return f"Rect({span}, level={self.level}, basis={self.basis})"


def geometry(r: Rect) -> Geometry:
    return Geometry(
        sides=r.sides,
        diameter=r.diameter,
        measure=r.measure,
        eccentricity=r.eccentricity,
        block_eccentricity=r.block_eccentricity,
    )


def root_rect(box: Box, basis: str = BASIS_RECT) -> Rect:
    return Rect(box, 0, None, basis)


def dyadic_children(r: Rect) -> list:
    """The ``2**n`` children of ``r`` obtained by halving every side."""
    base = tuple(2 * i for i in r.index)
    out = []
    for bits in product((0, 1), repeat=r.ndim):
        out.append(Rect(r.root, r.level + 1, tuple(b + c for b, c in zip(base, bits)), r.basis))
    return out


def descendants(r: Rect, depth: int) -> Iterator[Rect]:
    """All dyadic descendants exactly ``depth`` levels below ``r``."""
    k = 1 << depth
    base = tuple(i * k for i in r.index)
    for off in product(range(k), repeat=r.ndim):
        yield Rect(r.root, r.level + depth, tuple(b + o for b, o in zip(base, off)), r.basis)


def subtree(r: Rect, depth: int) -> Iterator[Rect]:
    """``r`` and its descendants down to ``depth`` levels, coarse first."""
    for d in range(depth + 1):
        yield from descendants(r, d)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid of cells over ``box``."""

    box: Box
    resolution: tuple

    def __post_init__(self):
        res = self.resolution
        if isinstance(res, (int, np.integer)):
            res = (int(res),) * self.box.ndim
        res = tuple(int(v) for v in res)
        if len(res) != self.box.ndim:
            raise GridError(f"resolution needs {self.box.ndim} entries")
        for v in res:
            if v < 2 or not is_power_of_two(v):
                raise GridError(f"resolution {v} must be a power of two >= 2")
        if self.box.split is not None:
            for blk in self.box.blocks:
                if len({res[i] for i in blk}) != 1:
                    raise GridError("resolution must be equal within each block")
        object.__setattr__(self, "resolution", res)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.box == other.box and self.resolution == other.resolution

    def __hash__(self):
        return hash((self.box, self.resolution))

    @property
    def ndim(self) -> int:
        return self.box.ndim

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return math.prod(self.resolution)

    @cached_property
    def steps(self) -> tuple:
        return tuple(s / k for s, k in zip(self.box.sides, self.resolution))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.steps)

    @cached_property
    def centers(self) -> tuple:
        return tuple(
            a + (np.arange(k) + 0.5) * h
            for a, k, h in zip(self.box.lower, self.resolution, self.steps)
        )

    @cached_property
    def mesh(self) -> tuple:
        """Broadcastable coordinate arrays, one per axis (sparse meshgrid)."""
        return tuple(np.meshgrid(*self.centers, indexing="ij", sparse=True))

    @property
    def max_level(self) -> int:
        """Deepest dyadic level of the root box that is still cell aligned."""
        return min(int(k).bit_length() - 1 for k in self.resolution)

    def root(self, basis: str = BASIS_RECT) -> Rect:
        return root_rect(self.box, basis)

    def cell_span(self, r: Rect) -> tuple:
        """Per-axis ``(start, stop)`` cell indices covered by ``r``."""
        out = []
        for a, lo, hi, h, k in zip(self.box.lower, r.lower, r.upper, self.steps, self.resolution):
            s = (lo - a) / h
            e = (hi - a) / h
            si, ei = round(s), round(e)
            if abs(s - si) > _ALIGN_TOL * max(1.0, abs(s)) or abs(e - ei) > _ALIGN_TOL * max(1.0, abs(e)):
                raise AlignmentError(f"{r!r} is not aligned with cells of width {h:.6g}; raise the resolution")
            if si < 0 or ei > k or ei <= si:
                raise AlignmentError(f"{r!r} lies outside the grid box")
            out.append((si, ei))
        return tuple(out)

    def slices(self, r: Rect) -> tuple:
        return tuple(slice(s, e) for s, e in self.cell_span(r))

    def is_aligned(self, r: Rect) -> bool:
        try:
            self.cell_span(r)
        except AlignmentError:
            return False
        return True

    def cell_count(self, r: Rect) -> int:
        return math.prod(e - s for s, e in self.cell_span(r))

    def sample(self, fn) -> "GridFunction":
        """Evaluate a vectorized callable ``fn(x1, ..., xn)`` at cell centers."""
        vals = np.broadcast_to(np.asarray(fn(*self.mesh), dtype=float), self.shape)
        return GridFunction(self, np.array(vals))


def build_grid(box: Box, resolution) -> Grid:
    return Grid(box, resolution)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """One real value per cell, sampled at cell centers."""

    grid: Grid
    values: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {vals.size}")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise GridError("grid function has non-finite values")
        if self.nonnegative and vals.min() < 0:
            raise GridError("nonnegative grid function has negative values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def on(self, r: Rect) -> np.ndarray:
        return self.values[self.grid.slices(r)]

    def map(self, fn, nonnegative: bool = False) -> "GridFunction":
        return GridFunction(self.grid, fn(self.values), nonnegative)

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, c * self.values, self.nonnegative and c >= 0)


def integrate(f: GridFunction, r: Rect, weight: GridFunction | None = None) -> float:
    """Midpoint rule ``sum f * w * cellvol`` over the cells of ``r``."""
    sl = f.grid.slices(r)
    vals = f.values[sl]
    if weight is not None:
        if weight.grid != f.grid:
            raise GridError("weight lives on a different grid")
        vals = vals * weight.values[sl]
    return float(np.sum(vals)) * f.grid.cell_volume


def average(f: GridFunction, r: Rect, weight: GridFunction | None = None) -> float:
    if weight is None:
        return float(np.mean(f.on(r)))
    return integrate(f, r, weight) / integrate(weight_ones(weight), r, weight)


def weight_ones(w: GridFunction) -> GridFunction:
    return GridFunction(w.grid, np.ones(w.grid.shape), True)


def block_sums(arr: np.ndarray, depth: int) -> list:
    """Sums of ``arr`` over the dyadic blocks of levels ``0..depth``.

    Level ``depth`` is formed from the cells and each coarser level from its
    children, so a parent sum is exactly the floating-point sum of its
    ``2**n`` children sums.
    """
    n = arr.ndim
    k = 1 << depth
    shape = []
    for c in arr.shape:
        if c % k:
            raise AlignmentError(f"{c} cells cannot be split into {k} dyadic blocks")
        shape += [k, c // k]
    fine = arr.reshape(shape).sum(axis=tuple(range(1, 2 * n, 2)))
    out = [fine]
    for j in range(depth - 1, -1, -1):
        m = 1 << j
        cur = out[-1].reshape(sum(([m, 2] for _ in range(n)), []))
        out.append(cur.sum(axis=tuple(range(1, 2 * n, 2))))
    out.reverse()
    return out


def upsample(level_arr: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Spread per-block values of a dyadic level back onto cells."""
    out = level_arr
    for ax, c in enumerate(shape):
        out = np.repeat(out, c // level_arr.shape[ax], axis=ax)
    return out


class DisjointFamily:
    """Pairwise disjoint dyadic descendants of a common root rect."""

    __slots__ = ("root", "members", "measure")

    def __init__(self, root: Rect, members: Iterable[Rect] = ()):
        members = tuple(members)
        seen = set()
        for m in members:
            if not root.contains(m):
                raise GridError(f"{m!r} is not a dyadic descendant of the family root")
            if m.basis != root.basis:
                raise GridError("family members must share the root basis")
            key = (m.level, m.index)
            if key in seen:
                raise GridError(f"duplicate member {m!r}")
            seen.add(key)
        for m in members:
            idx, lev = m.index, m.level
            while lev > root.level:
                lev -= 1
                idx = tuple(i >> 1 for i in idx)
                if (lev, idx) in seen:
                    raise GridError(f"{m!r} overlaps an ancestor in the family")
        self.root = root
        self.members = members
        self.measure = math.fsum(m.measure for m in members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def fraction(self) -> float:
        """``|union| / |root|``."""
        return self.measure / self.root.measure

    def __repr__(self):
        return f"DisjointFamily({len(self.members)} members, fraction={self.fraction:.4g})"


POOL_DYADIC = "dyadic"
POOL_STRONG = "strong"


def level_tuples(counts: Sequence[int], depth: int, basis: str = BASIS_RECT, split=None,
                 pool: str = POOL_STRONG) -> list:
    """Per-axis dyadic level vectors scanned by a rectangle pool.

    ``dyadic`` keeps only equal levels (true dyadic descendants). ``strong``
    lets every axis refine on its own (every product of dyadic intervals),
    except that axes of a block stay tied for product-of-cubes rects.
    """
    n = len(counts)
    caps = [min(depth, int(c).bit_length() - 1) for c in counts]
    if pool == POOL_DYADIC:
        return [(j,) * n for j in range(min(caps) + 1)]
    if pool != POOL_STRONG:
        raise GridError(f"unknown pool {pool!r}")
    if basis == BASIS_PRODUCT:
        if split is None:
            raise GridError("product-of-cubes pool needs a block split")
        n1 = split[0]
        c1, c2 = min(caps[:n1]), min(caps[n1:])
        return [(a,) * n1 + (b,) * (n - n1) for a in range(c1 + 1) for b in range(c2 + 1)]
    return list(product(*[range(c + 1) for c in caps]))


def reduce_blocks(arr: np.ndarray, levels: Sequence[int], op=np.add) -> np.ndarray:
    """Reduce ``arr`` over blocks of ``2**levels[i]`` parts per axis."""
    shape = []
    for c, j in zip(arr.shape, levels):
        k = 1 << j
        if c % k:
            raise AlignmentError(f"{c} cells cannot be split into {k} blocks")
        shape += [k, c // k]
    return op.reduce(arr.reshape(shape), axis=tuple(range(1, 2 * arr.ndim, 2)))


def prefix_sums(arr: np.ndarray) -> np.ndarray:
    """Zero-padded n-D cumulative sums for O(2^n) box sums."""
    out = np.zeros(tuple(c + 1 for c in arr.shape))
    out[tuple(slice(1, None) for _ in arr.shape)] = arr
    for ax in range(arr.ndim):
        np.cumsum(out, axis=ax, out=out)
    return out


def box_sums(prefix: np.ndarray, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Sums over half-open cell boxes ``[starts, stops)`` (rows are boxes)."""
    starts = np.atleast_2d(starts)
    stops = np.atleast_2d(stops)
    n = starts.shape[1]
    total = np.zeros(starts.shape[0])
    for corner in product((0, 1), repeat=n):
        idx = tuple(np.where(c, stops[:, ax], starts[:, ax]) for ax, c in enumerate(corner))
        sign = -1.0 if (n - sum(corner)) % 2 else 1.0
        total += sign * prefix[idx]
    return total
