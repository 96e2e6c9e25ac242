"""Functionals ``a(R)`` and the derivative and kernel machinery they use."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from . import expr as ex
from .grid import BASIS_PRODUCT, Grid, GridError, GridFunction, Rect
from .kernels import DEFAULT_PAIR_BUDGET, pair_sum
from .weights import Weight

MAX_ORDER = 3


class FunctionalError(GridError):
    pass


class SampledFunction:
    """A function on a grid, optionally with its expression tree.

    The expression enables exact (symbolic) derivatives; without it
    derivatives come from central differences, one-sided at the boundary.
    """

    def __init__(self, grid: Grid, source=None, values=None, label: str = ""):
        self.grid = grid
        self.node = None
        if isinstance(source, str):
            self.node = ex.parse(source, grid.ndim)
            label = label or source
        elif source is not None:
            self.node = source
            label = label or ex.to_string(source)
        if values is None:
            if self.node is None:
                raise FunctionalError("need an expression or sampled values")
            values = np.broadcast_to(ex.evaluate(self.node, grid.mesh), grid.shape)
        self.function = GridFunction(grid, np.array(values, dtype=float))
        self.label = label
        self._derivs = {}

    @classmethod
    def from_values(cls, f: GridFunction, label: str = "") -> "SampledFunction":
        return cls(f.grid, None, f.values, label)

    @property
    def values(self) -> np.ndarray:
        return self.function.values

    @property
    def symbolic(self) -> bool:
        return self.node is not None

    def on(self, r: Rect) -> np.ndarray:
        return self.function.on(r)

    def scaled(self, c: float) -> "SampledFunction":
        node = None if self.node is None else ex.Binary("*", ex.Const(float(c)), self.node)
        out = SampledFunction(self.grid, node, c * self.values, f"{c}*({self.label})")
        return out

    def derivative_norm(self, axes: Sequence[int], order: int = 1) -> np.ndarray:
        """``|nabla^m_S f|`` on every cell (Euclidean norm over ordered partials)."""
        key = (tuple(axes), order)
        if key not in self._derivs:
            self._derivs[key] = derivative_field(self if self.symbolic else self.function, self.grid, axes, order).values
        return self._derivs[key]


def _multinomial(combo) -> int:
    out = math.factorial(len(combo))
    for a in set(combo):
        out //= math.factorial(combo.count(a))
    return out


def resolve_block(grid: Grid, block) -> tuple:
    """Axis tuple for ``"all"``, ``"block1"``/``"block2"``, an int block number or explicit axes."""
    if block in (None, "all"):
        return tuple(range(grid.ndim))
    if isinstance(block, str) and block.startswith("block"):
        block = int(block[5:])
    if isinstance(block, int):
        blocks = grid.box.blocks
        if grid.box.split is None or not 1 <= block <= len(blocks):
            raise FunctionalError(f"block {block} needs a box with a two-block split")
        return blocks[block - 1]
    axes = tuple(int(a) for a in block)
    if not axes or any(a < 0 or a >= grid.ndim for a in axes):
        raise FunctionalError(f"bad axis block {block!r}")
    return axes


def derivative_field(f, grid: Grid, block="all", order: int = 1) -> GridFunction:
    """Pointwise Euclidean norm of all order-``order`` partials along ``block``.

    ``f`` may be an expression (string or tree) or a
    :class:`SampledFunction` with an expression, both differentiated
    symbolically, or a :class:`GridFunction`, differentiated by central
    differences (second order inside, one-sided at the boundary).
    """
    if not 1 <= order <= MAX_ORDER:
        raise FunctionalError(f"derivative order must be in 1..{MAX_ORDER}")
    axes = resolve_block(grid, block)
    if isinstance(f, SampledFunction):
        f = f.node if f.symbolic else f.function
    if isinstance(f, str):
        f = ex.parse(f, grid.ndim)
    total = np.zeros(grid.shape)
    if isinstance(f, GridFunction):
        vals = f.values
        for combo in combinations_with_replacement(axes, order):
            d = vals
            for a in combo:
                d = np.gradient(d, grid.steps[a], axis=a, edge_order=2) if grid.shape[a] > 2 else \
                    np.gradient(d, grid.steps[a], axis=a)
            total += _multinomial(combo) * d * d
        return GridFunction(grid, np.sqrt(total), True)
    for combo in combinations_with_replacement(axes, order):
        node = f
        for a in combo:
            node = ex.differentiate(node, a)
        d = np.broadcast_to(ex.evaluate(node, grid.mesh), grid.shape)
        total += _multinomial(combo) * d * d
    return GridFunction(grid, np.sqrt(total), True)


def _as_sampled(f) -> SampledFunction:
    if isinstance(f, SampledFunction):
        return f
    if isinstance(f, GridFunction):
        return SampledFunction.from_values(f)
    raise FunctionalError(f"cannot use {type(f).__name__} as a test function")


def rect_length(r: Rect, length: str, axes=None) -> float:
    """``d(R)`` for ``"diameter"``, the largest side for ``"side"``, the side along ``axes`` for ``"block"``."""
    if length == "diameter":
        return r.diameter
    if length == "side":
        return max(r.sides)
    if length == "block":
        if axes is None:
            raise FunctionalError("block length needs axes")
        return max(r.sides[a] for a in axes)
    raise FunctionalError(f"unknown length {length!r}")


def _wmean(vals: np.ndarray, wv: np.ndarray | None) -> float:
    if wv is None:
        return float(np.mean(vals))
    return float(np.sum(vals * wv) / np.sum(wv))


@dataclass(frozen=True, eq=False)
class GradientM:
    """``scale * len^m * ((1/w(R)) int_R |nabla^m_S f|^p w)^(1/p)``."""

    m: int = 1
    p: float = 1.0
    weight: Weight | None = None
    length: str = "diameter"
    block: object = "all"
    scale: float = 1.0
    kind = "gradient"

    def basis(self):
        return BASIS_PRODUCT if self.block not in (None, "all") and not isinstance(self.block, tuple) else None


@dataclass(frozen=True, eq=False)
class Measure:
    """``scale * len^delta * (mu(R)/w(R))^(1/p)``."""

    delta: float
    p: float
    mu: GridFunction
    weight: Weight | None = None
    length: str = "diameter"
    scale: float = 1.0
    kind = "measure"

    def basis(self):
        return None


@dataclass(frozen=True, eq=False)
class FractionalFull:
    """``scale * len^delta [/ e(R)^(n/p)] * ((1/w(R)) int_R A(R, x) w)^(1/p)``.

    With ``length="side"`` on a cube and no weight this is the Gagliardo
    seminorm ``l(Q)^delta (avg_Q int_Q |u(x)-u(y)|^p/|x-y|^(n+delta p))^(1/p)``.
    """

    delta: float
    p: float = 1.0
    weight: Weight | None = None
    eccentricity_factor: bool = False
    length: str = "diameter"
    scale: float = 1.0
    kind = "fractional"

    def basis(self):
        return None


@dataclass(frozen=True, eq=False)
class BlockFractional:
    """Fractional functional along one block of axes.

    ``scale * l_S^delta * ((1/w(R)) int_R int_{I_S} |f(x)-f(x_S -> y_S)|^p /
    |x_S - y_S|^(n_S + delta p) dy_S w(x) dx)^(1/p)`` where ``S`` is
    ``block`` (``1``/``2`` for the two blocks of a product-of-cubes box, or
    an explicit axis tuple for m-fold products).
    """

    block: object
    delta: float
    p: float = 1.0
    weight: Weight | None = None
    include_length: bool = True
    scale: float = 1.0
    kind = "block_fractional"

    def basis(self):
        return BASIS_PRODUCT if isinstance(self.block, int) else None


@dataclass(frozen=True, eq=False)
class Sum:
    parts: tuple
    scale: float = 1.0
    kind = "sum"

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        bases = {b for b in (p.basis() for p in self.parts) if b is not None}
        if len(bases) > 1:
            raise FunctionalError("sum parts use different bases")

    def basis(self):
        for p in self.parts:
            if p.basis() is not None:
                return p.basis()
        return None


@dataclass(frozen=True, eq=False)
class ConstantOne:
    scale: float = 1.0
    kind = "constant"

    def basis(self):
        return None


FUNCTIONAL_KINDS = ("gradient", "measure", "fractional", "block_fractional", "sum", "constant")


@dataclass
class KernelSettings:
    budget: int = DEFAULT_PAIR_BUDGET
    jobs: int = 1
    flags: list = field(default_factory=list)


_DEFAULT_SETTINGS = KernelSettings()


def fractional_kernel_sum(f, r: Rect, delta: float, p: float, w: Weight | None = None, mode="seminorm",
                          length: str = "side", settings: KernelSettings | None = None):
    """Fractional double sums with the prefactors of their defining displays.

    ``mode``:
      ``"seminorm"``   ``len^delta ((1/w(R)) int_R int_R ... w(x))^(1/p)`` (plain average without ``w``)
      ``"A_of_x"``     the function ``A(R, x) = int_R |f(x)-f(y)|^p/|x-y|^(n+delta p) dy`` on the cells of ``R``
      ``("block", S)`` block functional along axes ``S`` (see :class:`BlockFractional`)
    """
    if not 0 < delta < 1:
        raise FunctionalError("delta must lie in (0, 1)")
    if p < 1:
        raise FunctionalError("p must be >= 1")
    settings = settings or _DEFAULT_SETTINGS
    sf = _as_sampled(f)
    grid = sf.grid
    vals = sf.on(r)
    if mode == "A_of_x":
        axes = tuple(range(grid.ndim))
        out, info = pair_sum(vals, grid.steps, axes, delta, p, sf.derivative_norm(axes)[grid.slices(r)],
                             pointwise=True, budget=settings.budget, jobs=settings.jobs)
        _note(settings, info)
        return out
    if mode == "seminorm":
        axes = tuple(range(grid.ndim))
        ell = rect_length(r, length)
    elif isinstance(mode, tuple) and mode[0] == "block":
        axes = resolve_block(grid, mode[1])
        ell = rect_length(r, "block", axes)
    else:
        raise FunctionalError(f"unknown kernel mode {mode!r}")
    wv = None if w is None else w.function.on(r)
    total, info = pair_sum(vals, grid.steps, axes, delta, p, sf.derivative_norm(axes)[grid.slices(r)],
                           weight=wv, budget=settings.budget, jobs=settings.jobs)
    _note(settings, info)
    cellvol = grid.cell_volume
    norm = r.measure if wv is None else float(np.sum(wv)) * cellvol
    return ell ** delta * (total / norm) ** (1.0 / p)


def _note(settings: KernelSettings, info: dict):
    if not info["corrected"] and "uncorrected_kernel" not in settings.flags:
        settings.flags.append("uncorrected_kernel")


def eval_functional(spec, f, r: Rect, settings: KernelSettings | None = None) -> float:
    """``a(R)`` for a functional spec and a test function ``f``."""
    want = spec.basis()
    if want == BASIS_PRODUCT and r.basis != BASIS_PRODUCT:
        raise FunctionalError(f"{type(spec).__name__} needs product-of-cubes rects")
    return spec.scale * _eval(spec, f, r, settings)


def _eval(spec, f, r, settings):
    if isinstance(spec, ConstantOne):
        return 1.0
    if isinstance(spec, Sum):
        return math.fsum(eval_functional(part, f, r, settings) for part in spec.parts)
    if isinstance(spec, Measure):
        grid = spec.mu.grid
        mu = float(np.sum(spec.mu.on(r)))
        wr = float(r.measure / grid.cell_volume) if spec.weight is None else float(np.sum(spec.weight.function.on(r)))
        return rect_length(r, spec.length) ** spec.delta * (mu / wr) ** (1.0 / spec.p)
    sf = _as_sampled(f)
    grid = sf.grid
    if isinstance(spec, GradientM):
        axes = resolve_block(grid, spec.block)
        g = sf.derivative_norm(axes, spec.m)[grid.slices(r)]
        wv = None if spec.weight is None else spec.weight.function.on(r)
        length = rect_length(r, "block", axes) if spec.length == "block" else rect_length(r, spec.length)
        scale = float(g.max())
        if scale == 0:
            return 0.0
        return length ** spec.m * scale * _wmean((g / scale) ** spec.p, wv) ** (1.0 / spec.p)
    if isinstance(spec, FractionalFull):
        val = fractional_kernel_sum(sf, r, spec.delta, spec.p, spec.weight, "seminorm", spec.length, settings)
        if spec.eccentricity_factor:
            val /= r.eccentricity ** (r.ndim / spec.p)
        return val
    if isinstance(spec, BlockFractional):
        val = fractional_kernel_sum(sf, r, spec.delta, spec.p, spec.weight, ("block", spec.block), "block", settings)
        if not spec.include_length:
            axes = resolve_block(grid, spec.block)
            val /= rect_length(r, "block", axes) ** spec.delta
        return val
    raise FunctionalError(f"unknown functional {spec!r}")


class FunctionalCache:
    """Memoizes ``a(R)`` by rect address for one (spec, f) pair."""

    def __init__(self, spec, f, settings: KernelSettings | None = None):
        self.spec = spec
        self.f = f
        self.settings = settings
        self._cache = {}

    def __call__(self, r: Rect) -> float:
        key = (r.root, r.level, r.index, r.basis)
        if key not in self._cache:
            self._cache[key] = eval_functional(self.spec, self.f, r, self.settings)
        return self._cache[key]
