import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from rectpoincare.functionals import (
    BlockFractional,
    ConstantOne,
    FractionalFull,
    FunctionalCache,
    FunctionalError,
    GradientM,
    KernelSettings,
    Measure,
    SampledFunction,
    Sum,
    derivative_field,
    eval_functional,
    fractional_kernel_sum,
    resolve_block,
)
from rectpoincare.grid import BASIS_PRODUCT, Box, Grid, GridFunction, Rect
from rectpoincare.kernels import KernelBudgetError
from rectpoincare.weights import make_weight, unit_weight


def _seminorm(grid, f, delta, p, **kw):
    return eval_functional(FractionalFull(delta, p, length="side", **kw), SampledFunction(grid, f), grid.root())


@pytest.mark.parametrize("delta", [0.3, 0.5, 0.9, 0.99])
def test_seminorm_of_identity_p1(delta):
    # int int |x-y|^(-delta) over [0,1]^2 = 2/((1-delta)(2-delta))
    grid = Grid(Box.cube(1), 1024)
    want = 2 / ((1 - delta) * (2 - delta))
    assert _seminorm(grid, "x", delta, 1.0) == pytest.approx(want, rel=1e-3)


@pytest.mark.parametrize("delta", [0.25, 0.6])
def test_seminorm_of_identity_p2(delta):
    grid = Grid(Box.cube(1), 1024)
    want = math.sqrt(2 / ((2 - 2 * delta) * (3 - 2 * delta)))
    assert _seminorm(grid, "x", delta, 2.0) == pytest.approx(want, rel=1e-3)


def test_seminorm_scales_with_side():
    # x on [0, 4]: u(x)-u(y) = x-y, so the seminorm is l^delta * l^(1-delta) * const = 4 * const
    delta = 0.5
    grid = Grid(Box.cube(1, 0.0, 4.0), 512)
    unit = 2 / ((1 - delta) * (2 - delta))
    assert _seminorm(grid, "x", delta, 1.0) == pytest.approx(4.0 * unit, rel=2e-3)


def _polar_oracle(delta):
    """int_[0,1]^2 int_[0,1]^2 |x1 - y1| / |x - y|^(2+delta) via the difference density."""
    def integrand(r, t):
        c, s = math.cos(t), math.sin(t)
        return (1 - r * c) * (1 - r * s) * c * r ** (-delta)

    val, _ = dblquad(integrand, 0, math.pi / 2, 0, lambda t: 1 / max(math.cos(t), math.sin(t)),
                     epsabs=1e-11, epsrel=1e-11)
    return 4 * val


@pytest.mark.parametrize("delta", [0.4, 0.8])
def test_seminorm_2d_converges_to_quadrature(delta):
    # near-diagonal pairs sample the difference quotient at centers: error ~ C h^(1-delta)
    want = _polar_oracle(delta)
    coarse, fine = (_seminorm(Grid(Box.cube(2), n), "x1", delta, 1.0) for n in (32, 64))
    assert coarse < fine < want
    gain = 2.0 ** (1 - delta)
    extrapolated = (gain * fine - coarse) / (gain - 1)
    assert extrapolated == pytest.approx(want, rel=1e-2)


def test_pointwise_kernel_integrates_to_seminorm():
    grid = Grid(Box.cube(2), 16)
    f = SampledFunction(grid, "sin(3*x1) * x2")
    r = grid.root()
    ax = fractional_kernel_sum(f, r, 0.5, 1.0, mode="A_of_x")
    total = float(np.sum(ax)) * grid.cell_volume / r.measure
    assert fractional_kernel_sum(f, r, 0.5, 1.0) == pytest.approx(total, rel=1e-12)


def test_weighted_seminorm_with_unit_weight_is_plain():
    grid = Grid(Box.cube(1), 128)
    plain = _seminorm(grid, "x^2", 0.5, 1.0)
    assert _seminorm(grid, "x^2", 0.5, 1.0, weight=unit_weight(grid)) == pytest.approx(plain, rel=1e-12)


def test_gradient_functional_on_linear_function():
    grid = Grid(Box.cube(2), 16)
    f = SampledFunction(grid, "2*x1 + x2")
    r = Rect(grid.box, 1, (1, 0))
    a = eval_functional(GradientM(1, 1.0), f, r)
    assert a == pytest.approx(r.diameter * math.sqrt(5))
    assert eval_functional(GradientM(1, 2.0, length="side", scale=3.0), f, r) == pytest.approx(3 * 0.5 * math.sqrt(5))
    assert eval_functional(GradientM(2, 1.0), f, r) == pytest.approx(0.0, abs=1e-12)


def test_measure_functional_direct():
    grid = Grid(Box.cube(1), 8)
    mu = GridFunction(grid, np.arange(1.0, 9.0), True)
    w = make_weight("1 + x", grid)
    r = Rect(grid.box, 1, (1,))
    want = 0.5 ** 0.7 * (float(mu.values[4:].sum()) / float(w.values[4:].sum())) ** 0.5
    assert eval_functional(Measure(0.7, 2.0, mu, weight=w), None, r) == pytest.approx(want, rel=1e-14)
    # without a weight w(R) counts cells
    want = 0.5 ** 0.7 * (float(mu.values[4:].sum()) / 4) ** 0.5
    assert eval_functional(Measure(0.7, 2.0, mu), None, r) == pytest.approx(want, rel=1e-14)


def test_block_fractional_sees_only_its_block():
    box = Box.cube(2, split=(1, 1))
    grid = Grid(box, 32)
    f = SampledFunction(grid, "sin(3*x1)")
    r = Rect(box, 1, (0, 1), BASIS_PRODUCT)
    assert eval_functional(BlockFractional(2, 0.5), f, r) == 0.0
    one = eval_functional(BlockFractional(1, 0.5), f, r)
    bare = eval_functional(BlockFractional(1, 0.5, include_length=False), f, r)
    assert one == pytest.approx(bare * r.sides[0] ** 0.5)
    with pytest.raises(FunctionalError):
        eval_functional(BlockFractional(1, 0.5), f, Rect(box))


def test_block_fractional_of_separable_matches_1d():
    # f(x1): averaging over x2 leaves the 1-D seminorm on the block-1 side
    box = Box.cube(2, split=(1, 1))
    grid = Grid(box, 64)
    f = SampledFunction(grid, "x1")
    got = eval_functional(BlockFractional(1, 0.5), f, Rect(box, basis=BASIS_PRODUCT))
    g1 = Grid(Box.cube(1), 64)
    assert got == pytest.approx(_seminorm(g1, "x", 0.5, 1.0), rel=1e-12)


def test_sum_and_constant():
    grid = Grid(Box.cube(1), 16)
    f = SampledFunction(grid, "x")
    s = Sum((GradientM(1, 1.0), ConstantOne(scale=2.0)), scale=0.5)
    assert eval_functional(s, f, grid.root()) == pytest.approx(0.5 * (1.0 + 2.0))


def test_cache_reuses_values():
    grid = Grid(Box.cube(1), 64)
    cache = FunctionalCache(FractionalFull(0.5), SampledFunction(grid, "x"))
    r = grid.root()
    assert cache(r) is cache(r)


def test_pair_budget_is_enforced():
    grid = Grid(Box.cube(2), 64)
    f = SampledFunction(grid, "x1")
    with pytest.raises(KernelBudgetError, match="budget"):
        fractional_kernel_sum(f, grid.root(), 0.5, 1.0, settings=KernelSettings(budget=1000))


def test_fractional_parameter_checks():
    grid = Grid(Box.cube(1), 8)
    f = SampledFunction(grid, "x")
    with pytest.raises(FunctionalError):
        fractional_kernel_sum(f, grid.root(), 1.0, 1.0)
    with pytest.raises(FunctionalError):
        fractional_kernel_sum(f, grid.root(), 0.5, 0.5)


def test_finite_difference_gradient_is_second_order():
    errs = []
    for res in (32, 64):
        grid = Grid(Box.cube(2), res)
        sym = derivative_field("sin(2*x1) * cos(x2)", grid).values
        f = SampledFunction(grid, "sin(2*x1) * cos(x2)")
        num = derivative_field(f.function, grid).values
        errs.append(np.max(np.abs(sym - num)))
    assert errs[1] < errs[0] / 3


def test_second_derivatives_of_quadratic():
    grid = Grid(Box.cube(2), 8)
    # |nabla^2 f| with multinomial weights: fxx^2 + 2 fxy^2 + fyy^2
    d2 = derivative_field("x1^2 + 3*x1*x2", grid, order=2).values
    assert np.allclose(d2, math.sqrt(4 + 2 * 9))


def test_resolve_block():
    grid = Grid(Box.cube(3, split=(2, 1)), 4)
    assert resolve_block(grid, 1) == (0, 1)
    assert resolve_block(grid, "block2") == (2,)
    assert resolve_block(grid, (2, 0)) == (2, 0)
    with pytest.raises(FunctionalError):
        resolve_block(Grid(Box.cube(2), 4), 1)
    with pytest.raises(FunctionalError):
        resolve_block(grid, (5,))
