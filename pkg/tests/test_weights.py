import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectpoincare.grid import BASIS_PRODUCT, Box, Grid
from rectpoincare.weights import (
    WEIGHT_CATALOG,
    WeightError,
    ap_scan,
    ap_values,
    fujii_wilson_constant,
    lebesgue_r_average,
    make_weight,
    muckenhoupt_constant,
    reverse_holder_check,
    rhi_epsilon,
    unit_weight,
    weight_from_values,
    weight_report,
)


def _root_ap(w, p):
    vals = w.values / w.values.mean()
    return float(ap_values(vals, (0,) * w.grid.ndim, p).flat[0])


@pytest.mark.parametrize("a,p", [(0.5, 2.0), (0.5, 3.0), (-0.5, 2.0), (0.3, 1.5)])
def test_power_weight_root_ap_closed_form(a, p):
    # avg_[0,1] x^a = 1/(1+a); avg x^(-a/(p-1)) = 1/(1 - a/(p-1))
    grid = Grid(Box.cube(1), 1 << 14)
    w = make_weight(f"|x|^{a}", grid)
    want = (1 / (1 + a)) * (1 / (1 - a / (p - 1))) ** (p - 1)
    assert _root_ap(w, p) == pytest.approx(want, rel=1e-2)


def test_power_weight_a1_closed_form():
    grid = Grid(Box.cube(1), 1 << 12)
    w = make_weight("|x|^(-0.5)", grid)
    assert _root_ap(w, 1.0) == pytest.approx(2.0, rel=1e-2)


def test_scale_invariance_of_power_weight_pool():
    grid = Grid(Box.cube(1), 1 << 12)
    w = make_weight("|x|^0.5", grid)
    top = muckenhoupt_constant(w, 2.0, depth=4)
    assert _root_ap(w, 2.0) <= top <= 4 / 3 * 1.05


def test_unit_weight_constants_are_one():
    grid = Grid(Box.cube(2), 16)
    w = unit_weight(grid)
    for p in (1.0, 1.5, 2.0, 4.0):
        assert muckenhoupt_constant(w, p) == pytest.approx(1.0, abs=1e-12)
    assert fujii_wilson_constant(w, shifts=2) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(1.0, 3.0), st.floats(0.05, 3.0))
def test_ap_is_at_least_one_and_decreasing_in_p(seed, p, dp):
    grid = Grid(Box.cube(2), 8)
    vals = np.random.default_rng(seed).lognormal(sigma=1.0, size=grid.shape)
    w = weight_from_values(grid, vals)
    lo = muckenhoupt_constant(w, p + dp)
    hi = muckenhoupt_constant(w, p)
    assert lo >= 1 - 1e-12
    assert lo <= hi * (1 + 1e-12)


@given(st.integers(0, 10_000))
def test_extra_rects_only_raise_the_estimate(seed):
    grid = Grid(Box.cube(2), 16)
    vals = np.random.default_rng(seed).lognormal(size=grid.shape)
    w = weight_from_values(grid, vals)
    base = ap_scan(w, 2.0)
    more = ap_scan(w, 2.0, extra_rects=20, seed=seed)
    assert more["max"] >= base["max"]
    assert more["scanned"] > base["scanned"]


def test_product_basis_pool_is_smaller():
    grid = Grid(Box.cube(2, -1, 1, split=(1, 1)), 16)
    w = make_weight("product_power", grid)
    strong = ap_scan(w, 2.0)
    tied = ap_scan(w, 2.0, basis=BASIS_PRODUCT)
    assert tied["scanned"] <= strong["scanned"]
    assert tied["max"] <= strong["max"] * (1 + 1e-12)


def test_lebesgue_average_dominates_mass():
    grid = Grid(Box.cube(2), 16)
    w = make_weight("bump", grid)
    r = grid.root()
    assert lebesgue_r_average(w, 2.0, r) >= w.mass(r) * (1 - 1e-12)
    with pytest.raises(WeightError):
        lebesgue_r_average(w, 1.0, r)


def test_rhi_epsilon_formula():
    assert rhi_epsilon(1.0, 1) == pytest.approx(1 / 3)
    assert rhi_epsilon(2.0, 2) == pytest.approx(1 / 15)


def test_reverse_holder_unit_weight():
    grid = Grid(Box.cube(2), 8)
    rep = reverse_holder_check(unit_weight(grid), grid.root(), 1.0, depth=2)
    assert rep.passed
    assert rep.lhs == pytest.approx(1.0) and rep.rhs == pytest.approx(2.0)
    assert rep.details["rects_checked"] == 21


def test_make_weight_rejects_zero():
    grid = Grid(Box.cube(1, -1, 1), 8)
    with pytest.raises(WeightError, match="not positive"):
        make_weight("x", grid)
    with pytest.raises(WeightError):
        weight_from_values(grid, np.zeros(8))


def test_catalog_weights_build():
    grid = Grid(Box.cube(2, -1, 1), 16)
    for name in WEIGHT_CATALOG:
        w = make_weight(name, grid)
        assert w.values.min() > 0
        assert w.mass(grid.root()) == pytest.approx(w.total)


def test_weight_report_fields():
    grid = Grid(Box.cube(1, -1, 1), 64)
    rep = weight_report(make_weight("power_half", grid), ps=(1.5, 2.0))
    assert set(rep.ap) == {1.5, 2.0}
    assert rep.ap[1.5] >= rep.ap[2.0]
    assert math.isfinite(rep.ainf) and rep.ainf >= 1
