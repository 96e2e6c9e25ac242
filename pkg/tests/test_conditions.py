import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectpoincare.conditions import (
    ConditionError,
    b_factor,
    condition_ratio,
    conjugate,
    exhaustive_families,
    exponent_gap,
    family_ratio,
    m_choice,
    sample_disjoint_families,
    sobolev_exponent,
)
from rectpoincare.functionals import ConstantOne, Measure
from rectpoincare.grid import Box, DisjointFamily, Grid, GridFunction, Rect
from rectpoincare.weights import weight_from_values


@pytest.mark.parametrize("n,depth,count", [(1, 1, 4), (1, 2, 25), (2, 1, 16)])
def test_exhaustive_family_counts(n, depth, count):
    # antichains of the 2^n-ary tree: a(0) = 2, a(d) = 1 + a(d-1)^(2^n), minus the empty one
    assert len(exhaustive_families(Rect(Box.cube(n)), depth)) == count


def test_exhaustive_depth_limit():
    with pytest.raises(ConditionError):
        exhaustive_families(Rect(Box.cube(1)), 3)


@given(st.integers(1, 3), st.integers(0, 10_000), st.floats(0.13, 1.0))
def test_sampled_families_are_disjoint_and_small(n, seed, small):
    root = Rect(Box.cube(n))
    fams = sample_disjoint_families(root, 15, max_depth=3, smallness=small, seed=seed)
    assert fams
    for fam in fams:
        assert isinstance(fam, DisjointFamily)
        assert fam.fraction <= small * (1 + 1e-12)
    keys = {frozenset((m.level, m.index) for m in f) for f in fams}
    assert len(keys) == len(fams)


def test_sampling_is_deterministic():
    root = Rect(Box.cube(2))
    a = sample_disjoint_families(root, 30, 4, seed=7)
    b = sample_disjoint_families(root, 30, 4, seed=7)
    assert [[(m.level, m.index) for m in f] for f in a] == [[(m.level, m.index) for m in f] for f in b]


def test_family_ratio_by_hand():
    root = Rect(Box.cube(1))
    left, right = Rect(root.root, 1, (0,)), Rect(root.root, 2, (3,))
    fam = DisjointFamily(root, [left, right])
    vals = {(0, (0,)): 2.0, (1, (0,)): 1.0, (2, (3,)): 3.0}

    def a(r):
        return vals[(r.level, r.index)]

    lhs = (1.0 ** 2 * 0.5 + 3.0 ** 2 * 0.25) ** 0.5
    assert family_ratio(a, fam, 2.0, lambda r: r.measure, 2.0) == pytest.approx(lhs / 2.0)
    assert family_ratio(a, fam, 2.0, lambda r: r.measure, 2.0, s=3.0) == pytest.approx(lhs / (2.0 * 0.75 ** (1 / 3)))


def test_constant_functional_is_in_dp():
    grid = Grid(Box.cube(2), 16)
    vals = np.random.default_rng(0).lognormal(size=grid.shape)
    w = weight_from_values(grid, vals)
    root = grid.root()
    fams = sample_disjoint_families(root, 100, 4, seed=1)
    v = condition_ratio(ConstantOne(), None, 1.5, w, root, fams)
    assert v.passed and v.max_ratio <= 1 + 1e-12
    assert v.kind == "D" and v.families_tested == 100


def test_degenerate_root_value_is_flagged():
    root = Rect(Box.cube(1))
    fam = DisjointFamily(root, [Rect(root.root, 1, (0,))])

    def a(r):
        return 0.0 if r.level == 0 else 1.0

    v = condition_ratio(a, None, 1.0, None, root, [fam])
    assert math.isinf(v.max_ratio) and "degenerate" in v.flags and not v.passed


def _measure_case(n, seed, res):
    grid = Grid(Box.cube(n), res)
    rng = np.random.default_rng(seed)
    w = weight_from_values(grid, rng.lognormal(sigma=1.5, size=grid.shape))
    mu = GridFunction(grid, rng.lognormal(sigma=1.5, size=grid.shape), True)
    return grid, w, mu


@given(st.integers(1, 2), st.floats(0.2, 2.0), st.floats(1.0, 3.0), st.integers(0, 10_000))
def test_measure_functional_smallness_with_s_equal_n_over_delta(n, delta, p, seed):
    grid, w, mu = _measure_case(n, seed, 32 if n == 1 else 8)
    root = grid.root()
    fams = sample_disjoint_families(root, 40, max_depth=3, seed=seed)
    v = condition_ratio(Measure(delta, p, mu, weight=w), None, p, w, root, fams, s=n / delta)
    assert v.max_ratio <= 1 + 1e-10


@given(st.integers(0, 10_000), st.floats(1.0, 3.0))
def test_sd_implies_dp(seed, p):
    grid, w, mu = _measure_case(2, seed, 8)
    root = grid.root()
    fams = sample_disjoint_families(root, 40, max_depth=3, seed=seed)
    spec = Measure(1.0, p, mu, weight=w)
    sd = condition_ratio(spec, None, p, w, root, fams, s=2.0)
    d = condition_ratio(spec, None, p, w, root, fams)
    # the smallness factor is at most one, so the D_p ratio never exceeds the SD ratio
    assert np.all(d.ratios <= sd.ratios * (1 + 1e-12))


# ---------------------------------------------------------------------------
# exponents


def test_sobolev_exponent_reference_values():
    assert sobolev_exponent("weighted", 2.0, 2, 1.0, 1.0, awc=math.e) == 4.0
    assert sobolev_exponent("classic", 1.0, 2, 1.0) == 2.0
    assert sobolev_exponent("M", 1.0, 2, 1.0, 1.0, M=2.0) == pytest.approx(4 / 3)
    assert sobolev_exponent("a1_fractional", 1.0, 1, 0.5, awc=1.0) == pytest.approx(2.0)


@given(st.floats(1.0, 1e6), st.floats(1.0, 4.0))
def test_m_and_b_factor_formulas(awc, q):
    lg = math.log(awc) / q
    assert m_choice(awc, q) == pytest.approx(1 + lg, rel=1e-12)
    if lg > 0:
        assert b_factor(awc, q) == pytest.approx((1 + lg) / lg, rel=1e-12)


@given(st.floats(1.0, 50.0), st.floats(1.0, 3.0), st.floats(1.0, 3.0), st.floats(0.1, 1.0))
def test_weighted_exponent_decreases_with_weight_constant(awc, extra, p, delta):
    q = 1.0
    n = 3
    lo = sobolev_exponent("weighted", p, n, delta, q, awc=awc * extra)
    hi = sobolev_exponent("weighted", p, n, delta, q, awc=awc)
    classic = sobolev_exponent("classic", p, n, delta)
    assert p < lo <= hi * (1 + 1e-12)
    assert hi <= classic * (1 + 1e-12)
    assert 1 / p - 1 / hi == pytest.approx(exponent_gap("weighted", n, delta, q, awc=awc), rel=1e-9)


def test_exponent_errors():
    with pytest.raises(ConditionError):
        sobolev_exponent("classic", 2.0, 2, 1.0)
    with pytest.raises(ConditionError):
        sobolev_exponent("weighted", 1.0, 2, 1.0, q=2.0, awc=2.0)
    with pytest.raises(ConditionError):
        sobolev_exponent("M", 1.0, 2, M=1.0)
    with pytest.raises(ConditionError):
        sobolev_exponent("nonsense", 1.0, 2)
    with pytest.raises(ConditionError):
        m_choice(0.5)
    assert conjugate(2.0) == 2.0 and conjugate(3.0) == 1.5
    assert math.isinf(b_factor(1.0))
