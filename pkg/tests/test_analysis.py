import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rectpoincare.analysis import (
    AnalysisError,
    band_range,
    cz_decompose,
    dyadic_maximal,
    dyadic_pool,
    lq_norm,
    multi_indices,
    optimal_center,
    oscillation,
    project_polynomial,
    sharp_maximal,
    truncate,
    weak_norm_values,
)
from rectpoincare.grid import Box, Grid, GridFunction, Rect
from rectpoincare.weights import weight_from_values


def _grid(n, res, lo=0.0, hi=1.0):
    return Grid(Box.cube(n, lo, hi), res)


def _lstsq_projection(grid, vals, m):
    """Oracle: least squares on raw monomials at the cell centers."""
    pts = [c.ravel() for c in np.meshgrid(*grid.centers, indexing="ij")]
    cols = [np.prod([pts[a] ** k[a] for a in range(grid.ndim)], axis=0) for k in multi_indices(grid.ndim, m)]
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, vals.ravel(), rcond=None)
    return (A @ coef).reshape(vals.shape)


@pytest.mark.parametrize("n,res,m", [(1, 64, 3), (2, 16, 1), (2, 16, 2), (3, 8, 1)])
def test_projection_matches_lstsq(n, res, m):
    grid = _grid(n, res)
    vals = np.random.default_rng(n * 10 + m).normal(size=grid.shape)
    f = GridFunction(grid, vals)
    got = project_polynomial(f, grid.root(), m).values()
    assert np.allclose(got, _lstsq_projection(grid, vals, m), atol=1e-10)


def test_projection_reproduces_polynomials():
    grid = _grid(2, 16)
    x, y = grid.mesh
    vals = np.broadcast_to(1 + 2 * x - 3 * y + x * y, grid.shape)
    f = GridFunction(grid, vals)
    assert np.allclose(project_polynomial(f, grid.root(), 2).values(), vals, atol=1e-12)
    assert multi_indices(2, 2) and len(multi_indices(2, 2)) == 6


def test_optimal_center_q2_is_mean():
    vals = np.random.default_rng(1).normal(size=200)
    assert optimal_center(vals, 2.0) == pytest.approx(vals.mean(), abs=1e-9)


@pytest.mark.parametrize("q", [1.0, 0.5, 0.25])
def test_optimal_center_beats_every_data_value(q):
    rng = np.random.default_rng(int(q * 100))
    vals = rng.standard_cauchy(301)
    w = rng.uniform(0.1, 2.0, 301)
    c = optimal_center(vals, q, w)

    def objective(t):
        return float(np.sum(w * np.abs(vals - t) ** q))

    best = min(objective(v) for v in vals)
    assert objective(c) <= best * (1 + 1e-12)


def test_oscillation_centers():
    grid = _grid(1, 128)
    f = GridFunction(grid, np.sin(4 * grid.centers[0]) + grid.centers[0] ** 3)
    r = grid.root()
    mean = oscillation(f, r, 1.0, center="mean")
    best = oscillation(f, r, 1.0, center="optimal")
    poly = oscillation(f, r, 1.0, center="poly", m=3)
    assert best <= mean
    assert poly < mean
    with pytest.raises(AnalysisError):
        oscillation(f, r, 1.0, center="median")


def test_lq_norm_direct():
    v = np.array([1.0, -2.0, 3.0, 0.5])
    w = np.array([1.0, 2.0, 1.0, 4.0])
    want = (np.sum(w * np.abs(v) ** 3) / np.sum(w)) ** (1 / 3)
    assert lq_norm(v, 3.0, w) == pytest.approx(want, rel=1e-14)


def _weak_oracle(vals, p, w):
    a = np.abs(vals)
    total = w.sum()
    best = 0.0
    for v in np.unique(a):
        best = max(best, v * (w[a >= v].sum() / total) ** (1 / p))
    return best


@given(hnp.arrays(float, st.integers(1, 60), elements=st.floats(-50, 50)), st.floats(0.5, 4.0))
def test_weak_norm_matches_brute_force(vals, p):
    w = np.linspace(0.5, 1.5, vals.size)
    assert weak_norm_values(vals, p, w) == pytest.approx(_weak_oracle(vals, p, w), rel=1e-12, abs=1e-300)


@given(hnp.arrays(float, st.integers(1, 60), elements=st.floats(-50, 50)), st.floats(0.5, 4.0))
def test_weak_norm_dominates_level_scan(vals, p):
    a = np.abs(vals)
    weak = weak_norm_values(vals, p)
    for t in np.linspace(0, a.max(), 50):
        assert t * np.mean(a > t) ** (1 / p) <= weak * (1 + 1e-12) + 1e-300


@given(hnp.arrays(float, st.integers(2, 80), elements=st.floats(-1e3, 1e3)),
       st.floats(1.2, 6.0), st.floats(0.1, 0.95))
def test_kolmogorov_inequality(vals, p, frac):
    q = frac * p
    bound = (p / (p - q)) ** (1 / q) * weak_norm_values(vals, p)
    assert lq_norm(vals, q) <= bound * (1 + 1e-12) + 1e-300


def _maximal_oracle(vals):
    """``max_J avg_J`` over dyadic blocks containing each cell, via explicit slicing."""
    n = vals.ndim
    depth = min(int(c).bit_length() - 1 for c in vals.shape)
    out = np.zeros(vals.shape)
    for cell in np.ndindex(vals.shape):
        best = 0.0
        for j in range(depth + 1):
            sl = []
            for ax in range(n):
                size = vals.shape[ax] >> j
                start = (cell[ax] // size) * size
                sl.append(slice(start, start + size))
            best = max(best, float(np.mean(vals[tuple(sl)])))
        out[cell] = best
    return out


@pytest.mark.parametrize("n,res", [(1, 64), (2, 16)])
def test_dyadic_maximal_matches_oracle(n, res):
    grid = _grid(n, res)
    vals = np.random.default_rng(res).exponential(size=grid.shape)
    m = dyadic_maximal(GridFunction(grid, vals, True), grid.root()).values
    assert np.allclose(m, _maximal_oracle(vals), rtol=1e-12)


def test_dyadic_maximal_on_subrect_zeroes_outside():
    grid = _grid(1, 16)
    vals = np.arange(16.0)
    sub = Rect(grid.box, 1, (1,))
    m = dyadic_maximal(GridFunction(grid, vals, True), sub).values
    assert np.all(m[:8] == 0)
    assert np.allclose(m[8:], _maximal_oracle(vals[8:]))


def test_cz_small_example():
    grid = _grid(1, 8)
    g = GridFunction(grid, [0, 0, 0, 8, 0, 0, 0, 0], True)
    fam = cz_decompose(g, grid.root(), 1.0)
    assert [(m.level, m.index) for m in fam] == [(1, (0,))]
    assert fam.averages == (2.0,)
    assert not fam.root_exceeds
    top = cz_decompose(g, grid.root(), 0.5)
    assert top.root_exceeds and list(top) == [grid.root()]
    with pytest.raises(AnalysisError):
        cz_decompose(GridFunction(grid, -np.ones(8)), grid.root(), 1.0)


@pytest.mark.parametrize("m", [0, 1])
def test_sharp_maximal_pool_route_agrees(m):
    grid = _grid(2, 16)
    vals = np.random.default_rng(3).normal(size=grid.shape)
    f = GridFunction(grid, vals)
    fast = sharp_maximal(f, m, depth=2).values
    slow = sharp_maximal(f, m, pool=dyadic_pool(grid.root(), 2)).values
    assert np.allclose(fast, slow, atol=1e-12)


def test_sharp_maximal_kills_polynomials():
    grid = _grid(2, 16)
    x, y = grid.mesh
    f = GridFunction(grid, np.broadcast_to(3 * x - y + 1, grid.shape))
    assert np.max(sharp_maximal(f, 1, depth=3).values) < 1e-12


def test_truncate_modes():
    grid = _grid(1, 4)
    g = GridFunction(grid, [0.5, 1.5, 3.0, 9.0], True)
    assert list(truncate(g, level=1).values) == [0.0, 0.0, 1.0, 2.0]
    assert list(truncate(g, height=2.0).values) == [0.5, 1.5, 2.0, 2.0]
    with pytest.raises(AnalysisError):
        truncate(g)
    lo, hi = band_range(g.values)
    assert 2.0 ** lo < 0.5 and 2.0 ** (hi + 1) >= 9.0


def test_weighted_weak_norm_uses_weight():
    grid = _grid(1, 4)
    w = weight_from_values(grid, [1.0, 1.0, 1.0, 97.0])
    vals = np.array([0.0, 0.0, 0.0, 1.0])
    assert weak_norm_values(vals, 1.0, w.values) == pytest.approx(0.97)
    assert weak_norm_values(vals, 1.0) == pytest.approx(0.25)
    assert math.isclose(weak_norm_values(vals, 2.0), 0.5)
