import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectpoincare.grid import (
    BASIS_PRODUCT,
    AlignmentError,
    Box,
    DisjointFamily,
    Grid,
    GridError,
    GridFunction,
    Rect,
    average,
    block_sums,
    box_sums,
    descendants,
    dyadic_children,
    integrate,
    is_power_of_two,
    level_tuples,
    prefix_sums,
    reduce_blocks,
    subtree,
    upsample,
)


def test_power_of_two():
    assert [k for k in range(1, 20) if is_power_of_two(k)] == [1, 2, 4, 8, 16]
    assert not is_power_of_two(0)
    assert not is_power_of_two(2.0)


def test_box_validation():
    with pytest.raises(GridError):
        Box((0.0,), (0.0,))
    with pytest.raises(GridError):
        Box((0.0, 0.0), (1.0,))
    with pytest.raises(GridError):
        Box((0.0, 0.0), (1.0, 2.0), split=(1, 2))
    with pytest.raises(GridError, match="equal sides"):
        Box((0.0, 0.0, 0.0), (1.0, 2.0, 1.0), split=(2, 1))
    b = Box((0.0, 0.0, 0.0), (1.0, 1.0, 3.0), split=(2, 1))
    assert b.blocks == ((0, 1), (2,))
    assert b.measure == 3.0


def test_unit_square_geometry():
    r = Rect(Box.cube(2))
    assert r.sides == (1.0, 1.0)
    assert r.diameter == pytest.approx(math.sqrt(2))
    assert r.eccentricity == pytest.approx(1 / math.sqrt(2))
    thin = Rect(Box((0.0, 0.0), (4.0, 1.0)))
    assert thin.eccentricity == pytest.approx(2.0 / math.sqrt(17))


def test_block_eccentricity_identity():
    # l1^n E = |R| on a product of a square and an interval
    r = Rect(Box((0.0, 0.0, 0.0), (2.0, 2.0, 8.0), split=(2, 1)), basis=BASIS_PRODUCT)
    l1, l2 = r.block_sides
    assert r.block_eccentricity == pytest.approx(4.0)
    assert l1 ** 3 * r.block_eccentricity == pytest.approx(r.measure)
    assert Rect(Box.cube(2)).block_eccentricity is None
    with pytest.raises(GridError):
        Rect(Box.cube(2), basis=BASIS_PRODUCT)


def test_rect_index_range():
    with pytest.raises(GridError):
        Rect(Box.cube(1), 1, (2,))
    with pytest.raises(GridError):
        Rect(Box.cube(1), -1)


def test_children_tile_parent():
    r = Rect(Box((0.0, -1.0), (2.0, 3.0)), 1, (1, 0))
    kids = dyadic_children(r)
    assert len(kids) == 4
    assert math.fsum(k.measure for k in kids) == pytest.approx(r.measure)
    assert all(r.contains(k) for k in kids)
    assert not kids[0].contains(r)


def test_subtree_counts():
    r = Rect(Box.cube(2))
    assert len(list(descendants(r, 3))) == 64
    assert len(list(subtree(r, 2))) == 1 + 4 + 16


def test_grid_rejects_non_power_of_two():
    with pytest.raises(GridError):
        Grid(Box.cube(1), 12)
    with pytest.raises(GridError):
        Grid(Box.cube(1), 1)
    with pytest.raises(GridError, match="within each block"):
        Grid(Box.cube(3, split=(2, 1)), (8, 16, 8))


def test_cell_span_and_alignment():
    g = Grid(Box.cube(1), 8)
    assert g.cell_span(Rect(g.box, 2, (3,))) == ((6, 8),)
    with pytest.raises(AlignmentError):
        g.cell_span(Rect(g.box, 4, (0,)))
    assert not g.is_aligned(Rect(g.box, 4, (0,)))


def test_integrate_midpoint():
    g = Grid(Box.cube(1), 64)
    f = GridFunction(g, g.centers[0] ** 2)
    # midpoint rule error for x^2 is h^2/12 exactly
    assert integrate(f, g.root()) == pytest.approx(1 / 3 - (1 / 64) ** 2 / 12, abs=1e-15)
    w = GridFunction(g, np.ones(64) * 3.0, True)
    assert average(f, g.root(), w) == pytest.approx(float(np.mean(f.values)))


def test_grid_function_validation():
    g = Grid(Box.cube(1), 4)
    with pytest.raises(GridError):
        GridFunction(g, [1.0, 2.0])
    with pytest.raises(GridError):
        GridFunction(g, [1.0, np.nan, 0.0, 0.0])
    with pytest.raises(GridError):
        GridFunction(g, [1.0, -1.0, 0.0, 0.0], nonnegative=True)


def test_disjoint_family_rejects_overlap():
    root = Rect(Box.cube(1))
    a = Rect(root.root, 1, (0,))
    b = Rect(root.root, 2, (1,))
    with pytest.raises(GridError, match="overlaps"):
        DisjointFamily(root, [a, b])
    with pytest.raises(GridError, match="duplicate"):
        DisjointFamily(root, [a, a])
    fam = DisjointFamily(root, [a, Rect(root.root, 2, (3,))])
    assert fam.fraction == pytest.approx(0.75)


def test_level_tuples_pools():
    assert level_tuples((8, 8), 2, pool="dyadic") == [(0, 0), (1, 1), (2, 2)]
    assert len(level_tuples((8, 8), 2)) == 9
    tied = level_tuples((8, 8, 8), 1, BASIS_PRODUCT, split=(2, 1))
    assert tied == [(0, 0, 0), (0, 0, 1), (1, 1, 0), (1, 1, 1)]


# ---------------------------------------------------------------------------
# properties


arrays_2d = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000)).map(
    lambda t: np.random.default_rng(t[2]).normal(size=(1 << t[0], 1 << t[1]))
)


@given(arrays_2d, st.integers(0, 3))
def test_block_sums_parent_is_sum_of_children(arr, depth):
    depth = min(depth, min(int(c).bit_length() - 1 for c in arr.shape))
    levels = block_sums(arr, depth)
    for j in range(depth):
        fine = levels[j + 1]
        merged = fine.reshape(fine.shape[0] // 2, 2, fine.shape[1] // 2, 2).sum(axis=(1, 3))
        assert np.array_equal(merged, levels[j])
    assert levels[0][0, 0] == pytest.approx(arr.sum())


@given(arrays_2d, st.data())
def test_box_sums_match_direct_slices(arr, data):
    rows, cols = arr.shape
    r0 = data.draw(st.integers(0, rows - 1))
    r1 = data.draw(st.integers(r0 + 1, rows))
    c0 = data.draw(st.integers(0, cols - 1))
    c1 = data.draw(st.integers(c0 + 1, cols))
    got = box_sums(prefix_sums(arr), np.array([[r0, c0]]), np.array([[r1, c1]]))[0]
    assert got == pytest.approx(arr[r0:r1, c0:c1].sum(), abs=1e-9)


@given(arrays_2d, st.data())
def test_reduce_then_upsample_preserves_block_structure(arr, data):
    lv = tuple(data.draw(st.integers(0, int(c).bit_length() - 1)) for c in arr.shape)
    red = reduce_blocks(arr, lv, np.maximum)
    up = upsample(red, arr.shape)
    assert np.all(up >= arr)
    assert up.shape == arr.shape


@given(st.integers(1, 3), st.lists(st.floats(0.01, 100.0), min_size=3, max_size=3), st.integers(0, 6))
def test_eccentricity_is_level_invariant(n, sides, level):
    box = Box((0.0,) * n, tuple(sides[:n]))
    root = Rect(box)
    idx = tuple((7 * i + 3) % (1 << level) for i in range(n))
    assert abs(Rect(box, level, idx).eccentricity - root.eccentricity) <= 1e-12
