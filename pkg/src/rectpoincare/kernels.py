"""Cell-pair sums for fractional (Gagliardo-type) double integrals.

A double integral ``int int |f(x)-f(y)|^p / |x-y|^(n+delta p)`` over a block
of axes is discretized as::

    sum_{cells i, j} q_ij^p * W(j - i),   q_ij = |f_i - f_j| / |x_i - x_j|

where ``W(k) = int_{cell_0} int_{cell_k} |x - y|^a`` with
``a = p - n - delta p`` is the exact cell-pair moment of the kernel. Writing
the integrand as ``q^p |x-y|^a`` moves the singularity into ``W``, which is
computed accurately (closed form in 1-D; a self-similar subdivision identity
near the diagonal and Gauss-Legendre further out in n-D), while the smooth
difference quotient is sampled at cell centers. The self pair uses
``q_ii^p = kappa |grad f|^p`` with ``kappa`` the mean of ``|u_1|^p`` over the
unit sphere. For ``f(x) = x`` in 1-D and ``p = 1`` the sum is exact.

Pair sums run offset by offset over a half space of offsets, in tiles that
may be spread over threads; partial sums are reduced with ``math.fsum`` in a
fixed order, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from itertools import product

import numpy as np

DEFAULT_PAIR_BUDGET = 30_000_000
MAX_CORRECTED_DIM = 3
_NEAR = 3  # offsets with |k|_inf <= _NEAR are solved from the subdivision identity
_GL_RADIUS = {1: 0, 2: 16, 3: 6}
_GL_POINTS = 8


class KernelBudgetError(RuntimeError):
    """Requested pair count exceeds the budget."""


def sphere_moment(n: int, p: float) -> float:
    """Mean of ``|u_1|^p`` over the unit sphere in ``R^n``."""
    return math.exp(
        math.lgamma(n / 2) + math.lgamma((p + 1) / 2) - 0.5 * math.log(math.pi) - math.lgamma((n + p) / 2)
    )


def _table_1d(h: float, count: int, a: float) -> np.ndarray:
    """Exact ``W(k)`` for ``k = -(count-1) .. count-1`` on a 1-D grid of step ``h``."""
    k = np.arange(-(count - 1), count, dtype=float)

    def big_f(u):
        return np.abs(u) ** (a + 2) / ((a + 1) * (a + 2))

    return h ** (a + 2) * (big_f(k + 1) - 2 * big_f(k) + big_f(k - 1))


@lru_cache(maxsize=8)
def _gl_nodes(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    # tent weight (1 - |t|) on [-1, 1], split at 0 so each half is polynomial
    t = np.concatenate([(x - 1) / 2, (x + 1) / 2])
    wt = np.concatenate([w / 2, w / 2]) * (1 - np.abs(t))
    return t, wt


def _gl_value(k, steps, a) -> float:
    """``W(k)`` by tensor Gauss-Legendre on the tent-weighted offset integral."""
    t, wt = _gl_nodes(_GL_POINTS)
    n = len(steps)
    grids = np.meshgrid(*[(ki + t) * h for ki, h in zip(k, steps)], indexing="ij", sparse=True)
    r2 = sum(g * g for g in grids)
    wts = 1.0
    for ax in range(n):
        sh = [1] * n
        sh[ax] = -1
        wts = wts * wt.reshape(sh)
    vol = math.prod(steps)
    return float(np.sum(wts * r2 ** (a / 2))) * vol * vol


def _midpoint_value(k, steps, a) -> float:
    vol = math.prod(steps)
    return vol * vol * math.sqrt(sum((ki * h) ** 2 for ki, h in zip(k, steps))) ** a


def _near_solve(steps, a) -> dict:
    """Solve ``W(k) = 2^(-2n-a) sum_d mult(d) W(2k + d)`` for ``|k|_inf <= _NEAR``.

    Cells split into ``2^n`` halves; halving every step scales ``W`` by
    ``2^(-2n-a)``. Offsets with ``|2k+d|_inf > _NEAR`` are far from the
    diagonal and come from Gauss-Legendre.
    """
    n = len(steps)
    near = list(product(range(-_NEAR, _NEAR + 1), repeat=n))
    pos = {k: i for i, k in enumerate(near)}
    mult = {-1: 1.0, 0: 2.0, 1: 1.0}
    scale = 2.0 ** (-2 * n - a)
    mat = np.eye(len(near))
    rhs = np.zeros(len(near))
    known = {}
    for k in near:
        i = pos[k]
        for d in product((-1, 0, 1), repeat=n):
            m = tuple(2 * ki + di for ki, di in zip(k, d))
            c = scale * math.prod(mult[di] for di in d)
            if m in pos:
                mat[i, pos[m]] -= c
            else:
                if m not in known:
                    known[m] = _gl_value(m, steps, a)
                rhs[i] += c * known[m]
    sol = np.linalg.solve(mat, rhs)
    return {k: float(sol[pos[k]]) for k in near}


@lru_cache(maxsize=64)
def kernel_table(steps: tuple, counts: tuple, a: float) -> tuple:
    """``W`` on all offsets of a block of ``counts`` cells.

    Returns ``(table, corrected)``; ``table[k + counts - 1]`` is ``W(k)``.
    ``corrected`` is False when the block dimension exceeds
    ``MAX_CORRECTED_DIM``; plain midpoint values are used and the self pair
    is dropped.
    """
    n = len(steps)
    if n == 1:
        table = _table_1d(steps[0], counts[0], a)
        table.setflags(write=False)
        return table, True
    shape = tuple(2 * c - 1 for c in counts)
    axes = [np.arange(-(c - 1), c) for c in counts]
    mesh = np.meshgrid(*[k * h for k, h in zip(axes, steps)], indexing="ij", sparse=True)
    r2 = sum(m * m for m in mesh)
    vol = math.prod(steps)
    with np.errstate(divide="ignore"):
        table = vol * vol * r2 ** (a / 2)
    corrected = n <= MAX_CORRECTED_DIM
    if corrected:
        radius = _GL_RADIUS[n]
        for k in product(*[range(-min(radius, c - 1), min(radius, c - 1) + 1) for c in counts]):
            if max(abs(v) for v in k) > _NEAR:
                table[tuple(ki + c - 1 for ki, c in zip(k, counts))] = _gl_value(k, steps, a)
        for k, v in _near_solve(tuple(steps), a).items():
            if all(abs(ki) <= c - 1 for ki, c in zip(k, counts)):
                table[tuple(ki + c - 1 for ki, c in zip(k, counts))] = v
    else:
        # no self-pair moment without the correction; drop the diagonal
        table[tuple(c - 1 for c in counts)] = 0.0
    table.setflags(write=False)
    return table, corrected


def half_offsets(counts) -> list:
    """Nonzero offsets whose first nonzero entry is positive."""
    out = []
    for k in product(*[range(-(c - 1), c) for c in counts]):
        for v in k:
            if v:
                if v > 0:
                    out.append(k)
                break
    return out


def _shifted(arr, k, axes):
    """Views ``(arr[x], arr[x + k])`` over all ``x`` with ``x + k`` inside."""
    a_sl = [slice(None)] * arr.ndim
    b_sl = [slice(None)] * arr.ndim
    for ax, kv in zip(axes, k):
        c = arr.shape[ax]
        if kv >= 0:
            a_sl[ax] = slice(0, c - kv)
            b_sl[ax] = slice(kv, c)
        else:
            a_sl[ax] = slice(-kv, c)
            b_sl[ax] = slice(0, c + kv)
    return tuple(a_sl), tuple(b_sl)


def pair_sum(vals: np.ndarray, steps, axes, delta: float, p: float, grad_norm: np.ndarray | None = None,
             weight: np.ndarray | None = None, pointwise: bool = False,
             budget: int = DEFAULT_PAIR_BUDGET, jobs: int = 1):
    """Discrete ``int_R int_{I_S} |f(x) - f(x_S -> y_S)|^p / |x_S - y_S|^(n_S + delta p)``.

    ``vals`` are the cell values on the rect, ``axes`` the block ``S`` along
    which pairs differ, ``steps`` the full per-axis cell steps. With
    ``weight`` the integrand is multiplied by ``w`` at one endpoint; the
    kernel is symmetric, so weighting the first or the second endpoint gives
    the same total. With ``pointwise`` the
    inner integral ``int_{I_S} ... dy_S`` is returned as an array over cells
    (the function ``A(R, x)`` when ``S`` is every axis).

    Returns ``(value, info)`` where ``info`` records pair count and whether
    corrected kernel tables were used.
    """
    axes = tuple(axes)
    n_s = len(axes)
    vals = np.asarray(vals, dtype=float)
    counts = tuple(vals.shape[ax] for ax in axes)
    steps_s = tuple(float(steps[ax]) for ax in axes)
    pairs = vals.size * math.prod(counts)
    if pairs > budget:
        shrink = (budget / pairs) ** (1.0 / (vals.ndim + n_s))
        raise KernelBudgetError(
            f"{pairs} cell pairs exceed the budget of {budget}; "
            f"reduce the resolution by a factor of about {1 / shrink:.2g} per axis or raise the pair budget"
        )
    a = p - n_s - delta * p
    table, corrected = kernel_table(steps_s, counts, float(a))
    vol_s = math.prod(steps_s)
    vol_c = math.prod(float(h) for i, h in enumerate(steps) if i not in axes)
    center = tuple(c - 1 for c in counts)
    offsets = half_offsets(counts)
    kappa = sphere_moment(n_s, p)

    def coef(k):
        dist = math.sqrt(sum((kv * h) ** 2 for kv, h in zip(k, steps_s)))
        return table[tuple(kv + c for kv, c in zip(k, center))] / dist ** p

    diag = None
    if corrected and grad_norm is not None and table[center] > 0:
        diag = kappa * np.asarray(grad_norm, dtype=float) ** p * table[center]

    if pointwise:
        out = np.zeros(vals.shape)
        for k in offsets:
            sa, sb = _shifted(vals, k, axes)
            d = np.abs(vals[sb] - vals[sa]) ** p * coef(k)
            out[sa] += d
            out[sb] += d
        if diag is not None:
            out += diag
        return out / vol_s, {"pairs": pairs, "corrected": corrected}

    if weight is not None:
        weight = np.asarray(weight, dtype=float)

    def tile_sum(tile):
        parts = []
        for k in tile:
            sa, sb = _shifted(vals, k, axes)
            d = np.abs(vals[sb] - vals[sa]) ** p
            if weight is None:
                s = 2.0 * float(np.sum(d))
            else:
                # w at the first point over +k and -k covers both endpoints
                s = float(np.sum(d * (weight[sa] + weight[sb])))
            parts.append(s * coef(k))
        return parts

    tiles = [offsets[i:i + 256] for i in range(0, len(offsets), 256)]
    if jobs > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(tile_sum, tiles))
    else:
        chunks = [tile_sum(t) for t in tiles]
    terms = [v for c in chunks for v in c]
    if diag is not None:
        terms.append(float(np.sum(diag if weight is None else diag * weight)))
    return math.fsum(terms) * vol_c, {"pairs": pairs, "corrected": corrected}
