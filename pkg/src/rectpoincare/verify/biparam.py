"""Biparameter and m-fold product checks, plus the reverse Holder check."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import fftconvolve

from ..analysis import lq_norm
from ..conditions import sobolev_exponent
from ..functionals import BlockFractional, FunctionalCache
from ..report import CheckReport
from ..weights import fw_scan, reverse_holder_check, rhi_epsilon
from .common import (
    CheckError,
    Collector,
    Measurement,
    Setup,
    describe,
    dimensional_report,
    grad_term,
    pool_ap,
    rect_pool,
    residual,
)
from .selfimprove import truncation_bound

ROUTE_AGREEMENT = 4.0


def _require_split(setup: Setup):
    if setup.box.split is None:
        raise CheckError("this check needs a product-of-cubes domain: set split and basis Rtilde")


def _block_axes(setup: Setup):
    n1 = setup.box.split[0]
    return tuple(range(n1)), tuple(range(n1, setup.box.ndim))


def _block_term(f, r, axes, p, wv):
    """``l_i ((1/w(R)) int_R |nabla_i f|^p w)^(1/p)`` with ``l_i`` the block side."""
    return r.sides[axes[0]] * grad_term(f, r, p, wv, 1, axes)


# ---------------------------------------------------------------------------
# B1 and its two alternative derivations


def lw_kernel(counts, steps, sides) -> np.ndarray:
    """Cell weights of ``avg_R |((x1-y1)/l1, (x2-y2)/l2)|^(-1) dy`` in 2-D, offset-indexed.

    Off the diagonal the kernel is sampled at cell centers; the cell of
    ``x`` itself is integrated exactly.
    """
    (c1, c2), (h1, h2), (l1, l2) = counts, steps, sides
    k1 = np.arange(-c1 + 1, c1)[:, None] * (h1 / l1)
    k2 = np.arange(-c2 + 1, c2)[None, :] * (h2 / l2)
    dist = np.hypot(k1, k2)
    vol = (h1 * h2) / (l1 * l2)
    with np.errstate(divide="ignore"):
        kern = vol / dist
    a, b = h1 / (2 * l1), h2 / (2 * l2)
    kern[c1 - 1, c2 - 1] = 4.0 * (a * math.asinh(b / a) + b * math.asinh(a / b))
    return kern


def lw_route(f, r, axes1, axes2) -> tuple:
    """Pointwise constant ``max_x |f(x) - f_R| / I(x)`` and ``kappa = max_y avg_R K(., y)``."""
    grid = f.grid
    sl = grid.slices(r)
    g = r.sides[axes1[0]] * f.derivative_norm(axes1, 1)[sl] + r.sides[axes2[0]] * f.derivative_norm(axes2, 1)[sl]
    kern = lw_kernel(g.shape, grid.steps, (r.sides[axes1[0]], r.sides[axes2[0]]))
    integral = fftconvolve(g, kern, mode="same")
    kappa = float(fftconvolve(np.ones(g.shape), kern, mode="same").max())
    dev = np.abs(residual(f, r))
    keep = integral > 1e-12 * max(float(integral.max()), 1e-300)
    if not keep.any():
        return 0.0, kappa
    return float((dev[keep] / integral[keep]).max()), kappa


def check_b1(params: dict, setup: Setup) -> CheckReport:
    _require_split(setup)
    axes1, axes2 = _block_axes(setup)
    rects = rect_pool(setup)
    half = (BlockFractional(1, 0.5, 1.0), BlockFractional(2, 0.5, 1.0))
    with_lw = setup.box.ndim == 2

    def measure(grid, _):
        direct, b2, f5 = Collector(), Collector(), Collector()
        lw_const = 0.0
        for f in setup.sampled(grid):
            parts = [FunctionalCache(s, f, setup.kernel) for s in half]
            for r in rects:
                where = f"{f.label} on {describe(r)}"
                osc = float(np.mean(np.abs(residual(f, r))))
                t1, t2 = _block_term(f, r, axes1, 1.0, None), _block_term(f, r, axes2, 1.0, None)
                direct.add(osc, t1 + t2, where)
                frac = [a(r) for a in parts]
                b2.add(osc, sum(frac), where)
                f5.add(frac[0], 4.0 * t1, where)
                f5.add(frac[1], 4.0 * t2, where)
                if with_lw:
                    c, kappa = lw_route(f, r, axes1, axes2)
                    lw_const = max(lw_const, c * kappa)
        route = 4.0 * b2.best * f5.best
        agreement = route / direct.best if direct.best > 0 else math.inf
        ok = max(agreement, 1.0 / agreement) <= ROUTE_AGREEMENT if agreement > 0 else False
        details = {"fractional_route_constant": route, "b2_constant": b2.best, "f5_constant": f5.best,
                   "route_agreement": agreement, "route_agreement_limit": ROUTE_AGREEMENT, "routes_agree": ok}
        if with_lw:
            details["pointwise_route_constant"] = lw_const
            details["pointwise_route_agreement"] = lw_const / direct.best if direct.best > 0 else math.inf
        return Measurement(direct, details, [] if ok else ["routes_disagree"], ok)

    return dimensional_report("B1", params, setup, measure)


# ---------------------------------------------------------------------------
# fractional biparameter and m-fold checks


def _fractional_check(check_id, params, setup, specs, gains, rects):
    def measure(grid, _):
        col = Collector()
        for f in setup.sampled(grid):
            parts = [FunctionalCache(s, f, setup.kernel) for s in specs]
            for r in rects:
                lhs = float(np.mean(np.abs(residual(f, r))))
                rhs = sum(g * a(r) for g, a in zip(gains, parts))
                col.add(lhs, rhs, f"{f.label} on {describe(r)}")
        return Measurement(col, {"gains": list(gains)})

    return dimensional_report(check_id, params, setup, measure)


def _pair(params, key):
    v = params[key]
    return (float(v[0]), float(v[1])) if isinstance(v, (list, tuple)) else (float(v), float(v))


def check_b2(params: dict, setup: Setup) -> CheckReport:
    _require_split(setup)
    d1, d2 = _pair(params, "delta")
    specs = (BlockFractional(1, d1, 1.0), BlockFractional(2, d2, 1.0))
    return _fractional_check("B2", params, setup, specs, (1.0, 1.0), rect_pool(setup))


def check_b3(params: dict, setup: Setup) -> CheckReport:
    _require_split(setup)
    d1, d2 = _pair(params, "delta")
    p1, p2 = _pair(params, "p")
    specs = (BlockFractional(1, d1, p1), BlockFractional(2, d2, p2))
    gains = ((1 - d1) ** (1 / p1), (1 - d2) ** (1 / p2))
    return _fractional_check("B3", params, setup, specs, gains, rect_pool(setup))


def check_b4(params: dict, setup: Setup) -> CheckReport:
    blocks = tuple(tuple(int(a) for a in b) for b in params["blocks"])
    n = setup.box.ndim
    if not 2 <= len(blocks) <= 3 or sorted(a for b in blocks for a in b) != list(range(n)):
        raise CheckError(f"blocks must partition the {n} axes into 2 or 3 groups, got {blocks}")
    k = len(blocks)
    deltas = [float(v) for v in params["delta"]] if isinstance(params["delta"], (list, tuple)) \
        else [float(params["delta"])] * k
    ps = [float(v) for v in params["p"]] if isinstance(params["p"], (list, tuple)) else [float(params["p"])] * k
    if len(deltas) != k or len(ps) != k:
        raise CheckError("delta and p need one value per block")
    specs = tuple(BlockFractional(b, d, p) for b, d, p in zip(blocks, deltas, ps))
    gains = tuple((1 - d) ** (1 / p) for d, p in zip(deltas, ps))
    return _fractional_check("B4", params, setup, specs, gains, rect_pool(setup, groups=blocks))


# ---------------------------------------------------------------------------
# weighted biparameter Poincare-Sobolev


def check_b5(params: dict, setup: Setup) -> CheckReport:
    _require_split(setup)
    p, q = float(params["p"]), float(params["q"])
    axes1, axes2 = _block_axes(setup)
    n = setup.box.ndim
    rects = rect_pool(setup)

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc_q = pool_ap(w, rects, q)
        awc_p = awc_q if p == q else pool_ap(w, rects, p)
        pstar = sobolev_exponent("weighted", p, n, 1.0, q, awc=awc_q)
        flat = awc_q < math.exp(q)
        col, route = Collector(), Collector()
        for f in setup.sampled(grid):
            for r in rects:
                wv = w.function.on(r)
                res = residual(f, r)
                rhs = awc_p ** (1 / p) * (_block_term(f, r, axes1, p, wv) + _block_term(f, r, axes2, p, wv))
                where = f"{f.label} on {describe(r)}"
                col.add(lq_norm(res, pstar, wv), rhs, where)
                if flat:
                    route.add(truncation_bound(res, pstar, wv), rhs, where)
        details = {"aq_constant": awc_q, "ap_constant": awc_p, "p_star": pstar, "flat_weight": flat}
        flags = []
        if flat:
            flags.append("truncation_route")
            details["truncation_constant"] = route.best
            details["truncation_factor"] = route.best / col.best if col.best > 0 else math.inf
        return Measurement(col, details, flags)

    return dimensional_report("B5", params, setup, measure)


def check_b6(params: dict, setup: Setup) -> CheckReport:
    _require_split(setup)
    p, delta = float(params["p"]), float(params["delta"])
    n = setup.box.ndim
    rects = rect_pool(setup)

    def measure(grid, _):
        w = setup.weight_on(grid)
        a1 = pool_ap(w, rects, 1.0)
        pstar = sobolev_exponent("a1_fractional", p, n, delta, awc=a1)
        scale = a1 ** (1 / p) * (1 - delta) ** (1 / p)
        specs = (BlockFractional(1, delta, p, weight=w), BlockFractional(2, delta, p, weight=w))
        col = Collector()
        for f in setup.sampled(grid):
            parts = [FunctionalCache(s, f, setup.kernel) for s in specs]
            for r in rects:
                lhs = lq_norm(residual(f, r), pstar, w.function.on(r))
                col.add(lhs, scale * (parts[0](r) + parts[1](r)), f"{f.label} on {describe(r)}")
        return Measurement(col, {"a1_constant": a1, "p_star": pstar})

    return dimensional_report("B6", params, setup, measure)


# ---------------------------------------------------------------------------
# W1


def check_w1(params: dict, setup: Setup) -> CheckReport:
    grid = setup.grid()
    w = setup.weight_on(grid)
    root = grid.root(setup.basis)
    depth = min(int(params["rhi_depth"]), grid.max_level)
    ainf = fw_scan(w, setup.basis, depth, int(params["shifts"]), setup.seed, root)["max"]
    rep = reverse_holder_check(w, root, ainf, depth)
    rep.params = params
    rep.seed = setup.seed
    rep.details.update({"ainf": ainf, "epsilon": rhi_epsilon(ainf, grid.ndim), "weight": setup.weight})
    return rep

