"""Starting-point inequalities: gradient and fractional Poincare bounds."""

from __future__ import annotations

import math

import numpy as np

from ..analysis import lq_norm, weak_norm_values
from ..conditions import ConditionError, sobolev_exponent
from ..functionals import FractionalFull, eval_functional
from ..report import EXPLICIT, CheckReport
from .common import (
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
from .riesz import riesz_potential_bound

KOLMOGOROV_TOL = 1e-12


def kolmogorov_factor(p: float, q: float) -> float:
    """``(p/(p-q))^(1/q)``: strong ``L^q`` over weak ``L^{p,inf}`` on a probability space."""
    return (p / (p - q)) ** (1.0 / q)


def bridge_ratio(vals: np.ndarray, p: float, wv=None) -> float:
    """``||g||_{p/2} / (2^(2/p) ||g||_{p,inf})``; at most 1 by Kolmogorov's inequality."""
    weak = weak_norm_values(vals, p, wv)
    if weak == 0:
        return 0.0
    return lq_norm(vals, p / 2, wv) / (kolmogorov_factor(p, p / 2) * weak)


# ---------------------------------------------------------------------------
# P1: explicit constant


def check_p1(params: dict, setup: Setup) -> CheckReport:
    const = float(params["constant"])
    slack = float(params["slack"])
    resolutions = sorted(int(v) for v in params["resolutions"])
    setup.resolution = resolutions[0]
    rects = rect_pool(setup)
    trace = []
    worst = None
    for res in resolutions:
        setup.resolution = res
        grid = setup.grid()
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                lhs = float(np.mean(np.abs(residual(f, r))))
                rhs = const * r.diameter * grad_term(f, r, 1.0, None)
                col.add(lhs, rhs, f"{f.label} on {describe(r)}")
        trace.append({"resolution": res, "max_ratio": col.best, "required_slack": max(0.0, col.best - 1.0)})
        worst = col
    need = [t["required_slack"] for t in trace]
    monotone = all(b <= a + 1e-12 for a, b in zip(need, need[1:]))
    final_ok = worst.best <= slack
    flags = []
    if not final_ok:
        flags.append(f"constant {const:g} violated: ratio {worst.best:.6g} exceeds slack {slack:g}")
    if not monotone:
        flags.append("discretization slack not shrinking")
    return CheckReport(
        check_id="P1",
        params=params,
        lhs=worst.lhs,
        rhs=worst.structural,
        passed=bool(final_ok and monotone and worst.count > 0),
        mode=EXPLICIT,
        rhs_structural=worst.structural / const if const else None,
        empirical_constant=const * worst.best,
        trace=trace,
        seed=setup.seed,
        details={"constant": const, "slack": slack, "worst": worst.where, "monotone_slack": monotone,
                 "items": worst.count},
        flags=flags,
    )


# ---------------------------------------------------------------------------
# P2, P3: higher order and weighted starting points


def check_p2(params: dict, setup: Setup) -> CheckReport:
    m = int(params["m"])
    rects = rect_pool(setup)

    def measure(grid, _):
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                lhs = float(np.mean(np.abs(residual(f, r, m))))
                col.add(lhs, r.diameter ** m * grad_term(f, r, 1.0, None, m), f"{f.label} on {describe(r)}")
        return Measurement(col)

    return dimensional_report("P2", params, setup, measure)


def check_p3(params: dict, setup: Setup) -> CheckReport:
    m = int(params["m"])
    p = float(params["p"])
    rects = rect_pool(setup)

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc = pool_ap(w, rects, p)
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                lhs = float(np.mean(np.abs(residual(f, r, m))))
                wv = w.function.on(r)
                rhs = awc ** (1.0 / p) * r.diameter ** m * grad_term(f, r, p, wv, m)
                col.add(lhs, rhs, f"{f.label} on {describe(r)}")
        return Measurement(col, {"ap_constant": awc})

    return dimensional_report("P3", params, setup, measure)


# ---------------------------------------------------------------------------
# fractional starting points on cubes


def _seminorm(setup: Setup, delta: float, p: float, w=None):
    return FractionalFull(delta, p, weight=w, length="side")


def check_f1(params: dict, setup: Setup) -> CheckReport:
    delta = float(params["delta"])
    rects = rect_pool(setup, cubes=True)
    spec = _seminorm(setup, delta, 1.0)

    def measure(grid, _):
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                lhs = float(np.mean(np.abs(residual(f, r))))
                col.add(lhs, eval_functional(spec, f, r, setup.kernel), f"{f.label} on {describe(r)}")
        return Measurement(col)

    return dimensional_report("F1", params, setup, measure)


def _classic_exponent(p, n, delta):
    try:
        return sobolev_exponent("classic", p, n, delta)
    except ConditionError:
        return None


def check_f2(params: dict, setup: Setup) -> CheckReport:
    delta = float(params["delta"])
    p = float(params["p"])
    n = setup.box.ndim
    pstar = sobolev_exponent("classic", p, n, delta)
    rects = rect_pool(setup, cubes=True)
    spec = _seminorm(setup, delta, p)

    def measure(grid, _):
        col = Collector()
        bridge = 0.0
        for f in setup.sampled(grid):
            for r in rects:
                res = residual(f, r)
                lhs = weak_norm_values(res, pstar)
                bridge = max(bridge, bridge_ratio(res, pstar))
                col.add(lhs, pstar * eval_functional(spec, f, r, setup.kernel), f"{f.label} on {describe(r)}")
        ok = bridge <= 1 + KOLMOGOROV_TOL
        return Measurement(col, {"p_star": pstar, "kolmogorov_bridge_max": bridge, "kolmogorov_ok": ok},
                           [] if ok else ["kolmogorov_bridge_failed"], ok)

    return dimensional_report("F2", params, setup, measure)


def check_f3(params: dict, setup: Setup) -> CheckReport:
    delta = float(params["delta"])
    p = float(params["p"])
    n = setup.box.ndim
    gain = (1.0 - delta) ** (1.0 / p)
    pstar = _classic_exponent(p, n, delta)
    rects = rect_pool(setup, cubes=True)
    spec = _seminorm(setup, delta, p)

    def measure(grid, _):
        col = Collector()
        strong = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                res = residual(f, r)
                semi = eval_functional(spec, f, r, setup.kernel)
                where = f"{f.label} on {describe(r)}"
                col.add(float(np.mean(np.abs(res))), gain * semi, where)
                if pstar is not None:
                    strong.add(lq_norm(res, pstar), pstar * gain * semi, where)
        details = {"gain": gain, "p_star": pstar}
        flags = []
        if pstar is None:
            flags.append("no_sobolev_exponent")
        else:
            details["strong_constant"] = strong.best
        return Measurement(col, details, flags)

    return dimensional_report("F3", params, setup, measure)


def check_f4(params: dict, setup: Setup) -> CheckReport:
    delta = float(params["delta"])
    p = float(params["p"])
    n = setup.box.ndim
    rects = rect_pool(setup, cubes=True)

    def measure(grid, _):
        w = setup.weight_on(grid)
        a1 = pool_ap(w, rects, 1.0)
        pstar = sobolev_exponent("a1_fractional", p, n, delta, awc=a1)
        spec = _seminorm(setup, delta, p, w)
        scale = (1.0 - delta) ** (1.0 / p) * a1 ** (1.0 / p)
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                lhs = lq_norm(residual(f, r), pstar, w.function.on(r))
                col.add(lhs, scale * eval_functional(spec, f, r, setup.kernel), f"{f.label} on {describe(r)}")
        return Measurement(col, {"a1_constant": a1, "p_star": pstar})

    return dimensional_report("F4", params, setup, measure)


def check_f5(params: dict, setup: Setup) -> CheckReport:
    delta = float(params["delta"])
    rects = rect_pool(setup, cubes=True)
    spec = _seminorm(setup, delta, 1.0)
    factor = 1.0 / (delta * (1.0 - delta))

    def measure(grid, _):
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                rhs = factor * max(r.sides) * grad_term(f, r, 1.0, None)
                col.add(eval_functional(spec, f, r, setup.kernel), rhs, f"{f.label} on {describe(r)}")
        # the potential bound behind the estimate, on a ball around the center cell
        ball = riesz_ball(grid, 1.0 - delta)
        ok = ball["passed"]
        return Measurement(col, {"riesz": ball}, [] if ok else ["riesz_bound_failed"], ok)

    return dimensional_report("F5", params, setup, measure)


def riesz_ball(grid, alpha: float, radius_fraction: float = 0.4) -> dict:
    """Riesz potential bound on the ball of cells around the central cell."""
    z = tuple(c // 2 for c in grid.shape)
    zc = np.array([grid.centers[a][z[a]] for a in range(grid.ndim)])
    radius = radius_fraction * min(grid.box.sides)
    dist2 = sum((m - c) ** 2 for m, c in zip(grid.mesh, zc))
    mask = np.broadcast_to(dist2 <= radius * radius, grid.shape)
    return riesz_potential_bound(grid, mask, z, alpha)
