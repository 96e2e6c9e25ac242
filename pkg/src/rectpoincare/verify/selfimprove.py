"""Self-improvement checks: from an ``L^1`` starting point to ``L^p``, ``L^{p*}`` and weak norms."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import linregress

from ..analysis import (
    band_range,
    dyadic_maximal,
    lq_norm,
    optimal_center,
    sharp_maximal,
    truncate_level_values,
    weak_norm_values,
)
from ..conditions import (
    b_factor,
    condition_ratio,
    conjugate,
    sample_disjoint_families,
    sobolev_exponent,
)
from ..functionals import FractionalFull, FunctionalCache, Measure
from ..grid import GridFunction
from ..report import EXPLICIT, CheckReport
from ..weights import fw_scan, lebesgue_r_average
from .common import (
    CheckError,
    Collector,
    Measurement,
    Setup,
    describe,
    dimensional_report,
    grad_term,
    pool_ap,
    pool_roots,
    rect_pool,
    residual,
)
from .poincare import KOLMOGOROV_TOL, bridge_ratio

CLAIM_TOL = 1e-10


# ---------------------------------------------------------------------------
# shared pieces


def gradient_measure(f, w, p: float, m: int = 1) -> GridFunction:
    """Cell masses of ``|nabla^m f|^p w`` in the units of ``Measure`` (weight sums)."""
    g = f.derivative_norm(tuple(range(f.grid.ndim)), m)
    return GridFunction(f.grid, g ** p * w.values, True)


def starting_constant(f, rects, a, m: int = 1) -> float:
    """Smallest ``K`` with ``avg_R |f - P_R f| <= K a(R)`` on the pool."""
    col = Collector()
    for r in rects:
        col.add(float(np.mean(np.abs(residual(f, r, m)))), a(r))
    return col.best if col.count else 0.0


class FamilyPool:
    """Disjoint families per pool root, fixed once so every resolution sees the same ones."""

    def __init__(self, setup: Setup, roots, count: int, depth: int, seed):
        coarse = setup.grid(1)
        self.families = {}
        for i, root in enumerate(roots):
            cells = min(e - s for s, e in coarse.cell_span(root))
            d = min(depth, int(cells).bit_length() - 1)
            self.families[root] = sample_disjoint_families(root, count, max_depth=d, seed=(seed, i))

    def norm(self, a, p: float, w, s=None) -> float:
        best = 0.0
        for root, fams in self.families.items():
            v = condition_ratio(a, None, p, w, root, fams, s=s)
            best = max(best, v.max_ratio)
        return best


def pool_ainf(w, roots, basis, depth) -> float:
    return max(fw_scan(w, basis, depth, 1, 0, root)["max"] for root in roots)


def truncation_bound(vals: np.ndarray, p: float, wv=None) -> float:
    """Strong ``L^p`` bound assembled from weak norms of dyadic truncations.

    With ``G_j = {2^j < g <= 2^(j+1)}`` and ``T_k g = clamp(g - 2^k, 0, 2^k)``,
    ``T_k g = 2^k`` on ``G_(k+1)`` gives ``w(G_(k+1)) <= (||T_k g||_weak / 2^k)^p``
    and hence ``||g||_p <= 4 (sum_k ||T_k g||_weak^p)^(1/p)``; applied to both
    signs of ``vals``.
    """
    total = 0.0
    for g in (np.maximum(vals, 0.0), np.maximum(-vals, 0.0)):
        lo, hi = band_range(g)
        for k in range(lo - 1, hi + 1):
            total += weak_norm_values(truncate_level_values(g, k), p, wv) ** p
    return 4.0 * total ** (1.0 / p)


def _measure_spec(f, w, p, delta=1.0, m=1):
    return Measure(delta, p, gradient_measure(f, w, p, m), weight=w)


# ---------------------------------------------------------------------------
# S1, S2: general self-improvement


def check_s1(params: dict, setup: Setup) -> CheckReport:
    p = float(params["p"])
    m = int(params["m"])
    n = setup.box.ndim
    s = float(n)
    rects = rect_pool(setup)
    fams = FamilyPool(setup, pool_roots(rects), int(params["families"]), int(params["family_depth"]), setup.seed)

    def measure(grid, _):
        w = setup.weight_on(grid)
        col = Collector()
        norms = []
        for f in setup.sampled(grid):
            a = FunctionalCache(_measure_spec(f, w, p, m=m), f)
            k = starting_constant(f, rects, a, m)
            norm = fams.norm(a, p, w, s)
            norms.append(norm)
            factor = (1 + s) * max(norm ** s, 1.0) * k
            for r in rects:
                lhs = lq_norm(residual(f, r, m), p, w.function.on(r))
                col.add(lhs, factor * a(r), f"{f.label} on {describe(r)}")
        return Measurement(col, {"s": s, "sd_norm_max": max(norms)})

    return dimensional_report("S1", params, setup, measure)


def check_s2(params: dict, setup: Setup) -> CheckReport:
    p = float(params["p"])
    m = int(params["m"])
    rects = rect_pool(setup)
    roots = pool_roots(rects)
    fams = FamilyPool(setup, roots, int(params["families"]), int(params["family_depth"]), setup.seed)

    def measure(grid, _):
        w = setup.weight_on(grid)
        ainf = pool_ainf(w, roots, setup.basis, setup.depth)
        col = Collector()
        bridge = 0.0
        for f in setup.sampled(grid):
            a = FunctionalCache(_measure_spec(f, w, p, m=m), f)
            k = starting_constant(f, rects, a, m)
            norm = fams.norm(a, p, w)
            factor = p * ainf * norm * k
            for r in rects:
                wv = w.function.on(r)
                res = residual(f, r, m)
                bridge = max(bridge, bridge_ratio(res, p, wv))
                col.add(weak_norm_values(res, p, wv), factor * a(r), f"{f.label} on {describe(r)}")
        ok = bridge <= 1 + KOLMOGOROV_TOL
        return Measurement(col, {"ainf": ainf, "kolmogorov_bridge_max": bridge, "kolmogorov_ok": ok},
                           [] if ok else ["kolmogorov_bridge_failed"], ok)

    return dimensional_report("S2", params, setup, measure)


# ---------------------------------------------------------------------------
# S3: (p, p) higher order Poincare on cubes


def check_s3(params: dict, setup: Setup) -> CheckReport:
    p = float(params["p"])
    m = int(params["m"])
    rects = rect_pool(setup, cubes=True)

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc = pool_ap(w, rects, p)
        col = Collector()
        for f in setup.sampled(grid):
            for r in rects:
                wv = w.function.on(r)
                lhs = lq_norm(residual(f, r, m), p, wv)
                rhs = awc ** (1.0 / p) * max(r.sides) ** m * grad_term(f, r, p, wv, m)
                col.add(lhs, rhs, f"{f.label} on {describe(r)}")
        return Measurement(col, {"ap_constant": awc})

    return dimensional_report("S3", params, setup, measure)


# ---------------------------------------------------------------------------
# S4, S5: Poincare-Sobolev at the weighted exponent


def check_s4(params: dict, setup: Setup) -> CheckReport:
    p, q, delta = float(params["p"]), float(params["q"]), float(params["delta"])
    n = setup.box.ndim
    rects = rect_pool(setup)
    w0 = setup.weight_on(setup.grid(1))
    if pool_ap(w0, rects, q) <= 1.0 + 1e-12:
        raise CheckError("S4 needs a nontrivial weight ([w]_A_q > 1); use S5 for flat weights")

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc = pool_ap(w, rects, q)
        pstar = sobolev_exponent("weighted", p, n, delta, q, awc=awc)
        bw = b_factor(awc, q)
        col = Collector()
        for f in setup.sampled(grid):
            a = FunctionalCache(_measure_spec(f, w, p, delta), f)
            k = starting_constant(f, rects, a)
            for r in rects:
                lhs = lq_norm(residual(f, r), pstar, w.function.on(r))
                col.add(lhs, bw / delta * k * a(r), f"{f.label} on {describe(r)}")
        flags = [] if awc >= math.exp(q) else ["below_nontrivial_threshold"]
        return Measurement(col, {"aq_constant": awc, "p_star": pstar, "b_factor": bw}, flags)

    return dimensional_report("S4", params, setup, measure)


def check_s5(params: dict, setup: Setup) -> CheckReport:
    p, q, delta = float(params["p"]), float(params["q"]), float(params["delta"])
    n = setup.box.ndim
    rects = rect_pool(setup)
    roots = pool_roots(rects)
    fams = FamilyPool(setup, roots, int(params["families"]), int(params["family_depth"]), setup.seed)
    inv = 1.0 / p - delta / (n * q)
    if inv <= 0:
        raise CheckError("the unweighted exponent p*_1 is infinite for these parameters")
    p1 = 1.0 / inv
    claim_bound = math.exp(delta / n)

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc = pool_ap(w, rects, q)
        pstar = sobolev_exponent("weighted", p, n, delta, q, awc=awc)
        col = Collector()
        bridge = 0.0
        claim = 0.0
        flat = awc <= math.exp(q)
        for f in setup.sampled(grid):
            a = FunctionalCache(_measure_spec(f, w, p, delta), f)
            k = starting_constant(f, rects, a)
            if flat:
                claim = max(claim, fams.norm(a, p1, w))
            for r in rects:
                wv = w.function.on(r)
                res = residual(f, r)
                bridge = max(bridge, bridge_ratio(res, pstar, wv))
                col.add(weak_norm_values(res, pstar, wv), k * a(r) / delta, f"{f.label} on {describe(r)}")
        claim_ok = (not flat) or claim <= claim_bound * (1 + CLAIM_TOL)
        bridge_ok = bridge <= 1 + KOLMOGOROV_TOL
        flags = []
        if not flat:
            flags.append("weight_not_flat: claim not applicable")
        if not claim_ok:
            flags.append("flat_weight_claim_failed")
        if not bridge_ok:
            flags.append("kolmogorov_bridge_failed")
        details = {"aq_constant": awc, "p_star": pstar, "p_star_unweighted": p1, "claim_max_ratio": claim,
                   "claim_bound": claim_bound, "claim_ok": claim_ok, "kolmogorov_bridge_max": bridge,
                   "kolmogorov_ok": bridge_ok}
        return Measurement(col, details, flags, claim_ok and bridge_ok)

    return dimensional_report("S5", params, setup, measure)


# ---------------------------------------------------------------------------
# S6: m-th derivative corollary with the truncation upgrade


def check_s6(params: dict, setup: Setup) -> CheckReport:
    p, q, m = float(params["p"]), float(params["q"]), int(params["m"])
    limit = float(params["truncation_factor_limit"])
    n = setup.box.ndim
    rects = rect_pool(setup)

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc = pool_ap(w, rects, q)
        pstar = sobolev_exponent("weighted", p, n, 1.0, q, awc=awc)
        weak, strong, route = Collector(), Collector(), Collector()
        for f in setup.sampled(grid):
            for r in rects:
                wv = w.function.on(r)
                res = residual(f, r, m)
                base = awc ** (1.0 / p) * r.diameter ** m * grad_term(f, r, p, wv, m)
                where = f"{f.label} on {describe(r)}"
                weak.add(weak_norm_values(res, pstar, wv), base / m, where)
                strong.add(lq_norm(res, pstar, wv), base, where)
                if m == 1:
                    route.add(truncation_bound(res, pstar, wv), base, where)
        details = {"aq_constant": awc, "p_star": pstar, "strong_constant": strong.best}
        if awc >= math.exp(q):
            details["strong_constant_with_b_factor"] = strong.best * m / b_factor(awc, q)
        ok, flags = True, []
        if m == 1:
            factor = route.best / strong.best if strong.best > 0 else math.inf
            ok = factor <= limit
            details.update({"truncation_constant": route.best, "truncation_factor": factor,
                            "truncation_factor_limit": limit, "truncation_ok": ok})
            if not ok:
                flags.append("truncation_factor_exceeded")
        return Measurement(weak, details, flags, ok)

    return dimensional_report("S6", params, setup, measure)


# ---------------------------------------------------------------------------
# S7: eccentricity weighted fractional functional


def check_s7(params: dict, setup: Setup) -> CheckReport:
    p, q, delta = float(params["p"]), float(params["q"]), float(params["delta"])
    n = setup.box.ndim
    rects = rect_pool(setup)

    def measure(grid, _):
        w = setup.weight_on(grid)
        awc_q = pool_ap(w, rects, q)
        awc_p = awc_q if p == q else pool_ap(w, rects, p)
        pstar = sobolev_exponent("weighted", p, n, delta, q, awc=awc_q)
        spec = FractionalFull(delta, p, weight=w, eccentricity_factor=True, length="diameter")
        col = Collector()
        for f in setup.sampled(grid):
            a = FunctionalCache(spec, f, setup.kernel)
            for r in rects:
                lhs = lq_norm(residual(f, r), pstar, w.function.on(r))
                col.add(lhs, awc_p ** (1.0 / p) * a(r) / delta, f"{f.label} on {describe(r)}")
        return Measurement(col, {"aq_constant": awc_q, "ap_constant": awc_p, "p_star": pstar})

    return dimensional_report("S7", params, setup, measure)


# ---------------------------------------------------------------------------
# D1: weaker L^delta starting point


def _inf_osc(vals: np.ndarray, q: float) -> float:
    c = optimal_center(vals, q)
    return lq_norm(vals - c, q)


def d1_bound(n: int, delta: float, s: float, norm: float, condition: str, p: float = 1.0) -> float:
    if condition == "SD1":
        return (1 + s) * 2 ** ((n + 2 - delta) / delta) * math.e * max(2 ** (s / delta) * norm ** s, 1.0)
    return max(norm, 1.0) ** conjugate(p)


def check_d1(params: dict, setup: Setup) -> CheckReport:
    delta = float(params["delta_start"])
    condition = params["condition"]
    p = float(params["p"]) if condition == "Dp" else 1.0
    if condition not in ("SD1", "Dp"):
        raise CheckError(f"condition must be SD1 or Dp, got {condition!r}")
    if condition == "Dp" and p <= 1:
        raise CheckError("the D_p route needs p > 1")
    n = setup.box.ndim
    s = float(n)
    rects = rect_pool(setup)
    roots = pool_roots(rects)
    fams = FamilyPool(setup, roots, int(params["families"]), int(params["family_depth"]), setup.seed)

    def measure(grid, _):
        w = setup.weight_on(grid, "unit")
        col = Collector()
        norms = []
        for f in setup.sampled(grid):
            a = FunctionalCache(Measure(1.0, p, gradient_measure(f, w, p)), f)
            x_delta = Collector()
            x_one = Collector()
            for r in rects:
                vals = f.on(r)
                x_delta.add(_inf_osc(vals, delta), a(r))
                x_one.add(_inf_osc(vals, 1.0), a(r))
            if not x_one.count:
                continue
            norm = fams.norm(a, p, None, s if condition == "SD1" else None)
            norms.append(norm)
            bound = d1_bound(n, delta, s, norm, condition, p)
            col.add(x_one.best, bound * x_delta.best, f"{f.label} (X_delta={x_delta.best:.4g})")
        return Measurement(col, {"condition_norm_max": max(norms) if norms else None, "s": s})

    return dimensional_report("D1", params, setup, measure)


# ---------------------------------------------------------------------------
# J1, J2: John-Nirenberg type estimates


def _maximal_pair(f, root, m: int):
    grid = f.grid
    res = np.zeros(grid.shape)
    res[grid.slices(root)] = residual(f, root, m)
    md = dyadic_maximal(GridFunction(grid, res), root).on(root)
    ms = sharp_maximal(f.function, m - 1, root=root).on(root)
    return md, ms


def _quotient(md, ms):
    out = np.zeros(md.shape)
    pos = ms > 0
    out[pos] = md[pos] / ms[pos]
    out[~pos & (md > 0)] = math.inf
    return out


def check_j1(params: dict, setup: Setup) -> CheckReport:
    p, r_exp, m = float(params["p"]), float(params["r"]), int(params["m"])
    rects = rect_pool(setup)
    roots = pool_roots(rects)
    structural = p * conjugate(r_exp)

    def measure(grid, _):
        w = setup.weight_on(grid)
        ainf = pool_ainf(w, roots, setup.basis, setup.depth)
        col = Collector()
        ainf_form = 0.0
        flags = []
        for f in setup.sampled(grid):
            for root in roots:
                md, ms = _maximal_pair(f, root, m)
                ratio = _quotient(md, ms)
                if not np.isfinite(ratio).all():
                    flags.append("sharp_maximal_vanishes")
                wv = w.function.on(root)
                integral = float(np.sum(ratio ** p * wv)) * grid.cell_volume
                lhs = float(integral / lebesgue_r_average(w, r_exp, root)) ** (1.0 / p)
                col.add(lhs, structural, f"{f.label} on {describe(root)}")
                ainf_form = max(ainf_form, lq_norm(ratio, p, wv) / (p * ainf))
        return Measurement(col, {"ainf": ainf, "ainf_form_constant": ainf_form}, sorted(set(flags)))

    return dimensional_report("J1", params, setup, measure)


def level_set_profile(md, ms, wv, gammas, lambdas) -> np.ndarray:
    """``F(gamma) = max_lambda w{M^d > lambda, M^# <= gamma lambda} / w(R)``."""
    total = float(np.sum(wv))
    md, ms, wv = md.ravel(), ms.ravel(), wv.ravel()
    out = np.zeros(len(gammas))
    for i, g in enumerate(gammas):
        best = 0.0
        for lam in lambdas:
            sel = (md > lam) & (ms <= g * lam)
            best = max(best, float(np.sum(wv[sel])) / total)
        out[i] = best
    return out


def check_j2(params: dict, setup: Setup) -> CheckReport:
    gammas = np.array(sorted(float(g) for g in params["gammas"]))
    m = int(params["m"])
    quality = float(params["fit_quality"])
    grid = setup.grid()
    w = setup.weight_on(grid)
    root = grid.root(setup.basis)
    fits, trace = [], []
    for f in setup.sampled(grid):
        md, ms = _maximal_pair(f, root, m)
        pos = md[md > 0]
        lambdas = np.geomspace(pos.min(), pos.max(), int(params["levels"])) if pos.size else np.array([1.0])
        prof = level_set_profile(md, ms, w.function.on(root), gammas, lambdas)
        trace.append({"function": f.label, "gamma": gammas.tolist(), "fraction": prof.tolist()})
        keep = prof > 0
        if keep.sum() >= 3:
            fit = linregress(1.0 / gammas[keep], np.log(prof[keep]))
            fits.append({"function": f.label, "slope": float(fit.slope), "intercept": float(fit.intercept),
                         "r2": float(fit.rvalue ** 2), "points": int(keep.sum())})
        else:
            fits.append({"function": f.label, "slope": None, "r2": None, "points": int(keep.sum())})
    if len(gammas) < 3:
        # single points of a sweep: only the trivial bound F <= 1 is checkable
        worst = max(t["fraction"][0] for t in trace) if trace else 0.0
        return CheckReport("J2", params, worst, 1.0, bool(worst <= 1.0), EXPLICIT, trace=trace,
                           seed=setup.seed, details={"fits": fits}, flags=["too_few_gammas_for_fit"])
    usable = [fit for fit in fits if fit["slope"] is not None]
    r2 = min((fit["r2"] for fit in usable), default=0.0)
    slopes_ok = bool(usable) and all(fit["slope"] < 0 for fit in usable)
    flags = [] if len(usable) == len(fits) else ["too_few_positive_points"]
    passed = slopes_ok and len(usable) == len(fits) and r2 >= quality
    c2 = min((-fit["slope"] for fit in usable), default=math.nan)
    return CheckReport(
        check_id="J2",
        params=params,
        lhs=quality,
        rhs=r2,
        passed=bool(passed),
        mode=EXPLICIT,
        empirical_constant=c2,
        trace=trace,
        seed=setup.seed,
        details={"fits": fits, "min_fit_quality": r2, "negative_slopes": slopes_ok,
                 "note": "lhs is the required fit quality, rhs the worst fitted R^2"},
        flags=flags,
    )
