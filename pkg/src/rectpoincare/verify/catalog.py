"""Catalog of runnable checks with their parameter schemas and defaults."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..report import DIMENSIONAL, EXPLICIT
from . import biparam, poincare, selfimprove
from .common import DRIFT_LIMIT, CheckError

J2_CORPUS = ["log(abs(x - 0.3))", "log(abs(x - 0.71))", "0.5*log(abs(x - 0.5)) + x"]
J2_GAMMAS = [round(0.02 * 50 ** (i / 11), 6) for i in range(12)]

# domain and pool parameters understood by every check
COMMON = {
    "dim": 2,
    "lower": 0.0,
    "upper": 1.0,
    "split": None,
    "basis": None,
    "functions": None,
    "resolution": 32,
    "weight": "unit",
    "depth": 2,
    "roots": 4,
    "min_cells": 8,
}


@dataclass(frozen=True)
class CatalogEntry:
    check_id: str
    title: str
    statement: str
    attribution: str
    functional: str
    mode: str
    runner: Callable
    defaults: dict = field(default_factory=dict)
    tolerance: str = ""

    def schema(self) -> dict:
        out = dict(COMMON)
        out.update(self.defaults)
        return out


def _entry(check_id, title, statement, attribution, functional, mode, runner, tolerance=None, **defaults):
    if tolerance is None:
        tolerance = f"finite constant, drift <= {DRIFT_LIMIT:.0%} between N and 2N" if mode == DIMENSIONAL else ""
    return CatalogEntry(check_id, title, statement, attribution, functional, mode, runner, defaults, tolerance)


_SPLIT2 = {"dim": 2, "split": [1, 1], "basis": "Rtilde"}

ENTRIES = [
    _entry("P1", "(1,1) Poincare with explicit constant",
           "avg_R |f - f_R| <= (1/2) d(R) avg_R |grad f| on every rectangle",
           "Acosta-Duran", "gradient", EXPLICIT, poincare.check_p1,
           "lhs <= constant * rhs * slack at the finest N; required slack non-increasing in N",
           dim=1, constant=0.5, slack=1.02, resolutions=[64, 128, 256, 512], depth=3),
    _entry("P2", "higher order unweighted start",
           "avg_R |f - P_R f| <= c d(R)^m avg_R |grad^m f|, P_R of degree below m",
           "Chua", "gradient", DIMENSIONAL, poincare.check_p2, m=2),
    _entry("P3", "weighted higher order start",
           "avg_R |f - P_R f| <= c [w]_{A_p}^{1/p} d(R)^m ||grad^m f||_{L^p(w dx/w(R))}",
           "Holder with the A_p condition", "gradient", DIMENSIONAL, poincare.check_p3,
           m=1, p=2.0, lower=-1.0, weight="power_half"),
    _entry("F1", "fractional (1,1) Poincare on cubes",
           "avg_Q |f - f_Q| <= c [f]_{W^{delta,1}(Q)}", "Gagliardo seminorm", "fractional", DIMENSIONAL,
           poincare.check_f1, delta=0.5, resolution=16),
    _entry("F2", "weak type fractional Sobolev",
           "||f - f_Q||_{L^{p*,inf}(Q)} <= c p* [f]_{W^{delta,p}(Q)} with 1/p - 1/p* = delta/n",
           "fractional Sobolev embedding", "fractional", DIMENSIONAL, poincare.check_f2,
           delta=0.5, p=1.0, depth=0, min_cells=16),
    _entry("F3", "fractional Poincare with the (1-delta)^{1/p} gain",
           "avg_Q |f - f_Q| <= c (1-delta)^{1/p} [f]_{W^{delta,p}(Q)}",
           "Bourgain-Brezis-Mironescu", "fractional", DIMENSIONAL, poincare.check_f3,
           dim=1, functions=["x"], delta=0.5, p=1.0, resolution=1024, depth=0, roots=0),
    _entry("F4", "A_1 weighted fractional Poincare-Sobolev",
           "||f - f_Q||_{L^{p*}(w dx/w(Q))} <= c ((1-delta)[w]_{A_1})^{1/p} [f]_{W^{delta,p}(Q, w)}",
           "Bourgain-Brezis-Mironescu, Muckenhoupt", "fractional", DIMENSIONAL, poincare.check_f4,
           delta=0.5, p=1.0, lower=-1.0, weight="power_neg_half", depth=1),
    _entry("F5", "fractional seminorm dominated by the gradient",
           "[f]_{W^{delta,1}(Q)} <= c l(Q) avg_Q |grad f| / (delta (1-delta)); includes the Riesz potential bound",
           "Riesz potential rearrangement", "fractional", DIMENSIONAL, poincare.check_f5,
           delta=0.5, resolution=16, depth=1),
    _entry("S1", "strong self-improvement under smallness preservation",
           "osc_p(f, R) <= c (1+s) max(||a||^s, 1) a(R) for a functional in SD_p^s(w)",
           "discrete self-improvement via good-lambda", "measure", DIMENSIONAL, selfimprove.check_s1,
           lower=-1.0, weight="power_half", p=2.0, m=1, families=60, family_depth=4),
    _entry("S2", "weak self-improvement under the D_p condition",
           "||f - P_R f||_{L^{p,inf}(w)} <= c p [w]_{A_inf} ||a||_{D_p(w)} a(R)",
           "discrete self-improvement via good-lambda", "measure", DIMENSIONAL, selfimprove.check_s2,
           lower=-1.0, weight="power_half", p=2.0, m=1, families=60, family_depth=4),
    _entry("S3", "(p,p) higher order Poincare on cubes",
           "||f - P_Q f||_{L^p(w dx/w(Q))} <= c [w]_{A_p}^{1/p} l(Q)^m ||grad^m f||_{L^p(w dx/w(Q))}",
           "self-improvement with A_p weights", "gradient", DIMENSIONAL, selfimprove.check_s3,
           lower=-1.0, weight="power_half", p=2.0, m=2),
    _entry("S4", "Poincare-Sobolev at the weighted exponent",
           "||f - f_R||_{L^{p*_w}(w)} <= c B_{w,q} a(R) / delta, 1/p - 1/p*_w = delta/(n (q + log [w]_{A_q}))",
           "Muckenhoupt weights, Sobolev embedding", "measure", DIMENSIONAL, selfimprove.check_s4,
           lower=-1.0, weight="product_power", p=1.0, q=1.0, delta=1.0),
    _entry("S5", "weak Poincare-Sobolev for flat weights",
           "||f - f_R||_{L^{p*_w,inf}(w)} <= c a(R) / delta; the D condition at p*_1 holds with bound e^{delta/n}",
           "Muckenhoupt weights, Sobolev embedding", "measure", DIMENSIONAL, selfimprove.check_s5,
           lower=-1.0, weight="flat", p=1.0, q=1.0, delta=1.0, families=60, family_depth=4),
    _entry("S6", "m-th derivative Poincare-Sobolev, weak and strong",
           "||f - P_R f||_{L^{p*_w,inf}(w)} <= (c/m) [w]_{A_p}^{1/p} d(R)^m ||grad^m f||_{L^p(w)}; "
           "strong form for m = 1 through dyadic truncation",
           "truncation method of Maz'ya", "gradient", DIMENSIONAL, selfimprove.check_s6,
           p=1.0, q=1.0, m=1, truncation_factor_limit=4.0),
    _entry("S7", "eccentricity weighted fractional Poincare-Sobolev",
           "||f - f_R||_{L^{p*_w}(w)} <= (c/delta) [w]_{A_p}^{1/p} d(R)^delta e(R)^{-n/p} (int A(R,x) w/w(R))^{1/p}",
           "fractional Sobolev on rectangles", "fractional", DIMENSIONAL, selfimprove.check_s7,
           lower=-1.0, weight="bump", p=1.0, q=1.0, delta=0.5, depth=1),
    _entry("D1", "self-improvement from an L^delta starting point",
           "X_1 <= c bound(delta, s, ||a||) X_delta with X_t = sup_R inf_c (avg_R |f - c|^t)^{1/t} / a(R)",
           "self-improvement from small exponents", "measure", DIMENSIONAL, selfimprove.check_d1,
           delta_start=0.5, condition="SD1", p=1.0, families=60, family_depth=4),
    _entry("J1", "John-Nirenberg type integrability of M^d / M^#",
           "((1/w_r(R)) int_R (M^d_R(f - P_R f) / M^#_m f)^p w)^{1/p} <= c p r'",
           "John-Nirenberg, Fefferman-Stein", "gradient", DIMENSIONAL, selfimprove.check_j1,
           lower=-1.0, weight="power_half", p=2.0, r=2.0, m=1),
    _entry("J2", "good-lambda exponential decay",
           "w{M^d f > lambda, M^# f <= gamma lambda} / w(R) <= c1 exp(-c2 / gamma)",
           "good-lambda inequality", "gradient", EXPLICIT, selfimprove.check_j2,
           "every fitted slope negative and every fit R^2 >= fit_quality",
           dim=1, resolution=1024, functions=J2_CORPUS, gammas=J2_GAMMAS, m=1, fit_quality=0.9, levels=200),
    _entry("B1", "biparameter (1,1) Poincare",
           "avg_R |f - f_R| <= c (l_1 avg_R |grad_1 f| + l_2 avg_R |grad_2 f|) for R = I_1 x I_2",
           "Shi-Torchinsky, Lu-Wheeden", "gradient", DIMENSIONAL, biparam.check_b1,
           f"drift <= {DRIFT_LIMIT:.0%}; fractional route within a factor 4 of the direct constant", **_SPLIT2),
    _entry("B2", "biparameter fractional (1,1) Poincare",
           "avg_R |f - f_R| <= c (a_1(R) + a_2(R)) with blockwise fractional functionals",
           "Shi-Torchinsky", "block_fractional", DIMENSIONAL, biparam.check_b2, delta=[0.5, 0.7], **_SPLIT2),
    _entry("B3", "biparameter fractional Poincare with gains",
           "avg_R |f - f_R| <= c sum_i (1 - delta_i)^{1/p_i} a_i(R)",
           "Bourgain-Brezis-Mironescu", "block_fractional", DIMENSIONAL, biparam.check_b3,
           delta=[0.6, 0.8], p=[1.0, 2.0], **_SPLIT2),
    _entry("B4", "m-fold product fractional Poincare",
           "avg_R |f - f_R| <= c sum_i (1 - delta_i)^{1/p_i} a_i(R), R a product of cubes",
           "Bourgain-Brezis-Mironescu", "block_fractional", DIMENSIONAL, biparam.check_b4,
           dim=3, resolution=16, depth=1, blocks=[[0], [1], [2]], delta=0.5, p=1.0),
    _entry("B5", "biparameter Poincare-Sobolev at the weighted exponent",
           "||f - f_R||_{L^{p*}(w dx/w(R))} <= c [w]_{A_p}^{1/p} (a_1(R) + a_2(R))",
           "Shi-Torchinsky, Muckenhoupt", "gradient", DIMENSIONAL, biparam.check_b5,
           lower=-1.0, weight="product_power", p=1.0, q=1.0, **_SPLIT2),
    _entry("B6", "weighted biparameter fractional Poincare-Sobolev with gain",
           "||f - f_R||_{L^{p*}(w dx/w(R))} <= c ([w]_{A_1} (1-delta))^{1/p} (a_1(R) + a_2(R))",
           "Bourgain-Brezis-Mironescu, Muckenhoupt", "block_fractional", DIMENSIONAL, biparam.check_b6,
           lower=-1.0, weight="product_power", p=1.0, delta=0.5, **_SPLIT2),
    _entry("W1", "reverse Holder inequality",
           "avg_R w^{1+eps} <= 2 (avg_R w)^{1+eps} at eps = 1/(2^{n+1} [w]_{A_inf} - 1)",
           "Coifman-Fefferman", "constant", EXPLICIT, biparam.check_w1,
           "exact on every dyadic rectangle to rhi_depth",
           lower=-1.0, resolution=128, weight="power_half", rhi_depth=6, shifts=2),
]

CATALOG = {e.check_id: e for e in ENTRIES}


def get_entry(check_id: str) -> CatalogEntry:
    try:
        return CATALOG[check_id]
    except KeyError:
        raise CheckError(f"unknown check {check_id!r}; valid ids: {', '.join(CATALOG)}") from None


def _coerce(name: str, value, default):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if isinstance(value, bool):
            return value
        raise CheckError(f"parameter {name!r} must be true or false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise CheckError(f"parameter {name!r} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        # per-axis or per-block lists are accepted wherever a number is
        if isinstance(value, (list, tuple)):
            return [float(v) for v in value]
        if isinstance(value, bool):
            raise CheckError(f"parameter {name!r} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        return list(value) if isinstance(value, (list, tuple)) else value
    return value


def resolve_params(check_id: str, overrides: dict | None = None) -> dict:
    """Defaults merged with ``overrides``; unknown names and bad types raise ``CheckError``."""
    schema = get_entry(check_id).schema()
    params = dict(schema)
    errors = []
    for k, v in (overrides or {}).items():
        if k not in schema:
            errors.append(f"{check_id}: unknown parameter {k!r}; valid: {', '.join(sorted(schema))}")
            continue
        try:
            params[k] = _coerce(k, v, schema[k])
        except (CheckError, TypeError, ValueError) as exc:
            errors.append(f"{check_id}: {exc}")
    if errors:
        raise CheckError("; ".join(errors))
    return params
