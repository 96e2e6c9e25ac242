"""Summability conditions on functionals and the Sobolev-exponent calculus.

A functional ``a`` satisfies the summability condition with exponent ``p``
on a root ``R`` when, for every family ``{R_i}`` of disjoint dyadic
subrectangles,

    (sum_i a(R_i)^p w(R_i)/w(R))^(1/p) <= c a(R)

and the smallness-preserving variant multiplies the right side by
``(|U R_i| / |R|)^(1/s)``. Families are sampled, so every constant measured
here is a lower bound for the true one and every verdict is relative to
the sampled pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .functionals import FunctionalCache, KernelSettings
from .grid import DisjointFamily, GridError, Rect, dyadic_children, descendants
from .weights import Weight

KIND_D = "D"
KIND_SD = "SD"
DEFAULT_TOL = 1e-10
QUADRATURE_TOL = 0.02
EXHAUSTIVE_CAP = 200_000


class ConditionError(GridError):
    pass


# ---------------------------------------------------------------------------
# family samplers


def _walk(node: Rect, depth: int, rng, q_stop: float, drop: float, out: list):
    if depth == 0:
        if rng.random() >= drop:
            out.append(node)
        return
    u = rng.random()
    if u < q_stop:
        out.append(node)
    elif u < q_stop + (1 - q_stop) * drop:
        return
    else:
        for child in dyadic_children(node):
            _walk(child, depth - 1, rng, q_stop, drop, out)


def _thin(members: list, root: Rect, target: float, rng) -> list:
    members = list(members)
    total = math.fsum(m.measure for m in members)
    limit = target * root.measure * (1 + 1e-12)
    while members and total > limit:
        k = int(rng.integers(len(members)))
        total -= members.pop(k).measure
    return members


def sample_disjoint_families(root: Rect, count: int, max_depth: int = 6, smallness: float | None = None,
                             seed=0, q_stop: float = 0.3, include_deterministic: bool = True) -> list:
    """Up to ``count`` nonempty disjoint dyadic families under ``root``.

    Deterministic families come first: every full level ``0..max_depth``,
    then one single node per level. The rest come from a stopping-time walk
    that at each node selects it (probability ``q_stop``), drops the
    subtree, or recurses; the drop probability is drawn per family from
    ``[0, 1/2]`` so the pool spans sparse and covering families. With
    ``smallness`` set, members are removed at random until
    ``|U R_i| <= smallness * |root|``.
    """
    rng = np.random.default_rng(seed)
    families = []
    seen = set()

    def emit(members):
        if smallness is not None:
            members = _thin(members, root, smallness, rng)
        if not members:
            return
        key = frozenset((m.level, m.index) for m in members)
        if key in seen:
            return
        seen.add(key)
        families.append(DisjointFamily(root, members))

    if include_deterministic:
        for j in range(max_depth + 1):
            if len(families) >= count:
                break
            emit(list(descendants(root, j)))
        for j in range(1, max_depth + 1):
            if len(families) >= count:
                break
            k = 1 << j
            idx = tuple(int(i) * k + int(rng.integers(k)) for i in root.index)
            emit([Rect(root.root, root.level + j, idx, root.basis)])
    attempts = 0
    while len(families) < count and attempts < 20 * count + 100:
        attempts += 1
        out = []
        _walk(root, max_depth, rng, q_stop, float(rng.uniform(0, 0.5)), out)
        emit(out)
    return families[:count]


def _antichains(node: Rect, depth: int) -> list:
    if depth == 0:
        return [[], [node]]
    below = [_antichains(c, depth - 1) for c in dyadic_children(node)]
    total = math.prod(len(b) for b in below)
    if total > EXHAUSTIVE_CAP:
        raise ConditionError(f"{total} families exceed the exhaustive cap of {EXHAUSTIVE_CAP}")
    out = [[node]]
    for combo in product(*below):
        out.append([m for part in combo for m in part])
    return out


def exhaustive_families(root: Rect, depth: int) -> list:
    """Every nonempty disjoint dyadic family of depth at most ``depth`` (at most 2)."""
    if depth > 2:
        raise ConditionError("exhaustive enumeration is limited to depth 2")
    return [DisjointFamily(root, m) for m in _antichains(root, depth) if m]


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class ConditionVerdict:
    kind: str
    p: float
    s: float | None
    families_tested: int
    max_ratio: float
    argmax: int
    argmax_family: DisjointFamily | None
    bound: float
    passed: bool
    ratios: np.ndarray = field(repr=False, default=None)
    flags: list = field(default_factory=list)


def _mass_fn(w: Weight | None):
    if w is None:
        return lambda r: r.measure
    cache = {}

    def mass(r):
        key = (r.level, r.index)
        if key not in cache:
            cache[key] = w.mass(r)
        return cache[key]

    return mass


def family_ratio(a: Callable, family: DisjointFamily, p: float, mass: Callable, a_root: float,
                 s: float | None = None) -> float:
    """``(sum a(R_i)^p w(R_i)/w(R))^(1/p) / (a(R) [fraction^(1/s)])``."""
    root = family.root
    lhs = math.fsum(a(m) ** p * mass(m) for m in family) / mass(root)
    lhs = lhs ** (1.0 / p)
    rhs = a_root
    if s is not None:
        rhs *= family.fraction ** (1.0 / s)
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


def condition_ratio(spec, f, p: float, w: Weight | None, root: Rect, families: Sequence[DisjointFamily],
                    s: float | None = None, bound: float = 1.0, tol: float = DEFAULT_TOL,
                    settings: KernelSettings | None = None) -> ConditionVerdict:
    """Largest summability ratio of ``spec`` over ``families``.

    ``spec`` is a functional spec (evaluated on ``f``) or any callable
    ``Rect -> float``. Pass iff the maximum ratio is at most
    ``bound * (1 + tol)``. A zero ``a(root)`` with a positive left side gives
    an infinite ratio and the ``degenerate`` flag.
    """
    if p <= 0:
        raise ConditionError("p must be positive")
    a = spec if callable(spec) and not hasattr(spec, "kind") else FunctionalCache(spec, f, settings)
    mass = _mass_fn(w)
    a_root = a(root)
    ratios = np.zeros(len(families))
    for i, fam in enumerate(families):
        if fam.root != root:
            raise ConditionError("every family must share the given root")
        ratios[i] = family_ratio(a, fam, p, mass, a_root, s)
    flags = []
    if np.isinf(ratios).any():
        flags.append("degenerate")
    k = int(np.argmax(ratios)) if len(ratios) else -1
    top = float(ratios[k]) if len(ratios) else 0.0
    return ConditionVerdict(
        kind=KIND_SD if s is not None else KIND_D,
        p=p,
        s=s,
        families_tested=len(families),
        max_ratio=top,
        argmax=k,
        argmax_family=families[k] if k >= 0 else None,
        bound=bound,
        passed=bool(top <= bound * (1 + tol)),
        ratios=ratios,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# exponents


SOBOLEV_KINDS = ("classic", "weighted", "M", "a1_fractional", "product")


def m_choice(awc: float, q: float = 1.0) -> float:
    """``M = 1 + log([w]^(1/q))``."""
    if awc < 1:
        raise ConditionError("weight constant must be >= 1")
    return 1.0 + math.log(awc) / q


def conjugate(t: float) -> float:
    if t <= 1:
        raise ConditionError("conjugate exponent needs t > 1")
    return t / (t - 1.0)


def b_factor(awc: float, q: float = 1.0) -> float:
    """``(1 + log [w]^(1/q)) / log [w]^(1/q)``; infinite for ``[w] = 1``."""
    lg = math.log(awc) / q
    if lg <= 0:
        return math.inf
    return (1.0 + lg) / lg


def exponent_gap(kind: str, n: int, delta: float = 1.0, q: float = 1.0, M: float | None = None,
                 awc: float | None = None) -> float:
    """``1/p - 1/p*`` for ``kind``."""
    if kind == "classic":
        return delta / n
    if kind in ("weighted", "product"):
        if awc is None:
            raise ConditionError(f"{kind} exponent needs the weight constant")
        return delta / (n * (q + math.log(awc)))
    if kind == "M":
        if M is None or M <= 1:
            raise ConditionError("M exponent needs M > 1")
        return delta / (n * q * M)
    if kind == "a1_fractional":
        if awc is None:
            raise ConditionError("a1_fractional exponent needs the A_1 constant")
        return delta / (n * (1.0 + math.log(awc)))
    raise ConditionError(f"unknown exponent kind {kind!r}; expected one of {SOBOLEV_KINDS}")


def sobolev_exponent(kind: str, p: float, n: int, delta: float = 1.0, q: float = 1.0, M: float | None = None,
                     awc: float | None = None) -> float:
    """Improved exponent ``p*`` from ``1/p - 1/p* = gap``.

    ``classic``: ``delta/n``; ``weighted``: ``delta/(n (q + log[w]))`` with
    ``1 <= q <= p``; ``M``: ``delta/(n q M)``; ``a1_fractional``:
    ``delta/(n (1 + log[w]_A1))``; ``product`` is ``weighted`` on
    products of cubes.
    """
    if p <= 0 or n < 1:
        raise ConditionError("need p > 0 and n >= 1")
    if awc is not None and awc < 1:
        raise ConditionError("weight constant must be >= 1")
    if kind in ("weighted", "product") and not 1 <= q <= p:
        raise ConditionError("weighted exponent needs 1 <= q <= p")
    inv = 1.0 / p - exponent_gap(kind, n, delta, q, M, awc)
    if inv <= 0:
        raise ConditionError(f"1/p* = {inv:.6g} <= 0: parameter regime violated")
    out = 1.0 / inv
    if out <= p:
        raise ConditionError(f"p* = {out:.6g} does not exceed p = {p}")
    return out
