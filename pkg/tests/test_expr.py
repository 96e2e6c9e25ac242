import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rectpoincare import expr as ex

CASES = [
    ("x1^2 + 3*x2", lambda a, b: a ** 2 + 3 * b),
    ("-x1^2", lambda a, b: -(a ** 2)),
    ("2^3^2", lambda a, b: 2.0 ** 9),
    ("sin(pi*x1)*cos(pi*x2)", lambda a, b: math.sin(math.pi * a) * math.cos(math.pi * b)),
    ("|x|^0.5", lambda a, b: math.hypot(a, b) ** 0.5),
    ("exp(-8*|x|^2)", lambda a, b: math.exp(-8 * (a * a + b * b))),
    ("min(x1, x2) / max(1, x2)", lambda a, b: min(a, b) / max(1, b)),
    ("tanh(x1) - sqrt(abs(x2)) + log(2 + x1)", lambda a, b: math.tanh(a) - math.sqrt(abs(b)) + math.log(2 + a)),
    ("x1 ** 2 * e", lambda a, b: a * a * math.e),
]


@pytest.mark.parametrize("text,ref", CASES)
def test_evaluate_matches_python(text, ref):
    node = ex.parse(text, 2)
    pts = [(0.3, -0.7), (1.2, 0.4), (-0.5, 2.0)]
    got = ex.evaluate(node, (np.array([p[0] for p in pts]), np.array([p[1] for p in pts])))
    want = [ref(a, b) for a, b in pts]
    assert np.allclose(np.broadcast_to(got, (3,)), want, rtol=1e-13, atol=1e-15)


SMOOTH = [
    "x1^2 * x2 + 3*x2",
    "sin(pi*x1)*cos(pi*x2)",
    "exp(-8*|x|^2)",
    "tanh(x1*x2) / (2 + x1)",
    "sqrt(1 + x1^2 + x2^4)",
    "log(3 + x1) * x2^3",
]


@pytest.mark.parametrize("text", SMOOTH)
@pytest.mark.parametrize("axis", [0, 1])
def test_symbolic_derivative_matches_numeric(text, axis):
    node = ex.parse(text, 2)
    d = ex.differentiate(node, axis)
    for pt in [(0.31, -0.47), (0.8, 0.15)]:
        def f(t):
            xy = list(pt)
            xy[axis] = t
            return float(ex.evaluate(node, (np.array(float(xy[0])), np.array(float(xy[1])))))
        want = float(mpmath.diff(lambda t: mpmath.mpf(f(float(t))), pt[axis], h=1e-4, method="step"))
        got = float(ex.evaluate(d, (np.array(pt[0]), np.array(pt[1]))))
        assert got == pytest.approx(want, rel=1e-6, abs=1e-7)


def test_bare_x_rules():
    assert ex.evaluate(ex.parse("x", 1), (np.array(0.25),)) == 0.25
    with pytest.raises(ex.ExprError, match="ambiguous"):
        ex.parse("x + 1", 2)


@pytest.mark.parametrize("text,pos", [("x1 + x3", 5), ("1 + foo", 4), ("(x1", 3), ("sin(x1, x2)", 0)])
def test_errors_carry_position(text, pos):
    with pytest.raises(ex.ExprError) as info:
        ex.parse(text, 2)
    assert info.value.position == pos


def test_depth_limit():
    with pytest.raises(ex.ExprError):
        ex.parse("sin(" * 40 + "x1" + ")" * 40, 1)
    assert ex.depth(ex.parse("(" * 40 + "x1" + ")" * 40, 1)) == 1


# ---------------------------------------------------------------------------
# round trip


def _tree(depth):
    leaf = st.one_of(
        st.floats(-5, 5, allow_nan=False).map(lambda v: ex.Const(round(v, 3))),
        st.integers(0, 1).map(ex.Var),
    )
    if depth == 0:
        return leaf
    sub = _tree(depth - 1)
    return st.one_of(
        leaf,
        st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh", "neg", "abs"]), sub).map(lambda t: ex.Unary(*t)),
        st.tuples(st.sampled_from(["+", "-", "*", "min", "max"]), sub, sub).map(lambda t: ex.Binary(*t)),
    )


@given(_tree(3))
def test_to_string_round_trip(node):
    again = ex.parse(ex.to_string(node), 2)
    pts = (np.linspace(-1, 1, 7), np.linspace(0.5, -0.5, 7))
    with np.errstate(all="ignore"):
        a = np.broadcast_to(ex.evaluate(node, pts), (7,))
        b = np.broadcast_to(ex.evaluate(again, pts), (7,))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12, equal_nan=True)
