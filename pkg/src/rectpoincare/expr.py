"""Small expression language for test functions, weights and densities.

Grammar (``^`` and ``**`` are right associative and bind tighter than unary
minus, so ``-x1^2`` is ``-(x1^2)``)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom (('^' | '**') unary)?
    atom  := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')' | '|' expr '|'

Variables are ``x1 .. xn``. A bare ``x`` means ``x1`` in one dimension; in
higher dimension it is only accepted as ``|x|`` (the Euclidean norm).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

MAX_DEPTH = 32

UNARY_FUNCS = ("abs", "sin", "cos", "exp", "sqrt", "tanh", "log")
BINARY_FUNCS = ("min", "max")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Parse or evaluation error; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None):
        self.message = message
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    axis: int


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class _Norm:
    """Placeholder for a bare ``x`` until the dimension is known."""

    position: int


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/^(),|]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, ndim: int | None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.ndim = ndim

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise ExprError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Unary("neg", arg)
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            pos = self.take()[2]
            expo = self.unary()
            if _has_var(expo):
                raise ExprError("pow exponent must be constant", pos)
            base = Binary("^", base, Const(_fold(expo)))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if val == "|":
            node = self.expr()
            self.expect("|")
            return _abs(node)
        if kind == "name":
            if self.peek()[1] == "(":
                return self.call(val, pos)
            if val in CONSTANTS:
                return Const(CONSTANTS[val])
            if val == "x":
                return _Norm(pos)
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if m:
                axis = int(m.group(1)) - 1
                if self.ndim is not None and axis >= self.ndim:
                    raise ExprError("axis index out of range", pos)
                return Var(axis)
            raise ExprError(f"unknown name {val!r}", pos)
        raise ExprError(f"unexpected {val or 'end of input'!r}", pos)

    def call(self, name, pos):
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if name in UNARY_FUNCS:
            if len(args) != 1:
                raise ExprError(f"{name} takes one argument", pos)
            return _abs(args[0]) if name == "abs" else Unary(name, args[0])
        if name in BINARY_FUNCS:
            if len(args) != 2:
                raise ExprError(f"{name} takes two arguments", pos)
            return Binary(name, args[0], args[1])
        raise ExprError(f"unknown function {name!r}", pos)


def _abs(node):
    return Unary("abs", node)


def _has_var(node) -> bool:
    if isinstance(node, (Var, _Norm)):
        return True
    if isinstance(node, Unary):
        return _has_var(node.arg)
    if isinstance(node, Binary):
        return _has_var(node.left) or _has_var(node.right)
    return False


def _fold(node) -> float:
    return float(evaluate(node, ()))


def _resolve(node, ndim, inside_abs=False):
    if isinstance(node, _Norm):
        if ndim == 1:
            return Var(0)
        if not inside_abs:
            raise ExprError(f"bare 'x' is ambiguous in {ndim} dimensions; use x1..x{ndim} or |x|", node.position)
        parts = [Binary("^", Var(i), Const(2.0)) for i in range(ndim)]
        acc = parts[0]
        for p in parts[1:]:
            acc = Binary("+", acc, p)
        return Unary("sqrt", acc)
    if isinstance(node, Unary):
        if node.op == "abs" and isinstance(node.arg, _Norm) and ndim != 1:
            return _resolve(node.arg, ndim, True)
        return Unary(node.op, _resolve(node.arg, ndim))
    if isinstance(node, Binary):
        return Binary(node.op, _resolve(node.left, ndim), _resolve(node.right, ndim))
    return node


def depth(node) -> int:
    if isinstance(node, Unary):
        return 1 + depth(node.arg)
    if isinstance(node, Binary):
        return 1 + max(depth(node.left), depth(node.right))
    return 1


def max_axis(node) -> int:
    """Largest axis index used, or -1 for a constant expression."""
    if isinstance(node, Var):
        return node.axis
    if isinstance(node, Unary):
        return max_axis(node.arg)
    if isinstance(node, Binary):
        return max(max_axis(node.left), max_axis(node.right))
    return -1


def parse(text: str, ndim: int | None = None):
    """Parse ``text`` into an expression tree.

    ``ndim`` enables axis-range checks and resolves a bare ``x``.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprError("empty expression", 0)
    node = _Parser(text, ndim).parse()
    node = _resolve(node, ndim if ndim is not None else 1)
    if depth(node) > MAX_DEPTH:
        raise ExprError(f"expression tree deeper than {MAX_DEPTH}", 0)
    return node


def to_string(node) -> str:
    """Canonical, fully parenthesized form; ``parse(to_string(t)) == t``."""
    if isinstance(node, Const):
        s = repr(float(node.value))
        return f"({s})" if node.value < 0 or s.startswith("-") else s
    if isinstance(node, Var):
        return f"x{node.axis + 1}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_string(node.arg)})"
        return f"{node.op}({to_string(node.arg)})"
    if isinstance(node, Binary):
        if node.op in BINARY_FUNCS:
            return f"{node.op}({to_string(node.left)}, {to_string(node.right)})"
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    raise ExprError(f"cannot print {node!r}")


_UFUNCS = {
    "neg": np.negative,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "log": np.log,
}
_BFUNCS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.true_divide,
    "^": np.power,
    "min": np.minimum,
    "max": np.maximum,
}


def evaluate(node, coords):
    """Evaluate on broadcastable coordinate arrays ``coords[axis]``."""
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Var):
        if node.axis >= len(coords):
            raise ExprError(f"variable x{node.axis + 1} needs {node.axis + 1} coordinates")
        return np.asarray(coords[node.axis], dtype=float)
    with np.errstate(all="ignore"):
        if isinstance(node, Unary):
            return _UFUNCS[node.op](evaluate(node.arg, coords))
        if isinstance(node, Binary):
            return _BFUNCS[node.op](evaluate(node.left, coords), evaluate(node.right, coords))
    raise ExprError(f"cannot evaluate {node!r}")


# symbolic differentiation with light simplification

def _c(v):
    return Const(float(v))


def _is(node, v):
    return isinstance(node, Const) and node.value == v


def _add(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value + b.value)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Binary("+", a, b)


def _sub(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value - b.value)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return Binary("-", a, b)


def _neg(a):
    if isinstance(a, Const):
        return _c(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def _mul(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value * b.value)
    if _is(a, 0) or _is(b, 0):
        return _c(0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return Binary("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return _c(0)
    if _is(b, 1):
        return a
    return Binary("/", a, b)


def _pow(a, k: float):
    if k == 0:
        return _c(1)
    if k == 1:
        return a
    return Binary("^", a, _c(k))


def differentiate(node, axis: int):
    """Symbolic partial derivative along ``axis``."""
    if isinstance(node, Const):
        return _c(0)
    if isinstance(node, Var):
        return _c(1.0 if node.axis == axis else 0.0)
    if isinstance(node, Unary):
        u = node.arg
        du = differentiate(u, axis)
        if _is(du, 0):
            return _c(0)
        op = node.op
        if op == "neg":
            return _neg(du)
        if op == "sin":
            return _mul(Unary("cos", u), du)
        if op == "cos":
            return _neg(_mul(Unary("sin", u), du))
        if op == "exp":
            return _mul(node, du)
        if op == "sqrt":
            return _div(du, _mul(_c(2), node))
        if op == "tanh":
            return _mul(_sub(_c(1), _pow(node, 2.0)), du)
        if op == "log":
            return _div(du, u)
        raise ExprError(f"non-differentiable node {op!r}; use finite-difference mode")
    if isinstance(node, Binary):
        a, b = node.left, node.right
        op = node.op
        if op in BINARY_FUNCS:
            if not _has_var(node):
                return _c(0)
            raise ExprError(f"non-differentiable node {op!r}; use finite-difference mode")
        da, db = differentiate(a, axis), differentiate(b, axis)
        if op == "+":
            return _add(da, db)
        if op == "-":
            return _sub(da, db)
        if op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, 2.0))
        if op == "^":
            k = b.value
            return _mul(_mul(_c(k), _pow(a, k - 1)), da)
    raise ExprError(f"cannot differentiate {node!r}")
