"""A small closed grammar for coefficient expressions.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom (('^' | '**') ['-'] INT)?
    atom   := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'

``VAR`` is one of ``x1, y1, ..., s, t`` (``x_1`` is accepted and
normalised), ``FUNC`` one of ``sin, cos, exp, sqrt``.  Expressions are
immutable trees with structural equality, so printing and re-parsing
reproduces the same tree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParseError

FUNCS = ("sin", "cos", "exp", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Num, Var, Neg, Bin, Call, Pow]

# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))"
)
_VAR = re.compile(r"^(?:([xy])_?([1-9]\d*)|s|t)$")


def _tokenize(text):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            while text[pos].isspace():
                pos += 1
            raise ParseError(f"unexpected character {text[pos]!r} in expression", 1, pos + 1)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    out.append(("end", "", len(text) + 1))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", 1, tok[2])
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected {tok[1]!r}", 1, tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            e = Bin(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            e = Bin(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            tok = self.take()
            if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
                raise ParseError("exponent must be an integer literal", 1, tok[2])
            return Pow(base, sign * int(tok[1]))
        return base

    def atom(self):
        kind, val, col = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val == "pi":
                return Num(math.pi)
            if val in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            m = _VAR.match(val)
            if m:
                return Var(f"{m.group(1)}{m.group(2)}" if m.group(1) else val)
            raise ParseError(f"unknown name {val!r}", 1, col)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {val or 'end of input'!r}", 1, col)


def parse(text: str) -> Expr:
    if not isinstance(text, str):
        raise ParseError("expression must be a string")
    return _Parser(text).parse()


def to_string(e: Expr) -> str:
    """Print an expression so that ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        return repr(float(e.value)) if e.value >= 0 else f"({float(e.value)!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, Bin):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Pow):
        return f"({to_string(e.base)})^{e.exponent}"
    raise TypeError(e)


def depth(e: Expr) -> int:
    """Height of the tree counted in edges (a leaf has depth 0)."""
    if isinstance(e, (Num, Var)):
        return 0
    if isinstance(e, Bin):
        return 1 + max(depth(e.left), depth(e.right))
    if isinstance(e, (Neg, Call)):
        return 1 + depth(e.arg)
    return 1 + depth(e.base)


def variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Bin):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.arg)


# --------------------------------------------------------------------------
# evaluation

_NP = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt}


def evaluate(e: Expr, env: dict):
    """Vectorised evaluation; ``env`` maps variable names to arrays."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ValueError(f"variable {e.name!r} is not defined here") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Bin):
        a, b = evaluate(e.left, env), evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.divide(a, b)
    if isinstance(e, Call):
        with np.errstate(invalid="ignore", over="ignore"):
            return _NP[e.fn](evaluate(e.arg, env))
    if isinstance(e, Pow):
        b = evaluate(e.base, env)
        if e.exponent >= 0:
            return b ** e.exponent
        with np.errstate(divide="ignore"):
            return 1.0 / (b ** (-e.exponent))
    raise TypeError(e)


def evaluate_reference(e: Expr, env: dict) -> float:
    """Scalar evaluation with the ``math`` module (independent reference)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(env[e.name])
    if isinstance(e, Neg):
        return -evaluate_reference(e.arg, env)
    if isinstance(e, Bin):
        a, b = evaluate_reference(e.left, env), evaluate_reference(e.right, env)
        return {"+": a + b, "-": a - b, "*": a * b}.get(e.op) if e.op != "/" else (a / b if b != 0 else math.nan)
    if isinstance(e, Call):
        x = evaluate_reference(e.arg, env)
        if e.fn == "sqrt" and x < 0:
            return math.nan
        return _MATH[e.fn](x)
    if isinstance(e, Pow):
        b = evaluate_reference(e.base, env)
        if e.exponent < 0 and b == 0:
            return math.nan
        return b ** e.exponent
    raise TypeError(e)


def coordinate_names(n):
    names = []
    for k in range(1, n):
        names += [f"x{k}", f"y{k}"]
    return names + ["s", "t"]


def coordinate_env(x, n):
    """Variable bindings from interleaved real coordinates ``(..., 2n)``."""
    return {name: x[..., a] for a, name in enumerate(coordinate_names(n))}


def evaluate_on(e: Expr, x, n, check_finite=True):
    """Evaluate on coordinate arrays and broadcast to ``x.shape[:-1]``."""
    bad = variables(e) - set(coordinate_names(n))
    if bad:
        raise ValueError(f"expression uses coordinates {sorted(bad)} not present for n={n}")
    val = np.broadcast_to(np.asarray(evaluate(e, coordinate_env(x, n)), dtype=float), x.shape[:-1])
    if check_finite and not np.all(np.isfinite(val)):
        raise ValueError(f"expression {to_string(e)} is not finite on the grid")
    return val


# --------------------------------------------------------------------------
# symbolic differentiation

ZERO, ONE = Num(0.0), Num(1.0)


def _add(a, b):
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def _mul(a, b):
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a, b):
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Bin("/", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(b, k):
    if k == 0:
        return ONE
    if k == 1:
        return b
    return Pow(b, k)


def diff(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative with light constant folding."""
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return _neg(diff(e.arg, var))
    if isinstance(e, Bin):
        da, db = diff(e.left, var), diff(e.right, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        # quotient rule
        return _div(_sub(_mul(da, e.right), _mul(e.left, db)), _pow(e.right, 2))
    if isinstance(e, Call):
        da = diff(e.arg, var)
        if da == ZERO:
            return ZERO
        if e.fn == "sin":
            return _mul(Call("cos", e.arg), da)
        if e.fn == "cos":
            return _neg(_mul(Call("sin", e.arg), da))
        if e.fn == "exp":
            return _mul(e, da)
        return _div(da, _mul(Num(2.0), e))
    if isinstance(e, Pow):
        db = diff(e.base, var)
        if db == ZERO:
            return ZERO
        return _mul(_mul(Num(float(e.exponent)), _pow(e.base, e.exponent - 1)), db)
    raise TypeError(e)


@dataclass
class ComplexDerivatives:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def complex_derivatives(e: Expr, x, n):
    """Analytic ``u``, ``u_k`` and ``u_{j kbar}`` at coordinate points."""
    names = coordinate_names(n)
    val = evaluate_on(e, x, n)
    d1 = {a: diff(e, names[a]) for a in range(2 * n)}
    first = [evaluate_on(d1[a], x, n) for a in range(2 * n)]
    second = {}
    for a in range(2 * n):
        for b in range(2 * n):
            second[(a, b)] = evaluate_on(diff(d1[a], names[b]), x, n)
    shape = x.shape[:-1]
    grad = np.empty(shape + (n,), dtype=complex)
    hess = np.empty(shape + (n, n), dtype=complex)
    for j in range(n):
        grad[..., j] = 0.5 * (first[2 * j] - 1j * first[2 * j + 1])
        for k in range(n):
            xx = second[(2 * j, 2 * k)]
            yy = second[(2 * j + 1, 2 * k + 1)]
            xy = second[(2 * j, 2 * k + 1)]
            yx = second[(2 * j + 1, 2 * k)]
            hess[..., j, k] = 0.25 * ((xx + yy) + 1j * (xy - yx))
    return ComplexDerivatives(val, grad, hess)


def hermitian_field(entries, n):
    """Callables ``P(x)`` and ``dP(x)`` from upper-triangular expression entries.

    ``entries`` maps ``(i, j)`` with ``i <= j`` (zero-based) to a pair of
    expressions ``(re, im)``; diagonal entries must have zero imaginary part.
    ``dP(x)[..., i, j, l] = d P_{j lbar}/d z_i``.
    """
    names = coordinate_names(n)
    full = {}
    for (i, j), (re_e, im_e) in entries.items():
        full[(i, j)] = (re_e, im_e)
        if i != j:
            full[(j, i)] = (re_e, _neg(im_e) if im_e is not None else None)

    def P(x):
        out = np.zeros(x.shape[:-1] + (n, n), dtype=complex)
        for (i, j), (re_e, im_e) in full.items():
            out[..., i, j] = evaluate_on(re_e, x, n) + (1j * evaluate_on(im_e, x, n) if im_e is not None else 0.0)
        return out

    dfull = {}
    for key, (re_e, im_e) in full.items():
        dfull[key] = [(diff(re_e, names[a]), diff(im_e, names[a]) if im_e is not None else None) for a in range(2 * n)]

    def dP(x):
        out = np.zeros(x.shape[:-1] + (n, n, n), dtype=complex)
        for (j, l), ders in dfull.items():
            for i in range(n):
                rx, ix = ders[2 * i]
                ry, iy = ders[2 * i + 1]
                gx = evaluate_on(rx, x, n) + (1j * evaluate_on(ix, x, n) if ix is not None else 0.0)
                gy = evaluate_on(ry, x, n) + (1j * evaluate_on(iy, x, n) if iy is not None else 0.0)
                out[..., i, j, l] = 0.5 * (gx - 1j * gy)
        return out

    return P, dP
