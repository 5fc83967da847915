"""Closed-form scalar expressions over chart coordinates.

Grammar (ASCII, whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' exponent)?
    exponent := '-'? (number | ident | '(' expr ')')      # must be constant
    atom   := number | ident | func '(' expr ')' | '(' expr ')'

Precedence is ``^`` > unary minus > ``* /`` > ``+ -``, binary operators are
left-associative, and exponents are folded to a constant at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from . import jets
from .jets import Jet, JetDomainError

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "sinh", "cosh", "tanh")
BUILTIN_CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class UnknownIdentifierError(ExprSyntaxError):
    pass


class NonConstantExponentError(ExprSyntaxError):
    pass


class ExprDomainError(ExprError):
    """An expression was evaluated outside its domain; ``point`` is the first offender."""

    def __init__(self, message: str, point):
        super().__init__(f"{message} at point {tuple(float(x) for x in point)}")
        self.point = tuple(float(x) for x in point)


# -- tree -----------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a name in FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # add, sub, mul, div, pow
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def is_constant(e: Expr) -> bool:
    return not variables(e)


# -- tokenizer / parser -----------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    stripped = text.rstrip()
    while pos < len(stripped):
        m = _TOKEN.match(stripped, pos)
        if not m:
            bad = pos + (len(stripped[pos:]) - len(stripped[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {stripped[bad]!r}", bad, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, coords: Sequence[str], constants: Mapping[str, float]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.coords = {name: k for k, name in enumerate(coords)}
        self.constants = constants

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", off, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = "add" if self.take()[1] == "+" else "sub"
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = "mul" if self.take()[1] == "*" else "div"
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            off = self.peek()[2]
            negate = False
            if self.peek()[:2] == ("op", "-"):
                self.take()
                negate = True
            kind, val, _ = self.peek()
            if kind == "num":
                self.take()
                exponent: Expr = Const(float(val))
            elif val == "(":
                self.take()
                exponent = self.expr()
                self.expect(")")
            elif kind == "id":
                exponent = self.atom()
            else:
                raise ExprSyntaxError("exponent must be a number or parenthesized constant", off, self.text)
            if not is_constant(exponent):
                raise NonConstantExponentError("non-constant pow exponent", off, self.text)
            value = evaluate(exponent, ())
            if negate:
                value = -value
            if self.peek()[:2] == ("op", "^"):
                raise ExprSyntaxError("chained exponent; parenthesize the base", self.peek()[2], self.text)
            return Binary("pow", base, Const(value))
        return base

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "id":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(val, arg)
            if val in self.coords:
                return Var(val, self.coords[val])
            if val in self.constants:
                c = float(self.constants[val])
                # keeps print/parse round trips closed: literals are never negative
                return Unary("neg", Const(-c)) if c < 0 else Const(c)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", off, self.text)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", off, self.text)


def parse(text: str, coords: Sequence[str], constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``text`` into an expression over the coordinates ``coords``.

    ``constants`` adds named constants on top of the builtins (``pi``).
    Coordinate names shadow constants of the same name.
    """
    table = dict(BUILTIN_CONSTANTS)
    if constants:
        table.update(constants)
    return _Parser(text, coords, table).parse()


# -- printing -------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _fmt_number(x: float) -> str:
    if not math.isfinite(x):
        raise ExprError(f"cannot print non-finite constant {x}")
    return repr(float(x))


def to_string(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_string(e))`` rebuilds the same tree."""
    if isinstance(e, Const):
        s = _fmt_number(e.value)
        return f"({s})" if e.value < 0 or s.startswith("-") else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            if _prec(e.arg) < _PREC["neg"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_string(e.arg)})"
    if e.op == "pow":
        base = to_string(e.left)
        if _prec(e.left) <= _PREC["pow"]:
            base = f"({base})"
        p = e.right.value
        exp_s = _fmt_number(p)
        return f"{base}^{exp_s}" if p >= 0 else f"{base}^({exp_s})"
    prec = _PREC[e.op]
    left = to_string(e.left)
    if _prec(e.left) < prec:
        left = f"({left})"
    right = to_string(e.right)
    if _prec(e.right) <= prec:
        right = f"({right})"
    return f"{left} {_SYMBOL[e.op]} {right}"


def _prec(e: Expr) -> int:
    if isinstance(e, (Var, Const)):
        return 5 if not (isinstance(e, Const) and e.value < 0) else 0
    if isinstance(e, Unary):
        return _PREC["neg"] if e.op == "neg" else 5
    return _PREC[e.op]


# -- evaluation -----------------------------------------------------------


def evaluate(e: Expr, point: Sequence, lib=math):
    """Plain scalar evaluation. ``lib`` supplies the elementary functions
    (``math`` by default; ``mpmath`` works for high-precision oracles)."""
    if isinstance(e, Const):
        return e.value if lib is math else lib.mpf(e.value)
    if isinstance(e, Var):
        return point[e.index]
    if isinstance(e, Unary):
        x = evaluate(e.arg, point, lib)
        if e.op == "neg":
            return -x
        return getattr(lib, "log" if e.op == "ln" else e.op)(x)
    a = evaluate(e.left, point, lib)
    b = evaluate(e.right, point, lib)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if e.op == "div":
        return a / b
    return a**b


def eval_jet(e: Expr, points, order: int = jets.MAX_ORDER) -> Jet:
    """Value and partial derivatives of ``e`` up to ``order`` at ``points``.

    ``points`` is a single point (length ``n``) or a batch of shape ``(B, n)``.
    The returned jet always carries the batch axis.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    try:
        return _jet(e, pts, order)
    except JetDomainError as err:
        bad = np.flatnonzero(err.mask)
        raise ExprDomainError(str(err), pts[bad[0]] if bad.size else pts[0]) from None


def _jet(e: Expr, pts: np.ndarray, order: int) -> Jet:
    batch, n = pts.shape
    if isinstance(e, Const):
        return Jet.constant(e.value, batch, n, order)
    if isinstance(e, Var):
        return Jet.variable(pts[:, e.index], e.index, n, order)
    if isinstance(e, Unary):
        a = _jet(e.arg, pts, order)
        return -a if e.op == "neg" else jets.UNARY[e.op](a)
    if e.op == "pow":
        return _jet(e.left, pts, order).power(e.right.value)
    a = _jet(e.left, pts, order)
    b = _jet(e.right, pts, order)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    return a / b


# -- tree utilities -------------------------------------------------------


def substitute(e: Expr, coords: Sequence[str]) -> Expr:
    """Re-index variables onto a new coordinate list (matched by name)."""
    if isinstance(e, Var):
        if e.name not in coords:
            raise UnknownIdentifierError(f"unknown identifier {e.name!r}", 0)
        return Var(e.name, list(coords).index(e.name))
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, coords))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, coords), substitute(e.right, coords))
    return e


def diff(e: Expr, index: int) -> Expr:
    """Symbolic partial derivative with respect to coordinate ``index``.

    Only trivial zero/one folding is done; trees are not simplified.
    """
    zero, one = Const(0.0), Const(1.0)

    def mul(a: Expr, b: Expr) -> Expr:
        if a == zero or b == zero:
            return zero
        if a == one:
            return b
        if b == one:
            return a
        return Binary("mul", a, b)

    def add(a: Expr, b: Expr) -> Expr:
        if a == zero:
            return b
        if b == zero:
            return a
        return Binary("add", a, b)

    def neg(a: Expr) -> Expr:
        return zero if a == zero else Unary("neg", a)

    if isinstance(e, Const):
        return zero
    if isinstance(e, Var):
        return one if e.index == index else zero
    if isinstance(e, Unary):
        u, du = e.arg, diff(e.arg, index)
        if du == zero:
            return zero
        outer = {
            "neg": lambda: Const(-1.0),
            "sin": lambda: Unary("cos", u),
            "cos": lambda: Unary("neg", Unary("sin", u)),
            "exp": lambda: Unary("exp", u),
            "ln": lambda: Binary("div", one, u),
            "sqrt": lambda: Binary("div", Const(0.5), Unary("sqrt", u)),
            "sinh": lambda: Unary("cosh", u),
            "cosh": lambda: Unary("sinh", u),
            "tanh": lambda: Binary("sub", one, Binary("pow", Unary("tanh", u), Const(2.0))),
        }[e.op]()
        if e.op == "neg":
            return neg(du)
        return mul(outer, du)
    a, b = e.left, e.right
    da, db = diff(a, index), diff(b, index)
    if e.op == "add":
        return add(da, db)
    if e.op == "sub":
        return add(da, neg(db))
    if e.op == "mul":
        return add(mul(da, b), mul(a, db))
    if e.op == "div":
        if db == zero:
            return Binary("div", da, b) if da != zero else zero
        num = add(mul(da, b), neg(mul(a, db)))
        return Binary("div", num, Binary("pow", b, Const(2.0)))
    p = b.value
    if p == 0.0:
        return zero
    return mul(mul(Const(p), Binary("pow", a, Const(p - 1.0))), da)
