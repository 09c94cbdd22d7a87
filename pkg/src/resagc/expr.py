"""Expression language for nonlinear transition maps.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' intlit)*
    atom   := number | 'x' digits | name | func '(' expr ')' | '(' expr ')'
    intlit := ['-'] digits | '(' ['-'] digits ')'

State variables are ``x0 .. x{n-1}``; any other identifier that is not a
function name must be a declared parameter.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

FUNCTIONS = ("neg", "exp", "sin", "cos", "sqrt", "abs")


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ArithmeticError):
    pass


class DivisionByZero(EvalError):
    pass


class DomainError(EvalError):
    pass


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


Expr = Union[Const, Var, Param, Unary, Binary, Pow]


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_VAR = re.compile(r"x(\d+)$")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            offset = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[offset]!r}", offset)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, state_dim: int, params):
        self.tokens = _tokenize(text)
        self.i = 0
        self.state_dim = state_dim
        self.params = set(params)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind == "end":
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        e = self.atom()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            e = Pow(e, self.int_literal())
        return e

    def int_literal(self) -> int:
        paren = self.peek()[1] == "("
        if paren:
            self.take()
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        kind, val, off = self.take()
        if kind != "num" or not val.isdigit():
            raise ParseError(f"exponent must be an integer literal, found {val!r}", off)
        if paren:
            self.expect(")")
        return sign * int(val)

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(val, arg)
            m = _VAR.match(val)
            if m:
                idx = int(m.group(1))
                if idx >= self.state_dim:
                    raise ParseError(
                        f"variable {val} out of range for state dimension {self.state_dim}", off
                    )
                return Var(idx)
            if val in self.params:
                return Param(val)
            raise ParseError(f"unknown identifier {val!r}", off)
        if val == "(" and kind == "op":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {val or 'end of input'!r}", off)


def parse(text: str, state_dim: int, params=()) -> Expr:
    """Parse ``text`` into an expression tree over ``state_dim`` variables."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text, state_dim, params).parse()


_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_string(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_string(e))`` rebuilds the same tree."""
    return _fmt(e, 0)


def _fmt(e: Expr, need: int) -> str:
    # levels: 1 sum, 2 product, 3 unary minus, 4 power, 5 atom
    if isinstance(e, Const):
        s = repr(float(e.value))
        level = 0 if s.startswith("-") else 5  # catches -0.0 too
    elif isinstance(e, Var):
        s, level = f"x{e.index}", 5
    elif isinstance(e, Param):
        s, level = e.name, 5
    elif isinstance(e, Unary) and e.op != "neg":
        s, level = f"{e.op}({_fmt(e.arg, 0)})", 5
    elif isinstance(e, Unary):
        s, level = "-" + _fmt(e.arg, 3), 3
    elif isinstance(e, Pow):
        exp = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        s, level = f"{_fmt(e.base, 4)}^{exp}", 4
    elif isinstance(e, Binary):
        level = _LEVEL[e.op]
        s = f"{_fmt(e.left, level)} {e.op} {_fmt(e.right, level + 1)}"
    else:
        raise TypeError(f"not an expression: {e!r}")
    return f"({s})" if level < need else s


def variables(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def parameters(e: Expr) -> set[str]:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, Unary):
        return parameters(e.arg)
    if isinstance(e, Pow):
        return parameters(e.base)
    if isinstance(e, Binary):
        return parameters(e.left) | parameters(e.right)
    return set()


# ---------------------------------------------------------------------------
# Pointwise evaluation


def _param(name: str, params: Mapping[str, float]) -> float:
    try:
        return float(params[name])
    except KeyError:
        raise ExprError(f"parameter {name!r} is not bound") from None


def evaluate(e: Expr, x: Sequence[float], params: Mapping[str, float] | None = None) -> float:
    params = params or {}
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index])
    if isinstance(e, Param):
        return _param(e.name, params)
    if isinstance(e, Unary):
        a = evaluate(e.arg, x, params)
        if e.op == "neg":
            return -a
        if e.op == "sqrt":
            if a < 0:
                raise DomainError(f"sqrt of negative value {a}")
            return math.sqrt(a)
        return {"exp": math.exp, "sin": math.sin, "cos": math.cos, "abs": abs}[e.op](a)
    if isinstance(e, Pow):
        b = evaluate(e.base, x, params)
        if b == 0 and e.exponent < 0:
            raise DivisionByZero("zero raised to a negative power")
        return b**e.exponent
    if isinstance(e, Binary):
        a = evaluate(e.left, x, params)
        b = evaluate(e.right, x, params)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            raise DivisionByZero("division by zero")
        return a / b
    raise TypeError(f"not an expression: {e!r}")


def compile_numpy(e: Expr, params: Mapping[str, float] | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised evaluator: maps states of shape ``(..., n)`` to values of shape ``(...)``."""
    params = dict(params or {})

    def build(node: Expr):
        if isinstance(node, Const):
            v = node.value
            return lambda X: np.full(X.shape[:-1], v)
        if isinstance(node, Var):
            j = node.index
            return lambda X: X[..., j]
        if isinstance(node, Param):
            v = _param(node.name, params)
            return lambda X: np.full(X.shape[:-1], v)
        if isinstance(node, Unary):
            f = build(node.arg)
            if node.op == "neg":
                return lambda X: -f(X)
            if node.op == "sqrt":

                def sqrt(X):
                    a = f(X)
                    if np.any(a < 0):
                        raise DomainError("sqrt of negative value")
                    return np.sqrt(a)

                return sqrt
            g = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "abs": np.abs}[node.op]
            return lambda X: g(f(X))
        if isinstance(node, Pow):
            f = build(node.base)
            p = node.exponent

            def power(X):
                b = f(X)
                if p < 0:
                    if np.any(b == 0):
                        raise DivisionByZero("zero raised to a negative power")
                    return 1.0 / b ** (-p)
                return b**p

            return power
        if isinstance(node, Binary):
            fl, fr = build(node.left), build(node.right)
            if node.op == "/":

                def div(X):
                    d = fr(X)
                    if np.any(d == 0):
                        raise DivisionByZero("division by zero")
                    return fl(X) / d

                return div
            op = {"+": np.add, "-": np.subtract, "*": np.multiply}[node.op]
            return lambda X: op(fl(X), fr(X))
        raise TypeError(f"not an expression: {node!r}")

    fn = build(e)
    return lambda X: fn(np.asarray(X, dtype=float))


# ---------------------------------------------------------------------------
# Interval extension


def _down(v: float) -> float:
    return math.nextafter(v, -math.inf)


def _up(v: float) -> float:
    return math.nextafter(v, math.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v: float) -> "Interval":
        return cls(v, v)

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __add__(self, o: "Interval") -> "Interval":
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    def __sub__(self, o: "Interval") -> "Interval":
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, o: "Interval") -> "Interval":
        ps = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(_down(min(ps)), _up(max(ps)))

    def reciprocal(self) -> "Interval":
        if self.lo <= 0 <= self.hi:
            raise DivisionByZero(f"denominator interval [{self.lo}, {self.hi}] contains 0")
        return Interval(_down(1.0 / self.hi), _up(1.0 / self.lo))

    def __truediv__(self, o: "Interval") -> "Interval":
        if o.lo <= 0 <= o.hi:
            raise DivisionByZero(f"denominator interval [{o.lo}, {o.hi}] contains 0")
        qs = (self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi)
        return Interval(_down(min(qs)), _up(max(qs)))

    def __pow__(self, p: int) -> "Interval":
        if p == 0:
            return Interval(1.0, 1.0)
        if p < 0:
            return (self**-p).reciprocal()
        lo, hi = self.lo**p, self.hi**p
        if p % 2 == 0:
            if self.lo <= 0 <= self.hi:
                return Interval(0.0, _up(max(lo, hi)))
            return Interval(_down(min(lo, hi)), _up(max(lo, hi)))
        return Interval(_down(lo), _up(hi))

    def exp(self) -> "Interval":
        return Interval(max(0.0, _down(math.exp(self.lo))), _up(math.exp(self.hi)))

    def sqrt(self) -> "Interval":
        if self.lo < 0:
            raise DomainError(f"sqrt over interval [{self.lo}, {self.hi}] reaches negative values")
        return Interval(max(0.0, _down(math.sqrt(self.lo))), _up(math.sqrt(self.hi)))

    def abs(self) -> "Interval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def sin(self) -> "Interval":
        return _periodic(self, math.sin, peak=math.pi / 2)

    def cos(self) -> "Interval":
        return _periodic(self, math.cos, peak=0.0)


def _periodic(iv: Interval, fn, peak: float) -> Interval:
    """Range of sin/cos: endpoints plus any interior maxima (``peak + 2k pi``) or minima."""
    if iv.width >= 2 * math.pi:
        return Interval(-1.0, 1.0)
    vals = [fn(iv.lo), fn(iv.hi)]
    lo, hi = _down(min(vals)), _up(max(vals))
    two_pi = 2 * math.pi
    k = math.ceil((iv.lo - peak) / two_pi)
    if peak + k * two_pi <= iv.hi:
        hi = 1.0
    k = math.ceil((iv.lo - peak - math.pi) / two_pi)
    if peak + math.pi + k * two_pi <= iv.hi:
        lo = -1.0
    return Interval(max(-1.0, lo), min(1.0, hi))


def eval_interval(e: Expr, box, params: Mapping[str, float] | None = None) -> Interval:
    """Natural interval extension of ``e`` over ``box``.

    ``box`` is anything with ``lower``/``upper`` vectors, or a sequence of
    :class:`Interval`.
    """
    params = params or {}
    if hasattr(box, "lower"):
        ivs = [Interval(float(lo), float(hi)) for lo, hi in zip(box.lower, box.upper)]
    else:
        ivs = list(box)
    return _ival(e, ivs, params)


def _ival(e: Expr, ivs: list[Interval], params) -> Interval:
    if isinstance(e, Const):
        return Interval.point(e.value)
    if isinstance(e, Var):
        return ivs[e.index]
    if isinstance(e, Param):
        return Interval.point(_param(e.name, params))
    if isinstance(e, Unary):
        a = _ival(e.arg, ivs, params)
        if e.op == "neg":
            return -a
        return getattr(a, e.op)()
    if isinstance(e, Pow):
        return _ival(e.base, ivs, params) ** e.exponent
    if isinstance(e, Binary):
        a = _ival(e.left, ivs, params)
        b = _ival(e.right, ivs, params)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    raise TypeError(f"not an expression: {e!r}")
