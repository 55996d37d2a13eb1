"""Expression trees for surface definitions z = f(x, y).

The rest of the engine needs three things from a surface formula: exact
values, first partials, and honesty about where those partials stop making
sense.  All three come from a small forward-mode jet evaluator over an AST of
rational arithmetic, integer powers, odd roots, and absolute values.  There
is no symbolic differentiation: derivative rules are applied numerically node
by node, and a point where a rule degenerates reports either a signed
infinity (a genuine one-sided blowup, still usable projectively) or None
(indeterminate, e.g. a 0 * inf collision inside a chain product).

A numpy twin (:func:`eval_grid`) evaluates value and both partials over whole
slices at once for feature scanning.  It encodes indeterminacy as nan instead
of None and never raises for non-finite values; scalar `eval_jet` is the
strict one.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

# Caps keep accidental garbage (x^10000) from masquerading as a surface.
MAX_POWER = 64


class ExprError(RuntimeError):
    """Base class for everything raised by this module."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class NonIntegerExponent(ParseError):
    """Exponents must be literal integers; fractional powers go via root()."""


class EvenRootIndex(ExprError):
    """Only odd root indices >= 3 keep the surface defined on all of R^2."""


class UndefinedPoint(ExprError):
    """The surface value itself is not finite at the requested point."""


class IndeterminateJet(ExprError):
    """A partial derivative could not be resolved, even projectively."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self) -> None:
        if self.name not in ("x", "y"):
            raise ExprError(f"unknown variable {self.name!r}")


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self) -> None:
        if self.op not in ("+", "-", "*", "/"):
            raise ExprError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int

    def __post_init__(self) -> None:
        if not isinstance(self.exponent, int) or isinstance(self.exponent, bool):
            raise NonIntegerExponent("exponent must be a literal integer", 0)
        if abs(self.exponent) > MAX_POWER:
            raise ExprError(f"|exponent| must be <= {MAX_POWER}")


@dataclass(frozen=True)
class Root:
    arg: "Expr"
    index: int

    def __post_init__(self) -> None:
        if not isinstance(self.index, int) or isinstance(self.index, bool):
            raise ExprError("root index must be an integer")
        if self.index % 2 == 0:
            raise EvenRootIndex(f"root index must be odd, got {self.index}")
        if self.index < 3:
            raise ExprError(f"root index must be >= 3, got {self.index}")


@dataclass(frozen=True)
class Abs:
    arg: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


Expr = Union[Num, Var, BinOp, Pow, Root, Abs, Neg]


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_]+)|(?P<op>[()+\-*/^,])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup or "op"
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    """Recursive descent over the token list.

    Grammar (whitespace-insensitive)::

        expr   := term (('+' | '-') term)*
        term   := factor (('*' | '/') factor)*
        factor := '-' factor | atom ('^' ['-'] INT)?
        atom   := NUM | 'x' | 'y' | '(' expr ')'
                | 'abs' '(' expr ')' | 'root' '(' expr ',' INT ')'

    Two folds happen at build time so that printing round-trips: a quotient
    of two literals becomes a single rational literal, and a negated literal
    absorbs its sign.
    """

    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text, pos = self.take()
        if text != value:
            shown = text if text else "end of input"
            raise ParseError(f"expected {value!r}, found {shown!r}", pos)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", pos)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            pos = self.peek()[2]
            right = self.factor()
            if op == "/" and isinstance(node, Num) and isinstance(right, Num):
                if right.value == 0:
                    raise ParseError("division by zero in constant", pos)
                node = Num(node.value / right.value)
            else:
                node = BinOp(op, node, right)
        return node

    def factor(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            inner = self.factor()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Neg(inner)
        node = self.atom()
        if self.peek()[1] == "^":
            self.take()
            node = Pow(node, self.integer("exponent"))
        return node

    def integer(self, what: str) -> int:
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        kind, text, pos = self.take()
        if kind != "num":
            raise ParseError(f"expected integer {what}", pos)
        value = Fraction(text)
        if value.denominator != 1:
            raise NonIntegerExponent(f"{what} must be an integer, got {text}", pos)
        k = sign * int(value)
        if abs(k) > MAX_POWER:
            raise ParseError(f"|{what}| must be <= {MAX_POWER}", pos)
        return k

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(Fraction(text))
        if kind == "name":
            if text in ("x", "y"):
                return Var(text)
            if text == "abs":
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return Abs(inner)
            if text == "root":
                self.expect("(")
                inner = self.expr()
                self.expect(",")
                index = self.integer("root index")
                self.expect(")")
                if index % 2 == 0:
                    raise ParseError(f"root index must be odd, got {index}", pos)
                if index < 3:
                    raise ParseError(f"root index must be >= 3, got {index}", pos)
                return Root(inner, index)
            raise ParseError(f"unknown name {text!r}", pos)
        if text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        shown = text if text else "end of input"
        raise ParseError(f"unexpected token {shown!r}", pos)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing

def _prec(e: Expr) -> float:
    if isinstance(e, Num):
        if e.value < 0:
            return 1.5
        return 5.0 if e.value.denominator == 1 else 2.0
    if isinstance(e, (Var, Abs, Root)):
        return 5.0
    if isinstance(e, Pow):
        return 4.0
    if isinstance(e, Neg):
        return 3.0
    return 2.0 if e.op in ("*", "/") else 1.0


def _render(e: Expr) -> str:
    if isinstance(e, Num):
        v = e.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Abs):
        return f"abs({_render(e.arg)})"
    if isinstance(e, Root):
        return f"root({_render(e.arg)}, {e.index})"
    if isinstance(e, Neg):
        inner = _render(e.arg)
        if _prec(e.arg) < 3.0:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = _render(e.base)
        if _prec(e.base) < 5.0:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    p = _prec(e)
    left = _render(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = _render(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left}{e.op}{right}"


def to_text(e: Expr) -> str:
    """Render so that parse(to_text(e)) == e."""
    return _render(e)


# ---------------------------------------------------------------------------
# Scalar jets

@dataclass
class Jet1:
    """Value plus first partials at a point.

    A partial of None means the forward-mode rules hit a genuine
    indeterminacy there; +-inf means a resolved one-sided blowup.
    """

    value: float
    fx: float | None
    fy: float | None


def _d_neg(a: float | None) -> float | None:
    return None if a is None else -a


def _d_add(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    if math.isinf(a) and math.isinf(b) and (a > 0) != (b > 0):
        return None
    return a + b


def _d_sub(a: float | None, b: float | None) -> float | None:
    return _d_add(a, _d_neg(b))


def _d_mul(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    if (a == 0 and math.isinf(b)) or (b == 0 and math.isinf(a)):
        return None
    return a * b


def _finite(v: float, x: float, y: float) -> float:
    if not math.isfinite(v):
        raise UndefinedPoint(f"surface value not finite at ({x}, {y})")
    return v


def _jet(e: Expr, x: float, y: float) -> Jet1:
    if isinstance(e, Num):
        return Jet1(float(e.value), 0.0, 0.0)
    if isinstance(e, Var):
        if e.name == "x":
            return Jet1(x, 1.0, 0.0)
        return Jet1(y, 0.0, 1.0)
    if isinstance(e, Neg):
        j = _jet(e.arg, x, y)
        return Jet1(-j.value, _d_neg(j.fx), _d_neg(j.fy))
    if isinstance(e, Abs):
        j = _jet(e.arg, x, y)
        if j.value > 0:
            return Jet1(j.value, j.fx, j.fy)
        if j.value < 0:
            return Jet1(-j.value, _d_neg(j.fx), _d_neg(j.fy))
        # On the zero set |u| is still flat in any direction where u is.
        fx = 0.0 if j.fx == 0 else None
        fy = 0.0 if j.fy == 0 else None
        return Jet1(0.0, fx, fy)
    if isinstance(e, Root):
        j = _jet(e.arg, x, y)
        n = e.index
        r = math.copysign(abs(j.value) ** (1.0 / n), j.value)
        if j.value != 0:
            try:
                scale = 1.0 / (n * r ** (n - 1))
            except (ZeroDivisionError, OverflowError):
                scale = math.inf
            return Jet1(r, _d_mul(scale, j.fx), _d_mul(scale, j.fy))
        # r = 0: the tangent is vertical unless the argument is flat too.
        fx = None if (j.fx is None or j.fx == 0) else math.copysign(math.inf, j.fx)
        fy = None if (j.fy is None or j.fy == 0) else math.copysign(math.inf, j.fy)
        return Jet1(0.0, fx, fy)
    if isinstance(e, Pow):
        k = e.exponent
        if k == 0:
            return Jet1(1.0, 0.0, 0.0)
        j = _jet(e.base, x, y)
        if k == 1:
            return j
        try:
            v = j.value ** k
        except (ZeroDivisionError, OverflowError):
            raise UndefinedPoint(f"surface value not finite at ({x}, {y})") from None
        _finite(v, x, y)
        try:
            scale = k * j.value ** (k - 1)
        except (ZeroDivisionError, OverflowError):
            scale = math.inf
        return Jet1(v, _d_mul(scale, j.fx), _d_mul(scale, j.fy))
    # BinOp
    l = _jet(e.left, x, y)
    r = _jet(e.right, x, y)
    if e.op == "+":
        return Jet1(_finite(l.value + r.value, x, y),
                    _d_add(l.fx, r.fx), _d_add(l.fy, r.fy))
    if e.op == "-":
        return Jet1(_finite(l.value - r.value, x, y),
                    _d_sub(l.fx, r.fx), _d_sub(l.fy, r.fy))
    if e.op == "*":
        v = _finite(l.value * r.value, x, y)
        fx = _d_add(_d_mul(l.fx, r.value), _d_mul(l.value, r.fx))
        fy = _d_add(_d_mul(l.fy, r.value), _d_mul(l.value, r.fy))
        return Jet1(v, fx, fy)
    if r.value == 0:
        raise UndefinedPoint(f"division by zero at ({x}, {y})")
    v = _finite(l.value / r.value, x, y)
    try:
        scale = 1.0 / (r.value * r.value)
    except (ZeroDivisionError, OverflowError):
        scale = math.inf
    fx = _d_mul(scale, _d_sub(_d_mul(l.fx, r.value), _d_mul(l.value, r.fx)))
    fy = _d_mul(scale, _d_sub(_d_mul(l.fy, r.value), _d_mul(l.value, r.fy)))
    return Jet1(v, fx, fy)


def eval_jet(e: Expr, x: float, y: float) -> Jet1:
    """Evaluate f and both partials at one point.

    Raises UndefinedPoint if f itself is not finite there.  Partials can be
    +-inf (resolved blowup) or None (indeterminate); callers that need a
    definite number use slope_x / slope_y which promote None to an error.
    """
    return _jet(e, float(x), float(y))


def value_at(e: Expr, x: float, y: float) -> float:
    return eval_jet(e, x, y).value


def slope_x(e: Expr, x: float, y: float) -> float:
    j = eval_jet(e, x, y)
    if j.fx is None:
        raise IndeterminateJet(f"d/dx indeterminate at ({x}, {y})")
    return j.fx


def slope_y(e: Expr, x: float, y: float) -> float:
    j = eval_jet(e, x, y)
    if j.fy is None:
        raise IndeterminateJet(f"d/dy indeterminate at ({x}, {y})")
    return j.fy


# ---------------------------------------------------------------------------
# Vectorized twin

def _grid(e: Expr, X: np.ndarray, Y: np.ndarray):
    if isinstance(e, Num):
        v = np.full(X.shape, float(e.value))
        z = np.zeros(X.shape)
        return v, z, z
    if isinstance(e, Var):
        ones = np.ones(X.shape)
        zeros = np.zeros(X.shape)
        if e.name == "x":
            return X.astype(float), ones, zeros
        return Y.astype(float), zeros, ones
    if isinstance(e, Neg):
        v, dx, dy = _grid(e.arg, X, Y)
        return -v, -dx, -dy
    if isinstance(e, Abs):
        v, dx, dy = _grid(e.arg, X, Y)
        s = np.sign(v)
        ddx = np.where(s != 0, s * dx, np.where(dx == 0, 0.0, np.nan))
        ddy = np.where(s != 0, s * dy, np.where(dy == 0, 0.0, np.nan))
        return np.abs(v), ddx, ddy
    if isinstance(e, Root):
        v, dx, dy = _grid(e.arg, X, Y)
        n = e.index
        r = np.cbrt(v) if n == 3 else np.sign(v) * np.abs(v) ** (1.0 / n)
        denom = n * r ** (n - 1)
        return r, dx / denom, dy / denom
    if isinstance(e, Pow):
        k = e.exponent
        if k == 0:
            ones = np.ones(X.shape)
            zeros = np.zeros(X.shape)
            return ones, zeros, zeros
        v, dx, dy = _grid(e.base, X, Y)
        if k == 1:
            return v, dx, dy
        scale = k * v ** (k - 1)
        return v ** k, scale * dx, scale * dy
    lv, ldx, ldy = _grid(e.left, X, Y)
    rv, rdx, rdy = _grid(e.right, X, Y)
    if e.op == "+":
        return lv + rv, ldx + rdx, ldy + rdy
    if e.op == "-":
        return lv - rv, ldx - rdx, ldy - rdy
    if e.op == "*":
        return lv * rv, ldx * rv + lv * rdx, ldy * rv + lv * rdy
    r2 = rv * rv
    return lv / rv, (ldx * rv - lv * rdx) / r2, (ldy * rv - lv * rdy) / r2


def eval_grid(e: Expr, X, Y):
    """Array-valued (f, f_x, f_y) over broadcast grids.

    Non-finite entries are left in place (inf for blowups, nan where the
    scalar engine would report None or UndefinedPoint); callers mask.
    """
    Xb, Yb = np.broadcast_arrays(np.asarray(X, dtype=float),
                                 np.asarray(Y, dtype=float))
    with np.errstate(all="ignore"):
        return _grid(e, Xb, Yb)
