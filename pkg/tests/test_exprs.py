import math
from fractions import Fraction

import numpy as np
import pytest

from singlip.exprs import (
    Abs,
    BinOp,
    EvenRootIndex,
    ExprError,
    IndeterminateJet,
    Neg,
    NonIntegerExponent,
    Num,
    ParseError,
    Pow,
    Root,
    UndefinedPoint,
    Var,
    eval_grid,
    eval_jet,
    parse,
    slope_x,
    slope_y,
    to_text,
    value_at,
)

X = Var("x")
Y = Var("y")


def cdiff_x(e, x, y, h=1e-5):
    return (value_at(e, x + h, y) - value_at(e, x - h, y)) / (2 * h)


def cdiff_y(e, x, y, h=1e-5):
    return (value_at(e, x, y + h) - value_at(e, x, y - h)) / (2 * h)


# ---------------------------------------------------------------------------
# parsing


def test_parse_polynomial():
    e = parse("x^2 + y^3")
    assert e == BinOp("+", Pow(X, 2), Pow(Y, 3))


def test_parse_precedence_and_assoc():
    assert parse("x+y*x") == BinOp("+", X, BinOp("*", Y, X))
    assert parse("x-y-x") == BinOp("-", BinOp("-", X, Y), X)
    assert parse("x/y/x") == BinOp("/", BinOp("/", X, Y), X)
    assert parse("-x^2") == Neg(Pow(X, 2))


def test_parse_rational_literals():
    assert parse("3/4") == Num(Fraction(3, 4))
    assert parse("-3/4") == Num(Fraction(-3, 4))
    assert parse("0.25") == Num(Fraction(1, 4))
    # quotient of literals folds, quotient with a variable does not
    assert parse("x/3") == BinOp("/", X, Num(Fraction(3)))


def test_parse_functions():
    assert parse("abs(x)") == Abs(X)
    assert parse("root(x^2 - y^5, 3)") == Root(
        BinOp("-", Pow(X, 2), Pow(Y, 5)), 3
    )
    assert parse("root(x, 5)") == Root(X, 5)


def test_parse_whitespace_insensitive():
    a = parse("y^3/(x^2+y^2)")
    b = parse("  y ^ 3  / ( x^2 + y ^2 ) ")
    assert a == b


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as info:
        parse("x + ")
    assert info.value.position == 4
    with pytest.raises(ParseError):
        parse("x +* y")
    with pytest.raises(ParseError):
        parse("(x + y")
    with pytest.raises(ParseError):
        parse("x y")
    with pytest.raises(ParseError):
        parse("z + 1")
    with pytest.raises(ParseError):
        parse("sin(x)")
    with pytest.raises(ParseError):
        parse("1/0")


def test_parse_rejects_bad_exponents():
    with pytest.raises(NonIntegerExponent):
        parse("x^0.5")
    with pytest.raises(ParseError):
        parse("x^(2)")
    with pytest.raises(ParseError):
        parse("x^65")
    assert parse("x^-2") == Pow(X, -2)


def test_parse_rejects_bad_root_index():
    with pytest.raises(ParseError):
        parse("root(x, 2)")
    with pytest.raises(ParseError):
        parse("root(x, 1)")
    with pytest.raises(ParseError):
        parse("root(x, -3)")


def test_node_validation_direct():
    with pytest.raises(EvenRootIndex):
        Root(X, 4)
    with pytest.raises(ExprError):
        Root(X, 1)
    with pytest.raises(ExprError):
        Pow(X, 65)
    with pytest.raises(ExprError):
        Var("t")
    with pytest.raises(ExprError):
        BinOp("%", X, Y)


# ---------------------------------------------------------------------------
# printing


ROUND_TRIP_STRINGS = [
    "x",
    "-x",
    "x^2+y^3",
    "x^-2",
    "3/4*x",
    "x*(3/4)",
    "y^3/(x^2+y^2)",
    "root((x^2+y^2)*(x^2-y^3), 3)",
    "abs(x*y)-abs(x)*abs(y)",
    "x-(y-x)",
    "x/(y/x)",
    "-(x+y)",
    "(-x)^3",
    "(x+y)^2*(x-y)",
    "2*x-3/7",
]


@pytest.mark.parametrize("text", ROUND_TRIP_STRINGS)
def test_round_trip_from_text(text):
    e = parse(text)
    assert parse(to_text(e)) == e


def _random_expr(rng, depth):
    # Skip the two shapes the parser folds away (Num/Num quotients and
    # negated literals) so printed output reparses to the identical tree.
    if depth <= 0:
        pick = rng.integers(0, 3)
        if pick == 0:
            return X
        if pick == 1:
            return Y
        num = int(rng.integers(1, 9))
        den = int(rng.integers(1, 9))
        return Num(Fraction(num, den))
    pick = rng.integers(0, 8)
    if pick < 4:
        op = "+-*/"[pick]
        left = _random_expr(rng, depth - 1)
        right = _random_expr(rng, depth - 1)
        if op == "/" and isinstance(left, Num) and isinstance(right, Num):
            right = X
        return BinOp(op, left, right)
    if pick == 4:
        return Pow(_random_expr(rng, depth - 1), int(rng.integers(2, 7)))
    if pick == 5:
        return Root(_random_expr(rng, depth - 1), 3 + 2 * int(rng.integers(0, 3)))
    if pick == 6:
        return Abs(_random_expr(rng, depth - 1))
    inner = _random_expr(rng, depth - 1)
    if isinstance(inner, Num):
        inner = Pow(X, 2)
    return Neg(inner)


def test_round_trip_random_trees():
    rng = np.random.Generator(np.random.Philox(20260817))
    for _ in range(300):
        e = _random_expr(rng, int(rng.integers(1, 5)))
        assert parse(to_text(e)) == e


# ---------------------------------------------------------------------------
# scalar jets


def test_jet_polynomial_exact():
    e = parse("x^3*y - 2*x*y^2 + 5")
    j = eval_jet(e, 2.0, 3.0)
    assert j.value == 8 * 3 - 2 * 2 * 9 + 5
    assert j.fx == 3 * 4 * 3 - 2 * 9
    assert j.fy == 8 - 2 * 2 * 2 * 3


def test_jet_quotient_rule():
    e = parse("y^3/(x^2+y^2)")
    j = eval_jet(e, 1.0, 2.0)
    assert j.value == pytest.approx(8 / 5)
    assert j.fx == pytest.approx(-8 * 2 / 25)
    assert j.fy == pytest.approx((12 * 5 - 8 * 4) / 25)


def test_jet_root_chain():
    e = parse("root(x, 3)")
    j = eval_jet(e, 8.0, 0.0)
    assert j.value == pytest.approx(2.0)
    assert j.fx == pytest.approx(1.0 / 12.0)
    assert j.fy == 0.0
    j = eval_jet(e, -8.0, 0.0)
    assert j.value == pytest.approx(-2.0)
    assert j.fx == pytest.approx(1.0 / 12.0)


def test_jet_root_blowup_is_signed():
    e = parse("root(x, 3)")
    j = eval_jet(e, 0.0, 1.0)
    assert j.value == 0.0
    assert j.fx == math.inf
    # u_y == 0 does not pin the y-slope (u = t^2 has root slope inf),
    # so the honest answer at a root zero is indeterminate
    assert j.fy is None
    j = eval_jet(parse("root(-x, 3)"), 0.0, 1.0)
    assert j.fx == -math.inf


def test_jet_root_indeterminate_when_argument_flat():
    # forward mode cannot see through root(x^3, 3) == x at the origin
    j = eval_jet(parse("root(x^3, 3)"), 0.0, 0.0)
    assert j.fx is None
    with pytest.raises(IndeterminateJet):
        slope_x(parse("root(x^3, 3)"), 0.0, 0.0)


def test_jet_abs():
    e = parse("abs(x)")
    assert eval_jet(e, 2.0, 0.0).fx == 1.0
    assert eval_jet(e, -2.0, 0.0).fx == -1.0
    j = eval_jet(e, 0.0, 0.0)
    assert j.fx is None
    assert j.fy == 0.0


def test_jet_undefined_point():
    e = parse("y^3/(x^2+y^2)")
    with pytest.raises(UndefinedPoint):
        eval_jet(e, 0.0, 0.0)
    with pytest.raises(UndefinedPoint):
        eval_jet(parse("x^-1"), 0.0, 1.0)


def test_slope_helpers():
    e = parse("y^3/(x^2+y^2)")
    assert slope_x(e, 1.0, 2.0) == pytest.approx(-16 / 25)
    assert slope_y(e, 1.0, 2.0) == pytest.approx(28 / 25)


def test_zero_times_blowup_is_indeterminate():
    j = eval_jet(parse("x * root(x, 3)"), 0.0, 1.0)
    assert j.fx is None


SURFACES = [
    ("y^3/(x^2+y^2)", lambda x, y: x * x + y * y > 1e-3),
    ("y^4/(x^2+y^2)", lambda x, y: x * x + y * y > 1e-3),
    ("y^5/(x^2+y^4)", lambda x, y: x * x + y ** 4 > 1e-3),
    (
        "root((x^2+y^2)*(x^2-y^3), 3)",
        lambda x, y: abs(x * x - y ** 3) > 1e-3 and x * x + y * y > 1e-3,
    ),
    (
        "root((x^2-y^5)*(x^2-y^7), 3)",
        lambda x, y: abs(x * x - y ** 5) > 1e-3 and abs(x * x - y ** 7) > 1e-3,
    ),
    ("abs(x)*y - x^2", lambda x, y: abs(x) > 1e-3),
]


@pytest.mark.parametrize("text,guard", SURFACES)
def test_jet_matches_central_difference(text, guard):
    e = parse(text)
    rng = np.random.Generator(np.random.Philox(7))
    checked = 0
    while checked < 200:
        x = float(rng.uniform(-1, 1))
        y = float(rng.uniform(-1, 1))
        if not guard(x, y):
            continue
        j = eval_jet(e, x, y)
        fd_x = cdiff_x(e, x, y)
        fd_y = cdiff_y(e, x, y)
        assert j.fx == pytest.approx(fd_x, abs=1e-4 * (1 + abs(j.fx)))
        assert j.fy == pytest.approx(fd_y, abs=1e-4 * (1 + abs(j.fy)))
        checked += 1


# ---------------------------------------------------------------------------
# vectorized twin


def test_grid_matches_scalar_jets():
    e = parse("root((x^2+y^2)*(x^2-y^3), 3)")
    xs = np.linspace(-0.9, 0.9, 13)
    ys = np.linspace(0.05, 0.9, 7)
    V, DX, DY = eval_grid(e, xs[:, None], ys[None, :])
    assert V.shape == (13, 7)
    for i, x in enumerate(xs):
        for k, y in enumerate(ys):
            j = eval_jet(e, float(x), float(y))
            assert V[i, k] == pytest.approx(j.value, rel=1e-12, abs=1e-12)
            for got, want in ((DX[i, k], j.fx), (DY[i, k], j.fy)):
                if want is None:
                    assert math.isnan(got)
                else:
                    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_grid_nonfinite_sentinels():
    V, DX, _ = eval_grid(parse("y^3/(x^2+y^2)"), np.array([0.0]), np.array([0.0]))
    assert math.isnan(V[0])
    V, DX, _ = eval_grid(parse("root(x, 3)"), np.array([0.0]), np.array([1.0]))
    assert V[0] == 0.0
    assert DX[0] == math.inf


def test_grid_broadcasts():
    e = parse("x*y")
    V, DX, DY = eval_grid(e, np.linspace(0, 1, 5), 2.0)
    assert V.shape == (5,)
    assert np.allclose(DX, 2.0)
