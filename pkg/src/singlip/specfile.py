"""Surface description files: one graph surface plus its analysis window.

A .surf file is a UTF-8 key-value document, one `key = value` pair per
line, with `#` comments and blank lines ignored:

    name = triple_cusp
    f    = root((x^2 + y^2) * (x^2 - y^3), 3)
    m    = 1.0
    eps  = 0.35
    arc.wall_minus = y^3/2 - y^7/4

`f` is the surface expression; `m` and `eps` bound the wedge window
|x| <= m*y, 0 < y <= eps.  `arc.<name>` entries define named test arcs
x = sum of coeff * y^exponent terms with exact rational exponents; they
seed pair families and map constructions.  `expect.<what>` entries carry
a fixture's expected outcome together with its provenance tag and are
read by the corpus runner, not by the analyses themselves.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .arcs import ArcSpec, make_arc
from .exprs import Expr, ParseError, UndefinedPoint, parse, to_text, value_at


class SpecError(RuntimeError):
    """A .surf document is malformed; carries file position."""

    def __init__(self, message: str, origin: str = "<string>",
                 line: int = 0, column: int = 0):
        super().__init__(f"{origin}:{line}:{column}: {message}")
        self.origin = origin
        self.line = line
        self.column = column


@dataclass(frozen=True)
class SurfaceSpec:
    """A parsed surface with its wedge window and named arcs."""

    name: str
    f: Expr
    f_text: str
    wedge_slope: float = 1.0
    eps: float = 0.35
    arcs: dict[str, ArcSpec] = field(default_factory=dict)
    notes: str = ""


@dataclass(frozen=True)
class FixtureCase:
    """A fixture: the surface plus tagged expectations for the corpus."""

    spec: SurfaceSpec
    # key -> (expected value, provenance tag)
    expected: dict[str, tuple[str, str]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# arc expressions


_TERM_RE = re.compile(
    r"^\s*(?:(?P<coeff>[0-9]+(?:\.[0-9]+)?(?:/[0-9]+)?)\s*(?:\*\s*)?)?"
    r"y(?:\s*\^\s*(?P<exp>[0-9]+(?:\.[0-9]+)?(?:/[0-9]+)?))?\s*$"
)


def parse_arc(text: str) -> ArcSpec:
    """Arc DSL: signed sum of coeff * y^exponent terms.

    Exponents are exact rationals (integers, p/q, or finite decimals) and
    must be positive so the arc actually reaches the origin.  A bare `0`
    denotes the zero arc x = 0.
    """
    body = text.strip()
    if body in ("0", "0.0"):
        return make_arc((0.0, 1))
    # split into signed terms; no parentheses in this DSL
    chunks = re.split(r"(?=[+-])", body.replace(" ", " "))
    terms = []
    for chunk in chunks:
        piece = chunk.strip()
        if not piece:
            continue
        sign = 1.0
        while piece and piece[0] in "+-":
            if piece[0] == "-":
                sign = -sign
            piece = piece[1:].strip()
        m = _TERM_RE.match(piece)
        if m is None:
            raise ValueError(f"bad arc term {piece!r}")
        coeff = sign * float(Fraction(m.group("coeff") or "1"))
        exponent = Fraction(m.group("exp") or "1")
        if exponent <= 0:
            raise ValueError(f"arc exponent {exponent} must be positive")
        terms.append((coeff, exponent))
    if not terms:
        raise ValueError("empty arc expression")
    return make_arc(*terms)


# ---------------------------------------------------------------------------
# document parsing


_TAG_RE = re.compile(r"\s*(?P<value>.*?)\s*(?P<tag>\[(?:PAPER|DERIVED|TRIVIAL)[^\]]*\])\s*$")


def _split_expectation(raw: str) -> tuple[str, str]:
    m = _TAG_RE.match(raw)
    if m is None:
        return raw.strip(), ""
    return m.group("value"), m.group("tag")


def _check_vanishes_at_origin(f: Expr, origin: str, line: int) -> None:
    # the surface must pass through the singular point; 0/0 forms are fine
    # as long as the values die along a shrinking circle
    try:
        v = value_at(f, 0.0, 0.0)
    except UndefinedPoint:
        r = 1e-6
        worst = 0.0
        for k in range(16):
            th = 2.0 * math.pi * k / 16.0
            try:
                worst = max(worst, abs(value_at(f, r * math.cos(th), r * math.sin(th))))
            except UndefinedPoint:
                continue
        if worst > 1e-3:
            raise SpecError(f"f has no zero limit at the origin "
                            f"(|f| reaches {worst:.3g} at r = {r:g})",
                            origin, line, 1) from None
        return
    if v != 0.0:
        raise SpecError(f"f(0,0) = {v:g}, expected 0", origin, line, 1)


def parse_specfile(text: str, origin: str = "<string>") -> FixtureCase:
    name = None
    f = None
    f_text = ""
    f_line = 0
    wedge_slope = 1.0
    eps = 0.35
    notes = ""
    arcs: dict[str, ArcSpec] = {}
    expected: dict[str, tuple[str, str]] = {}
    seen: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            raise SpecError("expected `key = value`", origin, lineno,
                            len(line) - len(line.lstrip()) + 1)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        col = line.index("=") + 2
        if key in seen:
            raise SpecError(f"duplicate key {key!r}", origin, lineno, 1)
        seen.add(key)
        if key == "name":
            name = value
        elif key == "f":
            try:
                f = parse(value)
            except ParseError as exc:
                raise SpecError(f"bad expression: {exc.args[0]}", origin,
                                lineno, col + exc.position) from None
            f_text = value
            f_line = lineno
        elif key in ("m", "eps"):
            try:
                number = float(value)
            except ValueError:
                raise SpecError(f"{key} must be a number, got {value!r}",
                                origin, lineno, col) from None
            if not (number > 0):
                raise SpecError(f"{key} must be positive", origin, lineno, col)
            if key == "m":
                wedge_slope = number
            else:
                eps = number
        elif key == "notes":
            notes = value
        elif key.startswith("arc."):
            arc_name = key[4:]
            if not arc_name:
                raise SpecError("arc needs a name: arc.<name> = ...",
                                origin, lineno, 1)
            try:
                arcs[arc_name] = parse_arc(value)
            except ValueError as exc:
                raise SpecError(str(exc), origin, lineno, col) from None
        elif key.startswith("expect."):
            expected[key[7:]] = _split_expectation(value)
        else:
            raise SpecError(f"unknown key {key!r}", origin, lineno, 1)

    if name is None:
        raise SpecError("missing required key `name`", origin, 0, 0)
    if f is None:
        raise SpecError("missing required key `f`", origin, 0, 0)
    _check_vanishes_at_origin(f, origin, f_line)

    spec = SurfaceSpec(name=name, f=f, f_text=to_text(f),
                       wedge_slope=wedge_slope, eps=eps, arcs=arcs,
                       notes=notes)
    return FixtureCase(spec=spec, expected=expected)


def load_specfile(path: str | Path) -> FixtureCase:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read file: {exc}", str(p), 0, 0) from None
    return parse_specfile(text, origin=str(p))
