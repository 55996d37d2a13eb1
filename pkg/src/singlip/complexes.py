"""Cyclic Holder complexes and their combinatorial equivalence.

A germ of a graph surface at the singular point decomposes into finitely
many pieces arranged around the circle of directions: the measured pieces
inside each exceptional wedge, and one generic sector between consecutive
wedges.  Each piece contributes a single rational Holder exponent, and the
cyclic sequence of exponents is the invariant this module compares.

The exponent of a piece is read off the partition data: a flat piece is
inner equivalent to its shadow in the plane, so it contributes its width
exponent; a fast piece is governed by its vertical extent, so it
contributes its height exponent.  Generic sectors, where the surface is a
lipschitz graph all the way to the origin, contribute exponent one.
Measured exponents are snapped to nearby small-denominator rationals so
that equivalence can compare them exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .arcs import Limit, LimitKind
from .pieces import (
    FAST_CLASSES,
    ArcKind,
    BoundaryArc,
    PieceClass,
    PieceRecord,
    PlaneVerdict,
)

__all__ = [
    "BadBeta",
    "IncompleteCover",
    "HolderEdge",
    "HolderComplex",
    "EquivalenceResult",
    "snap_exponent",
    "generic_sector",
    "assemble_sectors",
    "build_holder",
    "holder_complex",
    "combinatorially_equivalent",
    "plane_complex",
]


class BadBeta(RuntimeError):
    """A Holder exponent is below one or not close to any small rational."""


class IncompleteCover(RuntimeError):
    """The piece data does not cover a full punctured neighborhood."""


# ---------------------------------------------------------------------------
# snapping measured exponents to rationals


def snap_exponent(value: float, max_denominator: int = 12, tol: float = 0.02) -> Fraction:
    """Round a fitted exponent to the nearest small-denominator rational.

    Fitted width and height exponents come out of finite-slice power fits,
    so they carry noise of order 1e-3 .. 1e-2.  Equivalence of complexes
    must compare exponents exactly, so each fitted value is snapped to the
    closest fraction with denominator at most max_denominator.  A value
    farther than tol from every such fraction is rejected rather than
    silently rounded, as is anything below one: exponents below one would
    mean a piece wider than its distance to the origin.
    """
    v = float(value)
    if not math.isfinite(v):
        raise BadBeta(f"exponent {v} is not finite")
    snapped = Fraction(v).limit_denominator(max_denominator)
    if abs(float(snapped) - v) > tol:
        raise BadBeta(
            f"exponent {v:.4f} is not within {tol} of a rational with "
            f"denominator <= {max_denominator}"
        )
    if snapped < 1:
        raise BadBeta(f"exponent {v:.4f} snaps to {snapped}, below one")
    return snapped


def _piece_exponent(piece: PieceRecord) -> Fraction:
    # flat pieces are ruled by their shadow's width, fast ones by their
    # vertical extent
    if piece.klass in FAST_CLASSES:
        return snap_exponent(piece.height_exp)
    return snap_exponent(piece.width_exp)


# ---------------------------------------------------------------------------
# the complex


@dataclass(frozen=True)
class HolderEdge:
    """One piece of the complex: a label and its rational Holder exponent."""

    label: str
    exponent: Fraction

    def describe(self) -> str:
        return f"{self.label}: exponent {self.exponent}"


@dataclass(frozen=True)
class HolderComplex:
    """Cyclic sequence of Holder edges around the circle of directions.

    The sequence has no distinguished starting edge; all comparisons are up
    to rotation and reversal.
    """

    edges: tuple[HolderEdge, ...]

    def __post_init__(self):
        if not self.edges:
            raise IncompleteCover("a Holder complex needs at least one edge")
        for e in self.edges:
            if e.exponent < 1:
                raise BadBeta(f"edge {e.label} has exponent {e.exponent} < 1")

    def exponents(self) -> tuple[Fraction, ...]:
        return tuple(e.exponent for e in self.edges)

    def describe(self) -> str:
        inner = ", ".join(str(e.exponent) for e in self.edges)
        return f"cyclic({inner})"


# ---------------------------------------------------------------------------
# assembling the complex from a plane verdict


def generic_sector(label: str) -> PieceRecord:
    """Synthetic flat piece for a sector of non-exceptional directions.

    Away from the exceptional rays the surface is a lipschitz graph on a
    full angular sector, so the piece is flat with width exponent exactly
    one.  The height exponent is left as nan: it is never measured and a
    flat piece's complex exponent does not use it.
    """
    ts = np.geomspace(1e-3, 1e-1, 8)
    left = BoundaryArc(ArcKind.SEPARATOR, ts, -ts, 1.0, -1, f"{label}.L")
    right = BoundaryArc(ArcKind.SEPARATOR, ts, +ts, 1.0, +1, f"{label}.R")
    return PieceRecord(
        left=left,
        right=right,
        klass=PieceClass.FLAT,
        width_exp=1.0,
        height_exp=math.nan,
        lip_bound=None,
        slope_range=(math.nan, math.nan),
        growth=Limit(LimitKind.FINITE, math.nan, 0),
        evidence=[f"generic sector {label}: lipschitz off the wedges"],
    )


def assemble_sectors(verdict: PlaneVerdict) -> list[PieceRecord]:
    """Order wedge pieces around the circle and fill the gaps with sectors.

    Wedges are walked counterclockwise by ray angle.  Piece lists inside a
    wedge run left to right along the transverse axis, which points
    clockwise, so each wedge's pieces are reversed to match the walk.  One
    generic sector is inserted after each wedge; with no wedges at all the
    whole circle is a single sector.
    """
    for w in verdict.wedges:
        if w.error is not None:
            raise IncompleteCover(
                f"wedge at {w.fiber.ray.describe()} has no partition: {w.error}"
            )
        if w.partition is None:
            raise IncompleteCover(
                f"wedge at {w.fiber.ray.describe()} was never partitioned"
            )
    if not verdict.wedges:
        return [generic_sector("sector(all directions)")]
    ordered = sorted(verdict.wedges, key=lambda w: w.fiber.ray.angle)
    parts: list[PieceRecord] = []
    for i, w in enumerate(ordered):
        parts.extend(reversed(w.partition.pieces))
        here = ordered[i].fiber.ray.describe()
        there = ordered[(i + 1) % len(ordered)].fiber.ray.describe()
        parts.append(generic_sector(f"sector({here} .. {there})"))
    return parts


def _edge_label(i: int, piece: PieceRecord) -> str:
    if piece.evidence and piece.evidence[0].startswith("generic sector"):
        return piece.left.label[:-2] if piece.left.label.endswith(".L") else f"e{i}"
    return f"e{i}:{piece.klass.value}"


def build_holder(parts: Sequence[PieceRecord]) -> HolderComplex:
    """Holder complex of an ordered cyclic list of pieces.

    Every piece must already be classified; flat pieces contribute their
    width exponent and fast pieces their height exponent, each snapped to a
    small rational.
    """
    if not parts:
        raise IncompleteCover("no pieces: nothing covers the punctured disk")
    edges = tuple(
        HolderEdge(_edge_label(i, p), _piece_exponent(p)) for i, p in enumerate(parts)
    )
    return HolderComplex(edges)


def holder_complex(verdict: PlaneVerdict) -> HolderComplex:
    """Full pipeline from a plane verdict to its Holder complex."""
    return build_holder(assemble_sectors(verdict))


# ---------------------------------------------------------------------------
# combinatorial equivalence


@dataclass(frozen=True)
class EquivalenceResult:
    """Outcome of a cyclic comparison, with the matching witness.

    When equivalent, other[i] == mine[(i + offset) % n] after optionally
    reversing mine (mirrored=True).
    """

    equivalent: bool
    offset: int | None = None
    mirrored: bool = False

    def __bool__(self) -> bool:
        return self.equivalent


def _cyclic_match(a: tuple[Fraction, ...], b: tuple[Fraction, ...]) -> int | None:
    n = len(a)
    for k in range(n):
        if all(b[i] == a[(i + k) % n] for i in range(n)):
            return k
    return None


def combinatorially_equivalent(c1: HolderComplex, c2: HolderComplex) -> EquivalenceResult:
    """Decide whether two complexes agree up to rotation and reversal.

    Exponents are compared exactly as rationals.  The returned witness
    gives the rotation offset, and whether c1 had to be reversed.
    """
    a, b = c1.exponents(), c2.exponents()
    if len(a) != len(b):
        return EquivalenceResult(False)
    k = _cyclic_match(a, b)
    if k is not None:
        return EquivalenceResult(True, k, False)
    k = _cyclic_match(a[::-1], b)
    if k is not None:
        return EquivalenceResult(True, k, True)
    return EquivalenceResult(False)


# ---------------------------------------------------------------------------
# model complexes


def plane_complex(widths: Sequence[Fraction | int | str | float]) -> HolderComplex:
    """Model complex with the given cyclic exponent sequence.

    This is the complex of a plane cut into consecutive sectors with the
    prescribed width exponents: the reference object that a measured
    complex is compared against.  Exact inputs (fractions, integers,
    strings) are taken as they are; floats go through the same snapping as
    measured exponents.
    """
    edges = []
    for i, w in enumerate(widths):
        if isinstance(w, float):
            q = snap_exponent(w)
        else:
            q = Fraction(w)
        if q < 1:
            raise BadBeta(f"width exponent {q} is below one")
        edges.append(HolderEdge(f"sector{i}", q))
    return HolderComplex(tuple(edges))
