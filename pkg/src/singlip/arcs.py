"""Arc sampling and one-sided limit estimation.

Everything downstream reduces to the same move: walk a test arc
x = sum_i c_i * t^(e_i) into the origin along a geometric schedule of
parameter values, sample some quantity (a partial, a gap width, a height),
and decide how it behaves as t -> 0.  The decision is a trichotomy: the
quantity dies, settles at a finite value, or blows up.  It is made from the
slope of a log-log least-squares fit on the tail of the schedule, with a
residual ceiling so that a fit which is not actually a power law is reported
as noise instead of being silently believed.

Finite limit values are refined by iterated Aitken extrapolation, which is
exact for a single power-law correction term sampled on a geometric schedule
and in practice removes the intercept bias that a raw fit would keep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

from .exprs import Expr, eval_grid


class NoisyFit(RuntimeError):
    """The sampled tail is not consistent with a single power law."""


class LimitKind(Enum):
    ZERO = "zero"
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass(frozen=True)
class ArcSpec:
    """A Puiseux test arc t -> side * sum(coeff * t^exponent).

    Exponents are exact rationals so arcs can be reported and compared
    without float drift; coefficients are floats.  `side` is a plain sign
    flip for mirror pairs of arcs.
    """

    terms: tuple[tuple[float, Fraction], ...]
    side: int = 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        acc = np.zeros(t.shape)
        for coeff, exponent in self.terms:
            acc = acc + coeff * t ** float(exponent)
        return self.side * acc

    def leading(self) -> tuple[float, Fraction]:
        """Dominant term as t -> 0 (smallest exponent, tie -> larger |coeff|)."""
        return min(self.terms, key=lambda ce: (ce[1], -abs(ce[0])))

    def describe(self) -> str:
        parts = [f"{self.side * c:g}*t^{e}" for c, e in self.terms]
        return " + ".join(parts) if parts else "0"


def make_arc(*terms, side: int = 1) -> ArcSpec:
    """Build an ArcSpec from (coeff, exponent) pairs; exponents may be
    strings, ints, or Fractions."""
    packed = tuple((float(c), Fraction(e)) for c, e in terms)
    return ArcSpec(packed, side)


@dataclass(frozen=True)
class SampleSchedule:
    """Geometric parameter ladder start * ratio^k, k = 0..count-1."""

    start: float = 0.1
    ratio: float = 0.7
    count: int = 25
    floor: float = 1e-14

    def values(self) -> np.ndarray:
        ts = self.start * self.ratio ** np.arange(self.count)
        return ts[ts > self.floor]

    def finer(self, factor: float = 0.1) -> "SampleSchedule":
        return SampleSchedule(self.start * factor, self.ratio, self.count, self.floor)


# ---------------------------------------------------------------------------
# power fits


@dataclass(frozen=True)
class PowerFit:
    """|v| ~ coeff * t^exponent, anchored at the finest usable sample.

    Anchoring matters: slowly decaying corrections (t^(1/4) terms and the
    like) bias an extrapolated intercept far more than they bias the value
    at the finest sample, so the coefficient is reported there.
    """

    exponent: float
    log_value_ref: float
    t_ref: float
    residual: float
    sign: int
    n_points: int

    def coeff(self, exponent: float | None = None) -> float:
        """Signed coefficient C with v ~ C * t^e, using the fitted e unless
        a known exact exponent is supplied."""
        e = self.exponent if exponent is None else exponent
        return self.sign * math.exp(self.log_value_ref - e * math.log(self.t_ref))

    def value_at_ref(self) -> float:
        return self.sign * math.exp(self.log_value_ref)


def fit_power(ts, vals) -> PowerFit:
    """Least squares on (log t, log |v|).  Zero and non-finite samples are
    excluded; fewer than three usable points is not a fit."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    mask = np.isfinite(vals) & (vals != 0) & (ts > 0)
    if int(mask.sum()) < 3:
        raise NoisyFit(f"only {int(mask.sum())} usable samples for a power fit")
    t_used = ts[mask]
    v_used = vals[mask]
    lt = np.log(t_used)
    lv = np.log(np.abs(v_used))
    design = np.stack([lt, np.ones_like(lt)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, lv, rcond=None)
    resid = lv - (slope * lt + intercept)
    residual = float(np.sqrt(np.mean(resid * resid)))
    i_ref = int(np.argmin(t_used))
    t_ref = float(t_used[i_ref])
    sign = 1 if v_used[i_ref] > 0 else -1
    return PowerFit(
        exponent=float(slope),
        log_value_ref=float(slope * math.log(t_ref) + intercept),
        t_ref=t_ref,
        residual=residual,
        sign=sign,
        n_points=int(mask.sum()),
    )


def _tail_spread(seq: np.ndarray) -> float:
    tail = seq[-4:]
    if tail.size < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(tail))))


def aitken_limit(vals, rounds: int = 2) -> float:
    """Accelerated limit of a sequence ordered coarse -> fine.

    Exact for v_k = L + c*r^k; a second round can handle the next correction
    term.  Each round is kept only if the tail of the accelerated sequence
    is tighter than before: once the second differences are down at noise
    level another division by them amplifies junk instead of converging.
    Degenerate (already-constant) sequences fall back to the finest sample.
    """
    seq = np.asarray(vals, dtype=float)
    seq = seq[np.isfinite(seq)]
    if seq.size == 0:
        raise NoisyFit("no finite samples to extrapolate")
    for _ in range(rounds):
        if seq.size < 3:
            break
        d1 = seq[1:] - seq[:-1]
        d2 = seq[2:] - 2.0 * seq[1:-1] + seq[:-2]
        with np.errstate(all="ignore"):
            accel = seq[:-2] - d1[:-1] ** 2 / d2
        accel = accel[np.isfinite(accel)]
        if accel.size == 0 or _tail_spread(accel) > _tail_spread(seq):
            break
        seq = accel
    return float(seq[-1])


# ---------------------------------------------------------------------------
# limit classification


@dataclass(frozen=True)
class Limit:
    """Outcome of the zero / finite / infinite trichotomy.

    `value` is always a float: 0.0, the refined finite limit, or a signed
    infinity.  `fit` is None when the answer needed no fit (all samples
    exactly zero, or an exact blowup sentinel on the arc).
    """

    kind: LimitKind
    value: float
    sign: int
    fit: PowerFit | None = None
    n_dropped: int = 0

    @property
    def is_zero(self) -> bool:
        return self.kind is LimitKind.ZERO

    @property
    def is_finite(self) -> bool:
        return self.kind is LimitKind.FINITE

    @property
    def is_infinite(self) -> bool:
        return self.kind is LimitKind.INFINITE


def classify_samples(
    ts,
    vals,
    *,
    tol_exp: float = 0.1,
    residual_ceiling: float = 0.05,
    fit_tail: int = 12,
    refine: bool = True,
) -> Limit:
    """Decide the t -> 0 trichotomy for finite samples on a geometric ladder.

    Fit exponent above tol_exp means the quantity dies; below -tol_exp it
    blows up; in between the limit is finite and gets Aitken-refined.
    A tail whose log-log residual exceeds the ceiling raises NoisyFit.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    usable = np.isfinite(vals)
    n_dropped = int((~usable).sum())
    ts = ts[usable]
    vals = vals[usable]
    if ts.size < 5:
        raise NoisyFit(f"only {ts.size} finite samples")
    tail = slice(max(0, ts.size - fit_tail), ts.size)
    t_tail = ts[tail]
    v_tail = vals[tail]
    if np.max(np.abs(v_tail)) < 1e-13:
        return Limit(LimitKind.ZERO, 0.0, 0, None, n_dropped)
    fit = fit_power(t_tail, v_tail)
    if fit.residual > residual_ceiling:
        raise NoisyFit(
            f"log-log residual {fit.residual:.4f} exceeds {residual_ceiling}"
        )
    if fit.exponent > tol_exp:
        return Limit(LimitKind.ZERO, 0.0, fit.sign, fit, n_dropped)
    if fit.exponent < -tol_exp:
        return Limit(
            LimitKind.INFINITE, math.copysign(math.inf, fit.sign), fit.sign, fit,
            n_dropped,
        )
    value = aitken_limit(vals) if refine else fit.value_at_ref()
    sign = 0 if value == 0 else (1 if value > 0 else -1)
    return Limit(LimitKind.FINITE, value, sign, fit, n_dropped)


def classify_with_sentinels(ts, comp, **classify_kw) -> Limit:
    comp = np.asarray(comp, dtype=float)
    infs = np.isinf(comp)
    n_inf = int(infs.sum())
    tail_inf = int(np.isinf(comp[-6:]).sum())
    if n_inf >= max(2, comp.size // 4) or tail_inf >= 2:
        # the arc sits on (or keeps touching) an exact blowup locus
        last_inf = comp[infs][-1]
        sign = 1 if last_inf > 0 else -1
        return Limit(LimitKind.INFINITE, last_inf, sign, None, n_inf)
    keep = ~infs
    return classify_samples(np.asarray(ts, float)[keep], comp[keep], **classify_kw)


def slope_limit_along_arc(
    f: Expr,
    arc: ArcSpec,
    schedule: SampleSchedule | None = None,
    component: str = "x",
    **classify_kw,
) -> Limit:
    """Limit of f_x (or f_y) along x = arc(t), y = t as t -> 0.

    Exact blowup sentinels from the jet engine short-circuit to an infinite
    limit when they dominate the tail; isolated sentinel hits are dropped as
    samples that landed on a bad locus.
    """
    ts = (schedule or SampleSchedule()).values()
    xs = arc(ts)
    _, dx, dy = eval_grid(f, xs, ts)
    comp = dx if component == "x" else dy
    return classify_with_sentinels(ts, comp, **classify_kw)


def value_limit_along_arc(
    f: Expr,
    arc: ArcSpec,
    schedule: SampleSchedule | None = None,
    **classify_kw,
) -> Limit:
    """Limit of f itself along the arc."""
    ts = (schedule or SampleSchedule()).values()
    xs = arc(ts)
    v, _, _ = eval_grid(f, xs, ts)
    return classify_with_sentinels(ts, v, **classify_kw)


# ---------------------------------------------------------------------------
# sample dumps


def dump_csv(path, ts, columns: dict[str, np.ndarray], t_name: str = "y") -> None:
    """Write sampled quantities as one CSV, first column the parameter."""
    ts = np.asarray(ts, dtype=float)
    names = list(columns)
    rows = [ts] + [np.asarray(columns[n], dtype=float) for n in names]
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join([t_name] + names) + "\n")
        for i in range(ts.size):
            fh.write(",".join(repr(float(row[i])) for row in rows) + "\n")
