"""Decomposition of the wedge around a ray into flat and fast pieces.

Inside a narrow wedge around an exceptional ray the surface organizes
itself into finitely many pieces separated by arcs u = r(t): flat pieces
where the transverse slope stays bounded all the way into the origin, and
fast pieces where it blows up while keeping one sign.  The decomposition is
read off per-slice scans of the slope profile.  Three kinds of feature are
tracked across slices: points where the slope vanishes, points where the
surface crosses zero with a vertical tangent, and interior slope maxima
that grow without bound.  Around every unbounded feature the strip where
|g| >= 1 is cut out by bisecting the unit-slope crossings on both flanks,
and the wedge then falls apart into the intervals between those arcs.

The verdict layer compares gap exponents of flat pieces against z-range
exponents of their fast neighbors.  A flat piece that stays wider than its
fast neighbors are tall certifies that the fast strip can be absorbed by a
bilipschitz squeeze; a flat strip that is thinner than the fast walls on
both of its sides, measured across the whole wall-to-wall span, is an
obstruction that no outer bilipschitz map to the plane can survive.

Exponent bookkeeping is in gap form throughout: a quantity scaling like
t^e has exponent e, so wider means a smaller exponent and separation
conditions read as inequalities between fitted exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .arcs import (
    Limit,
    LimitKind,
    NoisyFit,
    SampleSchedule,
    aitken_limit,
    classify_with_sentinels,
)
from .exprs import Expr
from .fibers import (
    ConeCheck,
    Ray,
    RayChart,
    RayFiber,
    SweepResult,
    check_plane_cone,
    golden_max,
    sweep_exceptional_rays,
)


class TrackLost(RuntimeError):
    """A tracked arc could not be continued to the fine end of the schedule."""


class MixedSign(RuntimeError):
    """The transverse slope changes sign inside a piece that is not flat."""


class PartitionFailure(RuntimeError):
    """The wedge did not resolve into an ordered flat/fast partition."""


class ArcKind(Enum):
    WEDGE_EDGE = "wedge_edge"
    SLOPE_ZERO = "slope_zero"
    VALUE_ZERO = "value_zero"
    SLOPE_PEAK = "slope_peak"
    UNIT_SLOPE = "unit_slope"
    SEPARATOR = "separator"


class PieceClass(Enum):
    FLAT = "flat"
    FAST_INCREASING = "fast_increasing"
    FAST_DECREASING = "fast_decreasing"


FAST_CLASSES = (PieceClass.FAST_INCREASING, PieceClass.FAST_DECREASING)


# ---------------------------------------------------------------------------
# numeric helpers


def _power_exponent(ts, vals, need: int = 5) -> float:
    """Leading exponent of vals ~ c * t^e from Aitken-accelerated local
    log-slopes.  Plain least squares is biased by slowly decaying correction
    terms; the local-slope sequence pushes the bias down to the next order."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    mask = np.isfinite(vals) & (vals > 0) & (ts > 0)
    if int(mask.sum()) < need:
        raise NoisyFit(f"only {int(mask.sum())} usable samples for an exponent fit")
    lt = np.log(ts[mask])
    lv = np.log(vals[mask])
    slopes = np.diff(lv) / np.diff(lt)
    return float(aitken_limit(slopes))


def _root(fun, a: float, b: float) -> float:
    """Root of fun on [a, b] with a sign change.  brentq when both endpoint
    values are finite, sign bisection otherwise; nan values count as
    positive so that a blowup endpoint sits on the inside of a strip."""
    fa, fb = fun(a), fun(b)
    if math.isfinite(fa) and math.isfinite(fb) and fa * fb < 0:
        try:
            return float(brentq(fun, a, b, xtol=1e-300, rtol=8.9e-16, maxiter=200))
        except (ValueError, RuntimeError):
            pass
    sa = 1.0 if (math.isnan(fa) or fa > 0) else -1.0
    sb = 1.0 if (math.isnan(fb) or fb > 0) else -1.0
    if sa == sb:
        return math.nan
    for _ in range(110):
        mid = 0.5 * (a + b)
        fm = fun(mid)
        sm = 1.0 if (math.isnan(fm) or fm > 0) else -1.0
        if sm == sa:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _slice_grid(t: float, wedge_slope: float, n_side: int, s_max: float) -> np.ndarray:
    """Transverse sample ladder for one slice: u = +-m * t^s for s in
    [1, s_max] plus the ray itself, sorted ascending.  Logarithmic in |u|,
    so features at any fixed power of t stay resolved as t shrinks."""
    s = np.linspace(1.0, s_max, n_side)
    up = wedge_slope * t ** s
    return np.concatenate([-up, [0.0], up[::-1]])


def _sigma(u: float, t: float, s_max: float) -> float:
    au = abs(u)
    if au <= t ** s_max:
        return math.inf
    return math.log(au) / math.log(t)


# ---------------------------------------------------------------------------
# feature tracks


@dataclass
class FeatureTrack:
    """One feature followed across slices: u locations, and for slope
    features the magnitude of the slope there."""

    kind: ArcKind
    side: int
    slices: np.ndarray
    us: np.ndarray
    mags: np.ndarray | None = None
    growth: Limit | None = None
    # slice times matching `slices`; filled in by the tracker
    ts_cache: np.ndarray | None = field(default=None, repr=False)

    def location_exponent(self) -> float:
        if bool(np.all(np.abs(self.us) < 1e-200)):
            return math.inf
        return _power_exponent(self.ts_cache, np.abs(self.us))

    def u_at(self, k: int) -> float | None:
        hits = np.nonzero(self.slices == k)[0]
        return float(self.us[hits[0]]) if hits.size else None

    def describe(self) -> str:
        try:
            e = self.location_exponent()
            loc = "u ~ 0" if math.isinf(e) else f"|u| ~ t^{e:.3f}"
        except NoisyFit:
            loc = "|u| unresolved"
        return f"{self.kind.value} track ({loc}, {self.slices.size} slices)"


@dataclass
class TrackSet:
    """All feature tracks of one wedge, split by kind."""

    ray: Ray
    ts: np.ndarray
    slope_zeros: list[FeatureTrack]
    blowups: list[FeatureTrack]
    peaks: list[FeatureTrack]
    notes: list[str] = field(default_factory=list)

    def fast_features(self) -> list[FeatureTrack]:
        """Features with unbounded slope: every vertical-tangent crossing,
        plus interior slope maxima whose magnitude blows up."""
        out = list(self.blowups)
        out.extend(
            p for p in self.peaks
            if p.growth is not None and p.growth.kind is LimitKind.INFINITE
        )
        return out


def _chain_events(per_slice, ts, s_max, match_tol):
    """Greedy nearest-in-exponent chaining of per-slice events, no gaps.

    Events on the ray itself (|u| below the ladder floor) live in a single
    shared bucket; everything else is matched by sign and by the running
    location exponent sigma = log|u| / log t."""
    tracks: list[dict] = []
    for k, events in enumerate(per_slice):
        t = ts[k]
        live = [tr for tr in tracks if tr["last"] == k - 1]
        claimed: set[int] = set()
        for u, mag in sorted(events, key=lambda e: e[0]):
            sig = _sigma(u, t, s_max)
            sgn = 0 if math.isinf(sig) else (1 if u > 0 else -1)
            best = None
            best_d = match_tol
            for tr in live:
                if id(tr) in claimed or tr["sign"] != sgn:
                    continue
                d = 0.0 if (math.isinf(sig) and math.isinf(tr["sigma"])) else abs(sig - tr["sigma"])
                if d < best_d:
                    best, best_d = tr, d
            if best is None:
                tracks.append({"sign": sgn, "sigma": sig, "last": k,
                               "slices": [k], "us": [u], "mags": [mag]})
            else:
                claimed.add(id(best))
                best["sigma"] = sig
                best["last"] = k
                best["slices"].append(k)
                best["us"].append(u)
                best["mags"].append(mag)
    return tracks


def track_critical_arcs(
    f: Expr,
    ray: Ray,
    *,
    wedge_slope: float = 1.0,
    schedule: SampleSchedule | None = None,
    n_side: int = 48,
    s_max: float = 6.0,
    blowup_mag: float = 1e6,
    peak_floor: float = 0.05,
    match_tol: float = 0.35,
    classify_kw: dict | None = None,
) -> TrackSet:
    """Follow the critical features of the transverse slope across slices.

    Per slice three detectors run over the sample ladder: sign changes of g
    (bisected to slope zeros), sign changes of the surface value whose
    crossing carries an unbounded slope (vertical tangents), and interior
    local maxima of |g| refined by golden section.  Chains shorter than
    half the schedule, or dead before the last three slices, are transients
    and get dropped with a note.
    """
    kw = classify_kw or {}
    sched = schedule or SampleSchedule()
    ts = sched.values()
    chart = RayChart(f, ray)

    zero_ev: list[list[tuple[float, float]]] = []
    blow_ev: list[list[tuple[float, float]]] = []
    peak_ev: list[list[tuple[float, float]]] = []
    for t in ts:
        us = _slice_grid(t, wedge_slope, n_side, s_max)
        tt = np.full(us.shape, t)
        v, g = chart.grids(tt, us)
        fin = np.isfinite(g)
        vfin = np.isfinite(v)

        zs: list[tuple[float, float]] = []
        for i in range(us.size):
            if fin[i] and g[i] == 0.0:
                zs.append((float(us[i]), 0.0))
        for i in range(us.size - 1):
            if fin[i] and fin[i + 1] and g[i] * g[i + 1] < 0.0:
                r = _root(lambda u: chart.slope_at(t, u), float(us[i]), float(us[i + 1]))
                if math.isfinite(r):
                    zs.append((r, 0.0))
        zero_ev.append(zs)

        bs: list[tuple[float, float]] = []
        for i in range(us.size - 1):
            if vfin[i] and vfin[i + 1] and v[i] * v[i + 1] < 0.0:
                r = _root(lambda u: chart.value_at(t, u), float(us[i]), float(us[i + 1]))
                if not math.isfinite(r):
                    continue
                gmag = abs(chart.slope_at(t, r))
                if not math.isfinite(gmag):
                    gmag = math.inf
                if gmag > blowup_mag:
                    bs.append((r, gmag))
        blow_ev.append(bs)

        ps: list[tuple[float, float]] = []
        ag = np.where(fin, np.abs(g), -np.inf)
        for i in range(1, us.size - 1):
            if ag[i] > peak_floor and ag[i] > ag[i - 1] and ag[i] > ag[i + 1]:
                u_star, mag = golden_max(
                    lambda u: abs(chart.slope_at(t, u)),
                    float(us[i - 1]), float(us[i + 1]), rel=1e-6, max_iter=80,
                )
                if math.isfinite(u_star):
                    ps.append((float(u_star), float(mag)))
        peak_ev.append(ps)

    notes: list[str] = []
    n = ts.size

    def finish(raw, kind, with_mags):
        kept = []
        for tr in raw:
            if len(tr["slices"]) < n // 2 or tr["slices"][-1] < n - 3:
                notes.append(
                    f"dropped transient {kind.value} chain "
                    f"({len(tr['slices'])} slices ending at {tr['slices'][-1]})")
                continue
            ft = FeatureTrack(
                kind=kind,
                side=tr["sign"],
                slices=np.asarray(tr["slices"], dtype=int),
                us=np.asarray(tr["us"], dtype=float),
                mags=np.asarray(tr["mags"], dtype=float) if with_mags else None,
            )
            ft.ts_cache = ts[ft.slices]
            if with_mags:
                try:
                    ft.growth = classify_with_sentinels(ft.ts_cache, ft.mags, **kw)
                except NoisyFit as err:
                    notes.append(f"{kind.value} magnitude unclassified: {err}")
            kept.append(ft)
        return kept

    zeros = finish(_chain_events(zero_ev, ts, s_max, match_tol), ArcKind.SLOPE_ZERO, False)
    blows = finish(_chain_events(blow_ev, ts, s_max, match_tol), ArcKind.VALUE_ZERO, True)
    peaks = finish(_chain_events(peak_ev, ts, s_max, match_tol), ArcKind.SLOPE_PEAK, True)
    return TrackSet(ray=ray, ts=ts, slope_zeros=zeros, blowups=blows, peaks=peaks, notes=notes)


# ---------------------------------------------------------------------------
# strip synthesis around fast features


def _unit_cross(chart, t, uf, us, ag, step) -> float:
    """March outward from a fast feature over the slice ladder to the first
    sample with |g| < 1 and bisect the unit-slope crossing in between.
    nan when the wedge edge arrives first (the strip is clipped)."""
    inset = max(abs(uf), t * 1e-12) * 1e-12
    prev = uf + step * inset
    gprev = abs(chart.slope_at(t, prev))
    if math.isfinite(gprev) and gprev < 1.0:
        return math.nan
    idxs = np.nonzero(us > prev)[0] if step > 0 else np.nonzero(us < prev)[0][::-1]
    for i in idxs:
        gi = ag[i]
        if not math.isfinite(gi):
            prev = float(us[i])
            continue
        if gi < 1.0:
            lo, hi = (prev, float(us[i])) if step > 0 else (float(us[i]), prev)
            r = _root(lambda u: abs(chart.slope_at(t, u)) - 1.0, lo, hi)
            return r
        prev = float(us[i])
    return math.nan


def _strip_regions(chart, ts, features, wedge_slope, n_side, s_max):
    """Unit-slope strips around fast features, with region identity.

    Two features whose |g| >= 1 neighborhoods overlap on a slice belong to
    one region with one pair of edges, and regions keep their identity
    across slices through shared membership.  That is what keeps the two
    edges of a narrow strip apart: they are never matched by location, only
    by which side of which feature they came from.
    """
    n = ts.size
    regions: list[dict] = []
    for k, t in enumerate(ts):
        here = [(i, ft.u_at(k)) for i, ft in enumerate(features)]
        here = [(i, u) for i, u in here if u is not None]
        if not here:
            continue
        us = _slice_grid(t, wedge_slope, n_side, s_max)
        _, g = chart.grids(np.full(us.shape, t), us)
        ag = np.abs(g)

        slice_regions: list[dict] = []
        for i, uf in sorted(here, key=lambda p: p[1]):
            eL = _unit_cross(chart, t, uf, us, ag, -1)
            eR = _unit_cross(chart, t, uf, us, ag, +1)
            lo = eL if math.isfinite(eL) else -wedge_slope * t
            hi = eR if math.isfinite(eR) else wedge_slope * t
            # overlap slack must be relative to the edges themselves: strips
            # near the ray live at scales far below any fixed fraction of t
            prev_hi = slice_regions[-1]["hi"] if slice_regions else None
            slack = 1e-9 * max(abs(lo), abs(prev_hi)) if slice_regions else 0.0
            if slice_regions and lo <= prev_hi + slack:
                sr = slice_regions[-1]
                sr["members"].add(i)
                if hi >= sr["hi"]:
                    sr["hi"], sr["eR"] = hi, eR
            else:
                slice_regions.append(
                    {"lo": lo, "hi": hi, "eL": eL, "eR": eR, "members": {i}})

        for sr in slice_regions:
            target = None
            for pr in regions:
                if pr["members"] & sr["members"] and math.isnan(pr["left"][k]) and math.isnan(pr["right"][k]):
                    target = pr
                    break
            if target is None:
                target = {"members": set(), "left": np.full(n, np.nan), "right": np.full(n, np.nan)}
                regions.append(target)
            target["members"] |= sr["members"]
            target["left"][k] = sr["eL"]
            target["right"][k] = sr["eR"]
    return regions


# ---------------------------------------------------------------------------
# boundary arcs and pieces


@dataclass
class BoundaryArc:
    """One side of a piece: u(t) over the slice schedule."""

    kind: ArcKind
    ts: np.ndarray
    us: np.ndarray
    exponent: float
    side: int
    label: str = ""

    def describe(self) -> str:
        e = "inf" if math.isinf(self.exponent) else f"{self.exponent:.3f}"
        return f"{self.label or self.kind.value} (|u| ~ t^{e})"


def _arc_exponent(ts, us) -> float:
    if bool(np.all(np.abs(us) < 1e-200)):
        return math.inf
    try:
        return _power_exponent(ts, np.abs(us))
    except NoisyFit:
        return math.nan


@dataclass
class PieceRecord:
    """One piece of the wedge with its fitted scaling exponents.

    width_exp is the exponent of the per-slice gap between the two
    boundary arcs, height_exp the exponent of the per-slice range of
    surface values over the piece.  Flat pieces carry a finite slope bound;
    fast pieces carry the growth classification of their max slope."""

    left: BoundaryArc
    right: BoundaryArc
    klass: PieceClass
    width_exp: float
    height_exp: float
    lip_bound: float | None
    slope_range: tuple[float, float]
    growth: Limit
    evidence: list[str] = field(default_factory=list)

    def describe(self) -> str:
        lip = f", |g| <= {self.lip_bound:.3g}" if self.lip_bound is not None else ""
        return (f"{self.klass.value}: gap ~ t^{self.width_exp:.3f}, "
                f"z-range ~ t^{self.height_exp:.3f}{lip}")


def classify_piece(
    chart: RayChart,
    left: BoundaryArc,
    right: BoundaryArc,
    *,
    n_interior: int = 64,
    sign_tail: int = 8,
    ladder_fn=None,
    pole_inside: bool = False,
    classify_kw: dict | None = None,
) -> PieceRecord:
    """Classify the piece between two boundary arcs and fit its exponents.

    The interior sample grid is clustered toward both boundaries, joined
    with the caller's per-slice ladder so that every power-of-t scale
    inside the piece keeps a sample; width-relative offsets alone lose a
    boundary living at a higher power of t than the width.  The slope sup
    is then refined by a golden climb from the grid argmax, which removes
    the sampling phase jitter that would otherwise pollute the growth fit.

    pole_inside marks a piece known to contain a point where the slope is
    genuinely infinite at every t.  There the golden climb would chase the
    pole to a tolerance-dependent depth and wreck the growth fit, so the
    sup estimate stays on the width-relative grid, whose distance to the
    pole scales with the piece and keeps the sequence a clean power.

    Flat means the sup stays bounded as t -> 0; when it blows up instead,
    every sampled slope on the fine slices must keep one sign, otherwise
    the piece straddles a slope zero and the caller must split there
    first."""
    kw = classify_kw or {}
    ts = left.ts
    if ts.size != right.ts.size or not np.array_equal(ts, right.ts):
        raise PartitionFailure("boundary arcs sampled on different schedules")
    widths = right.us - left.us
    if not np.all(np.isfinite(widths)) or np.any(widths <= 0):
        raise PartitionFailure(
            f"degenerate gap between {left.describe()} and {right.describe()}")

    half = np.geomspace(1e-7, 0.5, n_interior // 2)
    weights = np.concatenate([half, 1.0 - half[:-1][::-1]])

    n = ts.size
    heights = np.empty(n)
    smax = np.empty(n)
    pos = neg = 0
    g_last = None
    for k, t in enumerate(ts):
        l_k, r_k = float(left.us[k]), float(right.us[k])
        xs = left.us[k] + widths[k] * weights
        if ladder_fn is not None and not pole_inside:
            lad = np.asarray(ladder_fn(t), dtype=float)
            lad = lad[(lad > l_k) & (lad < r_k)]
            if lad.size:
                xs = np.unique(np.concatenate([xs, lad]))
        tt = np.full(xs.shape, t)
        V, G = chart.grids(tt, xs)
        vends = np.array([chart.value_at(t, l_k), chart.value_at(t, r_k)])
        vals = np.concatenate([V, vends])
        vals = vals[np.isfinite(vals)]
        if vals.size < 4:
            raise PartitionFailure(f"surface undefined over a piece at t={t:.3g}")
        heights[k] = float(vals.max() - vals.min())

        ag = np.where(np.isnan(G), -np.inf, np.abs(G))
        if not np.any(ag > -np.inf):
            smax[k] = np.nan
        elif pole_inside:
            fin = ag[np.isfinite(ag)]
            smax[k] = float(fin.max()) if fin.size else math.inf
        else:
            j = int(np.argmax(ag))
            if math.isinf(ag[j]):
                smax[k] = math.inf
            else:
                lo = float(xs[j - 1]) if j > 0 else l_k
                hi = float(xs[j + 1]) if j + 1 < xs.size else r_k
                _, m = golden_max(lambda u: abs(chart.slope_at(t, u)),
                                  lo, hi, rel=1e-8, max_iter=100)
                smax[k] = m if m >= ag[j] else float(ag[j])
        if k >= n - sign_tail:
            gf = G[np.isfinite(G)]
            pos += int((gf > 0).sum())
            neg += int((gf < 0).sum())
        g_last = G

    try:
        growth = classify_with_sentinels(ts, smax, **kw)
    except NoisyFit as err:
        raise PartitionFailure(f"slope growth over a piece unresolved: {err}") from err

    lip: float | None = None
    if growth.kind is LimitKind.INFINITE:
        if neg == 0 and pos > 0:
            klass = PieceClass.FAST_INCREASING
        elif pos == 0 and neg > 0:
            klass = PieceClass.FAST_DECREASING
        else:
            raise MixedSign(
                f"unbounded piece with {pos} positive and {neg} negative slope "
                "samples; split at the interior slope zero first")
    else:
        klass = PieceClass.FLAT
        finite = smax[np.isfinite(smax)]
        lip = float(finite.max()) if finite.size else math.nan

    width_exp = _power_exponent(ts, widths)
    height_exp = _power_exponent(ts, heights)
    gf = g_last[np.isfinite(g_last)]
    rng = (float(gf.min()), float(gf.max())) if gf.size else (math.nan, math.nan)
    return PieceRecord(left, right, klass, width_exp, height_exp, lip, rng, growth)


@dataclass
class WedgePartition:
    """Ordered decomposition of one wedge into classified pieces."""

    ray: Ray
    ts: np.ndarray
    boundaries: list[BoundaryArc]
    pieces: list[PieceRecord]
    tracks: TrackSet
    alternation_ok: bool
    notes: list[str] = field(default_factory=list)

    def classes(self) -> list[PieceClass]:
        return [p.klass for p in self.pieces]


def _trim_arc(kind, ts, us, side_hint, label, sel) -> BoundaryArc:
    tts, uus = ts[sel], us[sel]
    side = side_hint if side_hint is not None else (
        0 if uus[-1] == 0 else (1 if uus[-1] > 0 else -1))
    return BoundaryArc(kind, tts, uus, _arc_exponent(tts, uus), side, label)


def partition_wedge(
    f: Expr,
    ray: Ray,
    *,
    wedge_slope: float = 1.0,
    schedule: SampleSchedule | None = None,
    n_side: int = 48,
    s_max: float = 6.0,
    n_interior: int = 64,
    blowup_mag: float = 1e6,
    peak_floor: float = 0.05,
    match_tol: float = 0.35,
    split_gap: float = 0.3,
    classify_kw: dict | None = None,
) -> WedgePartition:
    """Decompose the wedge around a ray into flat and fast pieces.

    Boundaries are the slope-zero tracks, the unit-slope edges of the
    strips around every unbounded feature, and the wedge edges.  Adjacent
    flat pieces merge into one.  A merged flat piece walled in by fast
    strips on both sides, with its two walls at genuinely different scale
    exponents on the same side of the ray, is split again at the per-slice
    geometric mean of the walls: each wall gets a flat neighbor of its own
    scale, which is what the separation bookkeeping compares against.
    """
    kw = classify_kw or {}
    sched = schedule or SampleSchedule()
    ts = sched.values()
    chart = RayChart(f, ray)
    tracks = track_critical_arcs(
        f, ray, wedge_slope=wedge_slope, schedule=sched, n_side=n_side,
        s_max=s_max, blowup_mag=blowup_mag, peak_floor=peak_floor,
        match_tol=match_tol, classify_kw=kw)
    notes = list(tracks.notes)

    fast_feats = tracks.fast_features()
    regions = _strip_regions(chart, ts, fast_feats, wedge_slope, n_side, s_max)

    # raw interior arcs aligned to the full schedule, nan where undefined
    raw: list[tuple[ArcKind, np.ndarray, int | None, str]] = []
    for j, tr in enumerate(tracks.slope_zeros):
        us = np.full(ts.size, np.nan)
        us[tr.slices] = tr.us
        raw.append((ArcKind.SLOPE_ZERO, us, tr.side, f"slope_zero[{j}]"))
    for j, rg in enumerate(regions):
        for tag, key in (("L", "left"), ("R", "right")):
            us = rg[key]
            if np.all(np.isnan(us)):
                continue
            fin = np.isfinite(us)
            if int(fin.sum()) < ts.size // 2 or not fin[-1]:
                raise TrackLost(
                    f"strip edge strip[{j}].{tag} defined on only "
                    f"{int(fin.sum())} of {ts.size} slices")
            raw.append((ArcKind.UNIT_SLOPE, us, None, f"strip[{j}].{tag}"))

    defined = np.ones(ts.size, dtype=bool)
    for _, us, _, _ in raw:
        defined &= np.isfinite(us)
    lo = ts.size
    while lo > 0 and defined[lo - 1]:
        lo -= 1
    if ts.size - lo < max(6, ts.size // 3):
        raise PartitionFailure(
            f"only {ts.size - lo} usable slices at the fine end of the schedule")
    sel = slice(lo, ts.size)
    tts = ts[sel]

    interior = [_trim_arc(kind, ts, us, side, label, sel)
                for kind, us, side, label in raw]
    # coincident arcs would make zero-width pieces; keep the first of a pair
    deduped: list[BoundaryArc] = []
    for arc in sorted(interior, key=lambda a: a.us[-1]):
        if deduped and np.allclose(arc.us, deduped[-1].us,
                                   rtol=1e-8, atol=1e-30):
            notes.append(f"dropped duplicate boundary {arc.label}")
            continue
        deduped.append(arc)

    edge_l = BoundaryArc(ArcKind.WEDGE_EDGE, tts, -wedge_slope * tts, 1.0, -1, "edge.L")
    edge_r = BoundaryArc(ArcKind.WEDGE_EDGE, tts, +wedge_slope * tts, 1.0, +1, "edge.R")
    seq = [edge_l] + deduped + [edge_r]
    stack = np.stack([a.us for a in seq])
    if not np.all(np.diff(stack, axis=0) > 0):
        raise PartitionFailure("boundary arcs cross inside the wedge")

    ckw = dict(
        n_interior=n_interior, classify_kw=kw,
        ladder_fn=lambda t: _slice_grid(t, wedge_slope, n_side, s_max))
    pole_us = [tr.u_at(ts.size - 1) for tr in tracks.blowups]
    pole_us = [u for u in pole_us if u is not None]

    def _cls(a: BoundaryArc, b: BoundaryArc) -> PieceRecord:
        pole = any(a.us[-1] < u < b.us[-1] for u in pole_us)
        return classify_piece(chart, a, b, pole_inside=pole, **ckw)

    pieces = [_cls(seq[i], seq[i + 1]) for i in range(len(seq) - 1)]

    # adjacent flat pieces merge: their shared boundary is not a wall
    merged: list[PieceRecord] = []
    for p in pieces:
        if merged and merged[-1].klass is PieceClass.FLAT and p.klass is PieceClass.FLAT:
            joint = _cls(merged[-1].left, p.right)
            if joint.klass is not PieceClass.FLAT:
                raise PartitionFailure("merging two flat pieces lost flatness")
            merged[-1] = joint
        else:
            merged.append(p)
    pieces = merged

    # split a flat piece walled in by fast strips at different scales
    final: list[PieceRecord] = []
    for i, p in enumerate(pieces):
        walled = (p.klass is PieceClass.FLAT
                  and i > 0 and pieces[i - 1].klass in FAST_CLASSES
                  and i + 1 < len(pieces) and pieces[i + 1].klass in FAST_CLASSES)
        if (walled and p.left.side == p.right.side and p.left.side != 0
                and math.isfinite(p.left.exponent) and math.isfinite(p.right.exponent)
                and abs(p.left.exponent - p.right.exponent) > split_gap):
            sep_us = p.left.side * np.sqrt(p.left.us * p.right.us)
            sep = BoundaryArc(ArcKind.SEPARATOR, tts, sep_us,
                              _arc_exponent(tts, sep_us), p.left.side,
                              f"separator[{i}]")
            final.append(_cls(p.left, sep))
            final.append(_cls(sep, p.right))
            notes.append(
                f"split flat piece between walls at t^{p.left.exponent:.3f} "
                f"and t^{p.right.exponent:.3f} at their geometric mean")
        else:
            final.append(p)
    pieces = final

    for p in pieces:
        l, r = p.left.us[-1], p.right.us[-1]
        if p.klass in FAST_CLASSES:
            inside = [ft for ft in fast_feats
                      if ft.u_at(ts.size - 1) is not None
                      and l < ft.u_at(ts.size - 1) < r]
            if not inside:
                raise PartitionFailure(
                    "fast piece carries no unbounded feature between "
                    f"{p.left.describe()} and {p.right.describe()}")
            p.evidence = [ft.describe() for ft in inside]
        else:
            p.evidence = [ft.describe() for ft in tracks.slope_zeros
                          if ft.u_at(ts.size - 1) is not None
                          and l < ft.u_at(ts.size - 1) < r]

    classes = [p.klass for p in pieces]
    alternation = True
    for a, b in zip(classes, classes[1:]):
        if a in FAST_CLASSES and b in FAST_CLASSES:
            alternation = False
    fast_seq = [c for c in classes if c in FAST_CLASSES]
    for a, b in zip(fast_seq, fast_seq[1:]):
        if a is b:
            alternation = False

    bounds = [pieces[0].left] + [p.right for p in pieces]
    return WedgePartition(ray=ray, ts=tts, boundaries=bounds, pieces=pieces,
                          tracks=tracks, alternation_ok=alternation, notes=notes)


# ---------------------------------------------------------------------------
# separation verdicts


class SeparationKind(Enum):
    WELL_SEPARATED = "well_separated"
    OBSTRUCTED = "obstructed"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ObstructionWitness:
    """A flat strip thinner than the fast walls flanking it.

    span is the piece-index range of the whole wall-to-wall union; omega is
    the gap exponent of that union and eta_left/eta_right the z-range
    exponents of the increasing and decreasing walls.  margin is
    omega - max(eta): positive means the union is asymptotically narrower
    than both walls are tall, which kills outer bilipschitz flattening."""

    flat_index: int
    span: tuple[int, int]
    omega: float
    eta_left: float
    eta_right: float
    margin: float

    def describe(self) -> str:
        return (f"pieces {self.span[0]}..{self.span[1]} around flat piece "
                f"{self.flat_index}: gap exponent {self.omega:.3f} exceeds "
                f"wall height exponents ({self.eta_left:.3f}, {self.eta_right:.3f})")


@dataclass
class SeparationVerdict:
    kind: SeparationKind
    failures: list[str]
    witness: ObstructionWitness | None
    notes: list[str] = field(default_factory=list)


def _search_obstruction(partition: WedgePartition, tol: float) -> ObstructionWitness | None:
    """Exhaustive flank search for an obstructed flat piece.

    For a flat piece P the left flank is a contiguous run of flat and
    one-signed fast pieces containing at least one fast member, the right
    flank the same with the opposite fast sign, in either orientation.
    The witness is the flank pair with the largest exponent margin."""
    pieces = partition.pieces
    n = len(pieces)
    best: ObstructionWitness | None = None
    for i, p in enumerate(pieces):
        if p.klass is not PieceClass.FLAT:
            continue
        for left_cls in FAST_CLASSES:
            right_cls = (PieceClass.FAST_DECREASING
                         if left_cls is PieceClass.FAST_INCREASING
                         else PieceClass.FAST_INCREASING)
            for a in range(i):
                run_l = pieces[a:i]
                if any(q.klass is right_cls for q in run_l):
                    continue
                fast_l = [q for q in run_l if q.klass is left_cls]
                if not fast_l:
                    continue
                eta_l = max(q.height_exp for q in fast_l)
                for b in range(i + 1, n):
                    run_r = pieces[i + 1:b + 1]
                    if any(q.klass is left_cls for q in run_r):
                        continue
                    fast_r = [q for q in run_r if q.klass is right_cls]
                    if not fast_r:
                        continue
                    eta_r = max(q.height_exp for q in fast_r)
                    try:
                        omega = _power_exponent(
                            partition.ts, pieces[b].right.us - pieces[a].left.us)
                    except NoisyFit:
                        continue
                    margin = omega - max(eta_l, eta_r)
                    if margin > tol and (best is None or margin > best.margin):
                        best = ObstructionWitness(
                            flat_index=i, span=(a, b), omega=omega,
                            eta_left=eta_l, eta_right=eta_r, margin=margin)
    return best


def check_well_separated(partition: WedgePartition, tol: float = 0.05) -> SeparationVerdict:
    """Compare every flat piece against its fast neighbors.

    Well separated when each flat gap exponent stays at or below the
    z-range exponent of every adjacent fast piece (wider than the wall is
    tall).  When that certificate fails the flank search looks for a
    positive obstruction margin; failing both ways is inconclusive, not a
    verdict."""
    pieces = partition.pieces
    if all(p.klass is PieceClass.FLAT for p in pieces):
        return SeparationVerdict(SeparationKind.WELL_SEPARATED, [], None,
                                 ["no fast pieces in the wedge"])
    failures: list[str] = []
    for i, p in enumerate(pieces):
        if p.klass is not PieceClass.FLAT:
            continue
        for j in (i - 1, i + 1):
            if 0 <= j < len(pieces) and pieces[j].klass in FAST_CLASSES:
                if p.width_exp > pieces[j].height_exp + tol:
                    failures.append(
                        f"flat piece {i} gap exponent {p.width_exp:.3f} above "
                        f"fast neighbor {j} height exponent {pieces[j].height_exp:.3f}")
    if not failures:
        return SeparationVerdict(SeparationKind.WELL_SEPARATED, [], None)
    witness = _search_obstruction(partition, tol)
    if witness is not None:
        return SeparationVerdict(SeparationKind.OBSTRUCTED, failures, witness)
    return SeparationVerdict(
        SeparationKind.INCONCLUSIVE, failures, None,
        ["separation certificate failed but no obstruction margin found"])


# ---------------------------------------------------------------------------
# whole-surface verdict


class PlaneTag(Enum):
    PLANE_EQUIVALENT = "bilipschitz_plane"
    NOT_PLANE_EQUIVALENT = "not_bilipschitz_plane"
    UNDECIDED = "undecided"


class PlaneReason(Enum):
    NO_EXCEPTIONAL_RAYS = "no_exceptional_rays"
    WEDGES_WELL_SEPARATED = "all_wedges_well_separated"
    OBSTRUCTED_WEDGE = "obstructed_wedge"
    INSUFFICIENT_EVIDENCE = "insufficient_evidence"


@dataclass
class WedgeReport:
    fiber: RayFiber
    partition: WedgePartition | None
    separation: SeparationVerdict | None
    error: str | None = None


@dataclass
class PlaneVerdict:
    """Outcome of the plane-equivalence decision for one surface."""

    tag: PlaneTag
    reason: PlaneReason
    cone: ConeCheck
    sweep: SweepResult
    wedges: list[WedgeReport]
    notes: list[str] = field(default_factory=list)

    @property
    def obstruction(self) -> ObstructionWitness | None:
        for w in self.wedges:
            if w.separation is not None and w.separation.kind is SeparationKind.OBSTRUCTED:
                return w.separation.witness
        return None


def plane_verdict(
    f: Expr,
    *,
    wedge_slope: float = 1.0,
    schedule: SampleSchedule | None = None,
    separation_tol: float = 0.05,
    sweep_kw: dict | None = None,
    partition_kw: dict | None = None,
) -> PlaneVerdict:
    """Decide whether the graph surface is outer bilipschitz to the plane.

    No exceptional rays at all settles it immediately.  With exceptional
    rays present, each one gets its wedge decomposed and checked: every
    wedge well separated is a yes, any obstructed wedge is a no, and
    anything short of both is left undecided rather than guessed.  The
    tangent-cone check is recorded for the report but does not gate the
    pipeline; a failed cone probe on an otherwise decidable surface should
    not mask the sharper per-ray evidence."""
    notes: list[str] = []
    cone = check_plane_cone(f)
    if not cone.is_plane:
        notes.append("tangent cone probe did not certify a plane cone")

    sweep = sweep_exceptional_rays(f, **(sweep_kw or {}))
    if not sweep.fibers:
        return PlaneVerdict(PlaneTag.PLANE_EQUIVALENT, PlaneReason.NO_EXCEPTIONAL_RAYS,
                            cone, sweep, [], notes)

    pkw = dict(partition_kw or {})
    pkw.setdefault("wedge_slope", wedge_slope)
    if schedule is not None:
        pkw.setdefault("schedule", schedule)

    wedges: list[WedgeReport] = []
    for fiber in sweep.fibers:
        try:
            part = partition_wedge(f, fiber.ray, **pkw)
            sep = check_well_separated(part, tol=separation_tol)
            wedges.append(WedgeReport(fiber, part, sep))
        except (PartitionFailure, TrackLost, MixedSign, NoisyFit) as err:
            wedges.append(WedgeReport(fiber, None, None,
                                      f"{type(err).__name__}: {err}"))

    kinds = [w.separation.kind if w.separation is not None else None for w in wedges]
    if any(k is SeparationKind.OBSTRUCTED for k in kinds):
        return PlaneVerdict(PlaneTag.NOT_PLANE_EQUIVALENT, PlaneReason.OBSTRUCTED_WEDGE,
                            cone, sweep, wedges, notes)
    if all(k is SeparationKind.WELL_SEPARATED for k in kinds):
        return PlaneVerdict(PlaneTag.PLANE_EQUIVALENT, PlaneReason.WEDGES_WELL_SEPARATED,
                            cone, sweep, wedges, notes)
    notes.extend(w.error for w in wedges if w.error is not None)
    return PlaneVerdict(PlaneTag.UNDECIDED, PlaneReason.INSUFFICIENT_EVIDENCE,
                        cone, sweep, wedges, notes)
