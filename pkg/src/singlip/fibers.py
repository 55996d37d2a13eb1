"""Ray charts, transverse slope fibers, and the exceptional-direction sweep.

The central object is the fiber of limiting transverse slopes over a ray
through the singular point: walk into the origin inside a wedge around the
ray, collect every limit value of the slope of the surface transverse to the
ray, and take the interval hull.  A ray is exceptional when that fiber is
more than a single value; it is full when the hull is the whole extended
line.  A direction sweep scores all rays by the limiting width of their
slope range and refines the survivors down to isolated rays, so a surface
can be summarized by its finite list of exceptional rays and their fibers.

Geometry convention: a ray at angle theta has unit direction e_r and
transverse direction e_n = e_r rotated by -90 degrees, so the chart
(t, u) -> t*e_r + u*e_n is positively oriented with u increasing to the
right when looking along the ray.  The four axis rays get exact frames and
their transverse slope is read off a single partial derivative; this avoids
0 * inf artifacts exactly where blowups live on the fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .arcs import (
    Limit,
    LimitKind,
    NoisyFit,
    PowerFit,
    SampleSchedule,
    classify_samples,
    classify_with_sentinels,
    fit_power,
)
from .exprs import Expr, UndefinedPoint, eval_grid, eval_jet

TWO_PI = 2.0 * math.pi

_AXIS_FRAMES = {
    "+x": ((1.0, 0.0), (0.0, -1.0)),
    "+y": ((0.0, 1.0), (1.0, 0.0)),
    "-x": ((-1.0, 0.0), (0.0, 1.0)),
    "-y": ((0.0, -1.0), (-1.0, 0.0)),
}

AXIS_ANGLES = {
    "+x": 0.0,
    "+y": 0.5 * math.pi,
    "-x": math.pi,
    "-y": 1.5 * math.pi,
}


@dataclass(frozen=True)
class Ray:
    angle: float
    label: str | None
    er: tuple[float, float]
    en: tuple[float, float]

    def describe(self) -> str:
        return self.label if self.label else f"angle={self.angle:.6f}"


def ray_at(angle: float, snap_tol: float = 0.0) -> Ray:
    """Ray at the given angle, snapped to an axis when within snap_tol.

    Axis rays carry exact rational frames so that transverse slopes reduce
    to a single partial instead of a trigonometric combination.
    """
    theta = float(angle) % TWO_PI
    for label, axis_angle in AXIS_ANGLES.items():
        delta = (theta - axis_angle + math.pi) % TWO_PI - math.pi
        if abs(delta) <= snap_tol:
            er, en = _AXIS_FRAMES[label]
            return Ray(axis_angle, label, er, en)
    er = (math.cos(theta), math.sin(theta))
    en = (er[1], -er[0])
    return Ray(theta, None, er, en)


class RayChart:
    """Wedge coordinates around a ray and the transverse slope g there.

    (t, u) maps to t*e_r + u*e_n; g(t, u) is grad f dot e_n, the slope of
    the graph surface in the direction across the ray.
    """

    def __init__(self, f: Expr, ray: Ray) -> None:
        self.f = f
        self.ray = ray

    def xy(self, t, u):
        cx, cy = self.ray.er
        nx, ny = self.ray.en
        return t * cx + u * nx, t * cy + u * ny

    def grids(self, T, U):
        """(f, g) arrays over chart coordinates; non-finite left in place."""
        X, Y = self.xy(np.asarray(T, float), np.asarray(U, float))
        V, DX, DY = eval_grid(self.f, X, Y)
        nx, ny = self.ray.en
        with np.errstate(all="ignore"):
            if ny == 0.0:
                G = nx * DX
            elif nx == 0.0:
                G = ny * DY
            else:
                G = nx * DX + ny * DY
        return V, G

    def slope_grid(self, T, U):
        return self.grids(T, U)[1]

    def value_grid(self, T, U):
        X, Y = self.xy(np.asarray(T, float), np.asarray(U, float))
        V, _, _ = eval_grid(self.f, X, Y)
        return V

    def slope_at(self, t: float, u: float) -> float:
        """Scalar g via the strict jet engine; nan when indeterminate or
        when f itself is undefined at the point."""
        x, y = self.xy(t, u)
        try:
            jet = eval_jet(self.f, x, y)
        except UndefinedPoint:
            return math.nan
        nx, ny = self.ray.en
        fx = math.nan if jet.fx is None else jet.fx
        fy = math.nan if jet.fy is None else jet.fy
        if ny == 0.0:
            return nx * fx
        if nx == 0.0:
            return ny * fy
        return nx * fx + ny * fy

    def value_at(self, t: float, u: float) -> float:
        x, y = self.xy(t, u)
        try:
            return eval_jet(self.f, x, y).value
        except UndefinedPoint:
            return math.nan


# ---------------------------------------------------------------------------
# bracketed extremum refinement


def golden_max(fun, a: float, b: float, rel: float = 1e-10, max_iter: int = 200):
    """Golden-section maximum of fun on [a, b]; returns (x_best, f_best).

    nan evaluations count as minus infinity, so the search walks around
    isolated bad points.  The best value ever seen is returned, which also
    makes the routine useful on spiked (unbounded) profiles: it climbs the
    spike and reports how high it got.
    """

    def val(x: float) -> float:
        v = fun(x)
        return -math.inf if math.isnan(v) else v

    if a > b:
        a, b = b, a
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    fa, fb = val(a), val(b)
    best_x, best_v = (a, fa) if fa >= fb else (b, fb)
    h = b - a
    c, d = b - invphi * h, a + invphi * h
    fc, fd = val(c), val(d)
    for x, v in ((c, fc), (d, fd)):
        if v > best_v:
            best_x, best_v = x, v
    for _ in range(max_iter):
        if h <= rel * max(abs(a), abs(b), 1e-12):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = b - invphi * h
            fc = val(c)
            if fc > best_v:
                best_x, best_v = c, fc
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + invphi * h
            fd = val(d)
            if fd > best_v:
                best_x, best_v = d, fd
    return best_x, best_v


# ---------------------------------------------------------------------------
# per-slice slope extremes over a wedge


def _exponent_grid(ts: np.ndarray, wedge_slope: float, n_exp: int, s_max: float,
                   s_min: float = 1.0):
    """u sample matrix per slice: 0 plus +-wedge_slope * t^s, s in [s_min, s_max].

    Log-exponent spacing is the only way to see structure that hugs the ray
    at an unknown rate: every power-law distance scale between the wedge
    edge (s = 1) and machine-level contact (s = s_max) gets coverage.
    s_min > 1 restricts to arcs strictly tangent to the ray, which blinds
    the grid to tangent-cone curvature while keeping all tangential
    structure in view.
    """
    s = np.linspace(s_min, s_max, n_exp)
    u_plus = wedge_slope * ts[:, None] ** s[None, :]
    zeros = np.zeros((ts.size, 1))
    # monotone increasing in u: -m*t .. -m*t^smax, 0, m*t^smax .. m*t
    return np.hstack([-u_plus, zeros, u_plus[:, ::-1]])


@dataclass
class SlopeProfile:
    ts: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    lo_u: np.ndarray
    hi_u: np.ndarray
    pos_inf: np.ndarray
    neg_inf: np.ndarray

    def hi_sequence(self) -> np.ndarray:
        seq = self.hi.copy()
        seq[self.pos_inf] = math.inf
        return seq

    def lo_sequence(self) -> np.ndarray:
        seq = self.lo.copy()
        seq[self.neg_inf] = -math.inf
        return seq


def slope_profile(
    chart: RayChart,
    wedge_slope: float = 1.0,
    schedule: SampleSchedule | None = None,
    *,
    n_exp: int = 48,
    s_max: float = 6.0,
    s_min: float = 1.0,
    refine: bool = True,
    golden_rel: float = 1e-10,
) -> SlopeProfile:
    """Per-slice extreme transverse slopes over the wedge |u| <= m*t.

    With refine=True each slice's grid extreme is polished by golden search
    between its grid neighbors; without it the raw grid extremes are kept
    (cheap mode for the direction sweep).
    """
    ts = (schedule or SampleSchedule()).values()
    U = _exponent_grid(ts, wedge_slope, n_exp, s_max, s_min)
    T = np.broadcast_to(ts[:, None], U.shape)
    G = chart.slope_grid(T, U)
    n = ts.size
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    lo_u = np.full(n, np.nan)
    hi_u = np.full(n, np.nan)
    pos_inf = np.zeros(n, dtype=bool)
    neg_inf = np.zeros(n, dtype=bool)
    for i in range(n):
        row = G[i]
        pos_inf[i] = bool(np.any(row == math.inf))
        neg_inf[i] = bool(np.any(row == -math.inf))
        finite = np.isfinite(row)
        if not finite.any():
            continue
        idx = np.where(finite)[0]
        j_hi = idx[np.argmax(row[idx])]
        j_lo = idx[np.argmin(row[idx])]
        hi[i], hi_u[i] = row[j_hi], U[i, j_hi]
        lo[i], lo_u[i] = row[j_lo], U[i, j_lo]
        if refine:
            t_i = float(ts[i])
            a = U[i, max(j_hi - 1, 0)]
            b = U[i, min(j_hi + 1, U.shape[1] - 1)]
            u_star, g_star = golden_max(
                lambda u: chart.slope_at(t_i, u), a, b, rel=golden_rel
            )
            if g_star > hi[i]:
                hi[i], hi_u[i] = g_star, u_star
            a = U[i, max(j_lo - 1, 0)]
            b = U[i, min(j_lo + 1, U.shape[1] - 1)]
            u_star, g_neg = golden_max(
                lambda u: -chart.slope_at(t_i, u), a, b, rel=golden_rel
            )
            if -g_neg < lo[i]:
                lo[i], lo_u[i] = -g_neg, u_star
            if hi[i] == math.inf:
                pos_inf[i] = True
            if lo[i] == -math.inf:
                neg_inf[i] = True
    return SlopeProfile(ts, lo, hi, lo_u, hi_u, pos_inf, neg_inf)


# ---------------------------------------------------------------------------
# zero tracks of the surface inside a wedge


@dataclass
class ZeroTrack:
    """A persistent curve f = 0 inside the wedge, located per slice.

    The per-slice positions are bisected to near machine precision, which
    is what makes offset probes at steep contact orders trustworthy.
    """

    ts: np.ndarray
    us: np.ndarray  # nan where the track was not seen
    side: int  # sign of u, 0 for the track pinned to the ray itself
    location_fit: PowerFit | None

    def present(self) -> np.ndarray:
        return ~np.isnan(self.us)

    def location_exponent(self) -> float | None:
        return None if self.location_fit is None else self.location_fit.exponent


def _bisect_value_zero(chart: RayChart, t: float, ua: float, ub: float,
                       iters: int = 80, rel: float = 1e-15) -> float:
    va = chart.value_at(t, ua)
    vb = chart.value_at(t, ub)
    if not (math.isfinite(va) and math.isfinite(vb)) or va * vb > 0:
        return math.nan
    for _ in range(iters):
        um = 0.5 * (ua + ub)
        vm = chart.value_at(t, um)
        if not math.isfinite(vm) or vm == 0.0:
            return um
        if (vm > 0) == (va > 0):
            ua, va = um, vm
        else:
            ub, vb = um, vm
        if abs(ub - ua) <= rel * max(abs(ua), abs(ub), 1e-30):
            break
    return 0.5 * (ua + ub)


def find_zero_tracks(
    chart: RayChart,
    wedge_slope: float = 1.0,
    schedule: SampleSchedule | None = None,
    *,
    n_exp: int = 48,
    s_max: float = 6.0,
    s_min: float = 1.0,
    match_tol: float = 0.3,
    min_presence: float = 0.5,
    bisect_iters: int = 80,
    bisect_rel: float = 1e-15,
) -> list[ZeroTrack]:
    """Locate and chain f = 0 crossings across slices.

    Crossings are matched between slices by their exponent coordinate
    log|u| / log t (and the sign of u), which is stable for tracks of the
    form u ~ c*t^s; chains seen in at least min_presence of the slices and
    still alive near the fine end are kept.
    """
    ts = (schedule or SampleSchedule()).values()
    U = _exponent_grid(ts, wedge_slope, n_exp, s_max, s_min)
    T = np.broadcast_to(ts[:, None], U.shape)
    V = chart.value_grid(T, U)

    chains: list[dict] = []  # {"sig": float|None, "side": int, "us": {i: u}}
    for i in range(ts.size):
        t_i = float(ts[i])
        row = V[i]
        roots: list[float] = []
        for j in range(row.size):
            if row[j] == 0.0:
                roots.append(float(U[i, j]))
        for j in range(row.size - 1):
            va, vb = row[j], row[j + 1]
            if math.isfinite(va) and math.isfinite(vb) and va * vb < 0:
                u0 = _bisect_value_zero(
                    chart, t_i, float(U[i, j]), float(U[i, j + 1]),
                    iters=bisect_iters, rel=bisect_rel,
                )
                if math.isfinite(u0):
                    roots.append(u0)
        log_t = math.log(t_i)
        taken = set()
        for u0 in sorted(roots):
            side = 0 if u0 == 0.0 else (1 if u0 > 0 else -1)
            sig = None if side == 0 else math.log(abs(u0)) / log_t
            best = None
            best_gap = match_tol
            for k, ch in enumerate(chains):
                if k in taken or ch["side"] != side:
                    continue
                if side == 0:
                    best = k
                    break
                gap = abs(ch["sig"] - sig)
                if gap <= best_gap:
                    best, best_gap = k, gap
            if best is None:
                chains.append({"sig": sig, "side": side, "us": {i: u0}})
                taken.add(len(chains) - 1)
            else:
                chains[best]["us"][i] = u0
                if side != 0:
                    chains[best]["sig"] = sig
                taken.add(best)

    tracks: list[ZeroTrack] = []
    need = max(3, int(math.ceil(min_presence * ts.size)))
    for ch in chains:
        us_map = ch["us"]
        if len(us_map) < need:
            continue
        if not any(i >= ts.size - 3 for i in us_map):
            continue
        us = np.full(ts.size, np.nan)
        for i, u0 in us_map.items():
            us[i] = u0
        fit = None
        if ch["side"] != 0:
            seen = ~np.isnan(us)
            try:
                fit = fit_power(ts[seen], np.abs(us[seen]))
            except NoisyFit:
                fit = None
        tracks.append(ZeroTrack(ts, us, ch["side"], fit))
    return tracks


def track_offset_evidence(
    chart: RayChart,
    track: ZeroTrack,
    *,
    offsets: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0),
    base_exponents: tuple[float, ...] = (1.5, 2.0, 3.0, 4.0),
    classify_kw: dict | None = None,
) -> list[tuple[str, Limit]]:
    """Slope limits along arcs hugging a zero track at steep contact orders.

    A vertical tangency contributes blowup values to the fiber only from
    inside a narrow horn around the track; probing at u = u_track +- t^s
    for s beyond the track's own exponent reaches into that horn.  The
    per-slice track positions are exact (bisected), so the probe offset is
    the only distance that matters.
    """
    kw = classify_kw or {}
    seen = track.present()
    ts = track.ts[seen]
    us = track.us[seen]
    if ts.size < 5:
        return []
    s_loc = track.location_exponent()
    exps = tuple(s_loc + d for d in offsets) if s_loc is not None else base_exponents
    out: list[tuple[str, Limit]] = []
    for s in exps:
        for sgn in (1.0, -1.0):
            probe_u = us + sgn * ts ** s
            _, g = chart.grids(ts, probe_u)
            label = f"track(side={track.side})[u{'+' if sgn > 0 else '-'}t^{s:.3g}]"
            try:
                out.append((label, classify_with_sentinels(ts, g, **kw)))
            except NoisyFit:
                continue
    return out


# ---------------------------------------------------------------------------
# fibers


ARC_S_GRID = (1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5)
ARC_C_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


class FiberClass(Enum):
    NOT_EXCEPTIONAL = "not_exceptional"
    EXCEPTIONAL = "exceptional"
    EXCEPTIONAL_FULL = "exceptional_full"


@dataclass
class RayFiber:
    """Interval hull of limiting transverse slopes over one ray."""

    ray: Ray
    lo: float
    hi: float
    contains_infinity: bool
    evidence: list[tuple[str, Limit]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def is_singleton(self, tol: float = 0.02) -> bool:
        return not self.contains_infinity and (self.hi - self.lo) <= tol

    @property
    def is_full(self) -> bool:
        return self.lo == -math.inf and self.hi == math.inf

    def classification(self, singleton_tol: float = 0.02) -> FiberClass:
        if self.is_full:
            return FiberClass.EXCEPTIONAL_FULL
        if self.is_singleton(singleton_tol):
            return FiberClass.NOT_EXCEPTIONAL
        return FiberClass.EXCEPTIONAL


def ray_fiber(
    f: Expr,
    ray: Ray,
    wedge_slope: float = 1.0,
    schedule: SampleSchedule | None = None,
    *,
    n_exp: int = 48,
    s_max: float = 6.0,
    classify_kw: dict | None = None,
) -> RayFiber:
    """Assemble the slope fiber over a ray from three evidence families:
    wedge-wide extreme sequences, a grid of power-law test arcs, and offset
    probes around every zero track inside the wedge."""
    kw = classify_kw or {}
    sched = schedule or SampleSchedule()
    chart = RayChart(f, ray)
    prof = slope_profile(chart, wedge_slope, sched, n_exp=n_exp, s_max=s_max)
    evidence: list[tuple[str, Limit]] = []
    notes: list[str] = []

    for name, seq in (("wedge_max", prof.hi_sequence()),
                      ("wedge_min", prof.lo_sequence())):
        try:
            evidence.append((name, classify_with_sentinels(prof.ts, seq, **kw)))
        except NoisyFit as err:
            notes.append(f"{name}: {err}")

    ts = sched.values()
    zeros = np.zeros_like(ts)
    _, g_axis = chart.grids(ts, zeros)
    try:
        evidence.append(("arc u=0", classify_with_sentinels(ts, g_axis, **kw)))
    except NoisyFit as err:
        notes.append(f"arc u=0: {err}")

    t0 = float(ts.max())
    for s in ARC_S_GRID:
        for c_abs in ARC_C_GRID:
            for sgn in (1.0, -1.0):
                c = sgn * c_abs
                if abs(c) * t0 ** (s - 1.0) > wedge_slope:
                    continue
                us = c * ts ** s
                _, g = chart.grids(ts, us)
                label = f"arc u={c:g}*t^{s:g}"
                try:
                    evidence.append((label, classify_with_sentinels(ts, g, **kw)))
                except NoisyFit:
                    continue

    for track in find_zero_tracks(chart, wedge_slope, sched,
                                  n_exp=n_exp, s_max=s_max):
        evidence.extend(track_offset_evidence(chart, track, classify_kw=kw))

    lo, hi = math.inf, -math.inf
    has_inf = False
    for _, lim in evidence:
        if lim.kind is LimitKind.INFINITE:
            has_inf = True
            if lim.sign > 0:
                hi = math.inf
            else:
                lo = -math.inf
        elif lim.kind is LimitKind.FINITE:
            lo = min(lo, lim.value)
            hi = max(hi, lim.value)
        else:
            lo = min(lo, 0.0)
            hi = max(hi, 0.0)
    if lo > hi:
        raise NoisyFit(f"no usable fiber evidence over {ray.describe()}")
    return RayFiber(ray, lo, hi, has_inf, evidence, notes)


# ---------------------------------------------------------------------------
# tangent cone flatness


@dataclass
class ConeCheck:
    is_plane: bool
    limit: Limit | None
    worst_angle: float
    notes: list[str] = field(default_factory=list)


def check_plane_cone(
    f: Expr,
    schedule: SampleSchedule | None = None,
    n_angles: int = 64,
    classify_kw: dict | None = None,
) -> ConeCheck:
    """Is the tangent cone the flat plane?  Yes iff max |f|/r on the circle
    of radius r dies as r -> 0."""
    kw = classify_kw or {}
    rs = (schedule or SampleSchedule()).values()
    thetas = TWO_PI * np.arange(n_angles) / n_angles
    X = rs[:, None] * np.cos(thetas)[None, :]
    Y = rs[:, None] * np.sin(thetas)[None, :]
    V, _, _ = eval_grid(f, X, Y)
    with np.errstate(all="ignore"):
        ratios = np.abs(V) / rs[:, None]
    notes: list[str] = []
    worst = np.full(rs.size, np.nan)
    worst_angle = 0.0
    for i in range(rs.size):
        row = ratios[i]
        finite = np.isfinite(row)
        if not finite.any():
            continue
        worst[i] = np.max(row[finite])
    usable = ~np.isnan(worst)
    if int(usable.sum()) >= 5:
        j = int(np.argmax(np.where(np.isfinite(ratios[-1]), ratios[-1], -np.inf)))
        worst_angle = float(thetas[j])
        try:
            lim = classify_samples(rs[usable], worst[usable], **kw)
            return ConeCheck(lim.kind is LimitKind.ZERO, lim, worst_angle, notes)
        except NoisyFit as err:
            notes.append(f"radial profile not a clean power law: {err}")
            return ConeCheck(False, None, worst_angle, notes)
    notes.append("surface undefined on almost all sampled circles")
    return ConeCheck(False, None, worst_angle, notes)


# ---------------------------------------------------------------------------
# direction sweep


def _ray_width_score(
    f: Expr,
    angle: float,
    *,
    wedge_slope: float = 0.25,
    schedule: SampleSchedule | None = None,
    n_exp: int = 16,
    s_max: float = 6.0,
    s_min: float = 1.0,
    width_cap: float = 1e6,
    refine: bool = True,
    golden_rel: float = 1e-3,
    classify_kw: dict | None = None,
) -> float:
    """Limiting width of the transverse slope range over a thin wedge.

    Persistent zero tracks are probed at steep offsets first: a track of
    vertical tangencies caps the score outright, because the sample grid
    can stay outside the blowup horn forever (the slopes it sees next to
    such a track may even decay).  A smooth transversal zero of f leaves
    the probes bounded and contributes nothing.
    """
    kw = classify_kw or {}
    sched = schedule or SampleSchedule(0.1, 0.7, 10)
    chart = RayChart(f, ray_at(angle))

    for track in find_zero_tracks(chart, wedge_slope, sched, n_exp=n_exp,
                                  s_max=s_max, s_min=s_min,
                                  bisect_iters=48, bisect_rel=1e-10):
        probes = track_offset_evidence(
            chart, track, offsets=(1.0, 1.5, 2.0), classify_kw=kw
        )
        if any(lim.kind is LimitKind.INFINITE for _, lim in probes):
            return width_cap

    prof = slope_profile(
        chart, wedge_slope, sched,
        n_exp=n_exp, s_max=s_max, s_min=s_min,
        refine=refine, golden_rel=golden_rel,
    )
    with np.errstate(invalid="ignore"):
        widths = prof.hi_sequence() - prof.lo_sequence()
    try:
        lim = classify_with_sentinels(prof.ts, widths, **kw)
    except NoisyFit:
        tail = widths[-6:]
        tail = tail[np.isfinite(tail)]
        return min(float(tail.max()) if tail.size else 0.0, width_cap)
    if lim.kind is LimitKind.ZERO:
        return 0.0
    if lim.kind is LimitKind.INFINITE:
        return width_cap
    return min(max(lim.value, 0.0), width_cap)


def _circular_runs(mask: np.ndarray) -> list[list[int]]:
    """Maximal runs of True in circular index order."""
    n = mask.size
    if mask.all():
        return [list(range(n))]
    if not mask.any():
        return []
    runs = []
    idx = np.where(mask)[0]
    current = [int(idx[0])]
    for k in idx[1:]:
        if k == current[-1] + 1:
            current.append(int(k))
        else:
            runs.append(current)
            current = [int(k)]
    runs.append(current)
    # join a run ending at n-1 with one starting at 0
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == n - 1:
        runs[0] = runs.pop() + runs[0]
    return runs


def _circular_close(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary closing on a circular mask: bridge gaps up to 2*radius wide.

    Classification flicker at a candidate region's transition zone must not
    split one geometric feature into several components.
    """
    dil = mask.copy()
    for k in range(1, radius + 1):
        dil |= np.roll(mask, k) | np.roll(mask, -k)
    out = dil.copy()
    for k in range(1, radius + 1):
        out &= np.roll(dil, k) & np.roll(dil, -k)
    return out | mask


@dataclass
class SweepResult:
    fibers: list[RayFiber]
    examined: list[RayFiber]
    angles: np.ndarray
    scores: np.ndarray
    notes: list[str] = field(default_factory=list)


def sweep_exceptional_rays(
    f: Expr,
    *,
    n_angles: int = 360,
    scan_wedge_slope: float = 0.25,
    scan_schedule: SampleSchedule | None = None,
    scan_n_exp: int = 16,
    fiber_wedge_slope: float = 1.0,
    fiber_schedule: SampleSchedule | None = None,
    width_floor: float = 0.02,
    width_cap: float = 1e6,
    plateau_frac: float = 0.99,
    edge_tol: float = 1e-4,
    snap_tol: float = 0.02,
    singleton_width: float = 0.02,
    classify_kw: dict | None = None,
) -> SweepResult:
    """Find all isolated exceptional rays of the surface.

    Scores every direction by its limiting slope-range width, groups the
    directions that clear the floor into circular components, and within
    each component isolates every plateau at plateau_frac of the component
    maximum.  Plateau edges are sharpened by bisection and the midpoint is
    the candidate ray; candidates get full fibers and only non-singleton
    fibers survive.

    Scoring runs in one of two regimes.  A genuinely exceptional ray keeps
    its structure on arcs strictly tangent to it, while a curved tangent
    cone inflates the wide-wedge width in every direction at once and is
    invisible tangentially.  A cheap wide-wedge grid pass collects rough
    candidates; if any of them scores above the floor on tangential-only
    arcs, plateaus are taken in the tangential score (which decays off the
    true ray and cannot be fooled by cone curvature).  Otherwise plateaus
    are taken in the refined wide score and ties are broken toward
    coordinate axes.
    """
    kw = classify_kw or {}
    cache: dict[tuple[float, bool, bool], float] = {}

    def score_at(theta: float, refined: bool, tangential: bool) -> float:
        key = (theta, refined, tangential)
        if key not in cache:
            cache[key] = _ray_width_score(
                f, theta,
                wedge_slope=scan_wedge_slope, schedule=scan_schedule,
                n_exp=scan_n_exp, s_min=1.3 if tangential else 1.0,
                width_cap=width_cap, refine=refined, classify_kw=kw,
            )
        return cache[key]

    step = TWO_PI / n_angles
    angles = step * np.arange(n_angles)
    notes: list[str] = []
    raw = np.array([score_at(float(th), False, False) for th in angles])
    rough = _circular_close(raw > width_floor, 2)
    if not rough.any():
        return SweepResult([], [], angles, raw, notes)

    tan = np.zeros(n_angles)
    for i in np.where(rough)[0]:
        tan[i] = score_at(float(angles[i]), True, True)
    tangential_mode = bool((tan > width_floor).any())
    if tangential_mode:
        scores = tan
    else:
        scores = raw.copy()
        for i in np.where(rough)[0]:
            scores[i] = score_at(float(angles[i]), True, False)
    cand = _circular_close(scores > width_floor, 2)
    if not cand.any():
        return SweepResult([], [], angles, scores, notes)

    def near_axis(theta: float) -> bool:
        return any(
            min(abs(theta - ax), TWO_PI - abs(theta - ax)) <= snap_tol
            for ax in AXIS_ANGLES.values()
        )

    ray_angles: list[float] = []
    for comp in _circular_runs(cand):
        comp_scores = scores[comp]
        thr = plateau_frac * float(comp_scores.max())
        plateau = np.zeros(n_angles, dtype=bool)
        plateau[[i for i in comp if scores[i] >= thr]] = True
        plateau = _circular_close(plateau, 2)
        midpoints: list[float] = []
        for run in _circular_runs(plateau):
            if len(run) == n_angles:
                notes.append(
                    "isotropic exceptional set: every direction scores alike; "
                    "reporting a representative ray"
                )
                midpoints.append(0.0)
                continue
            # unwrap the run into increasing angles
            base = angles[run[0]]
            unwrapped = [base + ((angles[i] - base) % TWO_PI) for i in run]
            left_in, right_in = unwrapped[0], unwrapped[-1]
            left_out, right_out = left_in - step, right_in + step

            def edge(inside: float, outside: float) -> float:
                a, b = inside, outside
                while abs(b - a) > edge_tol:
                    mid = 0.5 * (a + b)
                    if score_at(mid % TWO_PI, True, tangential_mode) >= thr:
                        a = mid
                    else:
                        b = mid
                return 0.5 * (a + b)

            left = edge(left_in, left_out)
            right = edge(right_in, right_out)
            midpoints.append(0.5 * (left + right) % TWO_PI)

        if len(midpoints) <= 1 or tangential_mode:
            # distinct tangential plateaus in one candidate arc are
            # distinct rays; no arbitration needed
            ray_angles.extend(midpoints)
            continue
        # Tied wide-score plateaus with no tangential structure anywhere:
        # cone curvature produces exactly equal peaks in symmetric
        # families, so the width cannot rank them.  Prefer coordinate
        # axes, the normal position for an isolated tangent line.
        kept = [th for th in midpoints if near_axis(th)]
        if kept:
            notes.append(
                f"{len(midpoints)} tied plateaus with no tangential "
                "structure (cone curvature); kept the axis rays"
            )
        else:
            kept = midpoints
            notes.append(
                f"{len(midpoints)} tied plateaus with no tangential "
                "structure and no axis among them; reporting all"
            )
        ray_angles.extend(kept)

    # dedupe (plateaus from adjacent components can refine to the same ray)
    unique: list[float] = []
    for theta in sorted(ray_angles):
        if all(
            min(abs(theta - u), TWO_PI - abs(theta - u)) > 1e-3 for u in unique
        ):
            unique.append(theta)

    examined: list[RayFiber] = []
    for theta in unique:
        ray = ray_at(theta, snap_tol)
        try:
            examined.append(
                ray_fiber(
                    f, ray, fiber_wedge_slope, fiber_schedule, classify_kw=kw
                )
            )
        except NoisyFit as err:
            notes.append(f"fiber over {ray.describe()} unusable: {err}")
    fibers = [fb for fb in examined if not fb.is_singleton(singleton_width)]
    return SweepResult(fibers, examined, angles, scores, notes)
