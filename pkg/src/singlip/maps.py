"""Explicit bilipschitz moves between a graph surface and its linearizations.

The basic device is a vertical squeeze: interpolate f linearly in x
between two boundary arcs, wrap both graphs in a shell pair fT / fB, and
slide points piecewise linearly in z so the linearized graph lands on
the surface.  A monotone wall with unbounded slope gets the same
treatment inside a rotated frame where the patch is the graph of a
lipschitz function.  Nothing here is proved; distortion is sampled.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .arcs import SampleSchedule, aitken_limit, fit_power
from .exprs import eval_grid


class DegenerateGap(RuntimeError):
    """Boundary arcs coincide (or cross) at a requested slice."""


class NotMonotone(RuntimeError):
    """Transverse slope changes sign where a monotone wall was assumed."""


class HypothesisFailed(RuntimeError):
    """Exponent precondition of the flank-splitting composite is violated.

    Returned by assemble_case_iv rather than raised: the failure is a
    legitimate analysis outcome, not a usage error."""


def _values(f, X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if callable(f):
        return np.asarray(f(X, Y), dtype=float)
    V, _, _ = eval_grid(f, X, Y)
    return V


def _values_and_slope(f, X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if callable(f):
        V = _values(f, X, Y)
        h = 1e-7 * np.maximum(np.abs(X), 1e-3)
        DX = (_values(f, X + h, Y) - _values(f, X - h, Y)) / (2.0 * h)
        return V, DX
    V, DX, _ = eval_grid(f, X, Y)
    return V, DX


def _arc_at(arc, y):
    y = np.asarray(y, dtype=float)
    return np.broadcast_to(np.asarray(arc(y), dtype=float), y.shape)


@dataclass(frozen=True)
class StripRegion:
    """Arc-bounded chart strip alpha(y) <= x <= beta(y) over a y window."""

    alpha: Callable
    beta: Callable
    y_lo: float
    y_hi: float
    label: str = ""

    def __post_init__(self):
        if not (0.0 < self.y_lo < self.y_hi):
            raise ValueError("strip needs 0 < y_lo < y_hi")

    def edges(self, y):
        return _arc_at(self.alpha, y), _arc_at(self.beta, y)

    def width(self, y):
        a, b = self.edges(y)
        return b - a

    def grid(self, ny: int, nx: int):
        ys = np.linspace(self.y_lo, self.y_hi, ny)
        a, b = self.edges(ys)
        t = np.linspace(0.0, 1.0, nx)
        X = a[:, None] + t[None, :] * (b - a)[:, None]
        Y = np.broadcast_to(ys[:, None], X.shape)
        return X, Y


# ---------------------------------------------------------------------------
# linearization and the vertical squeeze map


@dataclass(frozen=True)
class Linearization:
    """Per-slice linear interpolant of the surface between two arcs.

    L(x, y) = (1 - w) f(alpha(y), y) + w f(beta(y), y) with the
    reparametrization weight w = (x - alpha) / (beta - alpha), so L
    agrees with f on both arcs by construction."""

    surface: object
    alpha: Callable
    beta: Callable

    def slices(self, y):
        """Per-slice interpolation data plus a validity mask.

        Slices where the arcs coincide or cross get good=False instead
        of an error, so maps can degrade to the identity there; direct L
        queries stay strict via _ends."""
        y = np.asarray(y, dtype=float)
        a = _arc_at(self.alpha, y)
        b = _arc_at(self.beta, y)
        gap = b - a
        good = np.isfinite(gap) & (gap >= 1e-13)
        fa = _values(self.surface, a, y)
        fb = _values(self.surface, b, y)
        return a, gap, fa, fb, good

    def _ends(self, y):
        a, gap, fa, fb, good = self.slices(y)
        if not np.all(good):
            worst = float(np.nanmin(gap))
            raise DegenerateGap(
                f"arc gap {worst:.3e} below 1e-13 at a requested slice")
        return a, gap, fa, fb

    def weight(self, x, y):
        a, gap, _, _ = self._ends(y)
        return (np.asarray(x, dtype=float) - a) / gap

    def __call__(self, x, y):
        a, gap, fa, fb = self._ends(y)
        w = (np.asarray(x, dtype=float) - a) / gap
        return (1.0 - w) * fa + w * fb

    def slope(self, y):
        """Transverse slope of the interpolant, constant per slice."""
        _, gap, fa, fb = self._ends(y)
        return (fb - fa) / gap


def linearize(s, alpha, beta) -> Linearization:
    return Linearization(s, alpha, beta)


@dataclass(frozen=True)
class Squeeze:
    """Shell pair around f and L: fT = max + c|f-L|, fB = min - c|f-L|."""

    c: float
    surface: object
    lin: Linearization

    def shells(self, x, y):
        f = _values(self.surface, x, y)
        L = self.lin(x, y)
        d = np.abs(f - L)
        top = np.maximum(f, L) + self.c * d
        bot = np.minimum(f, L) - self.c * d
        return f, L, bot, top

    def fT(self, x, y):
        return self.shells(x, y)[3]

    def fB(self, x, y):
        return self.shells(x, y)[2]


@dataclass(frozen=True)
class VerticalMap:
    """H(x, y, z) = (x, y, h(x, y, z)) carrying the linearized graph to
    the surface: [fB, L] goes linearly onto [fB, f] and [L, fT] onto
    [f, fT], the identity elsewhere.  Slopes in z are c/(c+1) and
    (c+1)/c, so invertibility never degrades as the shells pinch."""

    squeeze: Squeeze

    @property
    def lin(self) -> Linearization:
        return self.squeeze.lin

    def _shells(self, x, y):
        """Tolerant shell data: degenerate slices become identity rows."""
        x = np.asarray(x, dtype=float)
        a, gap, fa, fb, good = self.lin.slices(y)
        w = (x - a) / np.where(good, gap, 1.0)
        L = (1.0 - w) * fa + w * fb
        f = _values(self.squeeze.surface, x, np.asarray(y, dtype=float))
        d = np.abs(f - L)
        c = self.squeeze.c
        top = np.maximum(f, L) + c * d
        bot = np.minimum(f, L) - c * d
        return f, L, bot, top, good

    def h(self, x, y, z):
        f, L, bot, top, good = self._shells(x, y)
        z = np.array(np.broadcast_arrays(np.asarray(z, dtype=float), f)[0],
                     dtype=float)
        out = z.copy()
        act = good & (z > bot) & (z < top) & (top > bot) & np.isfinite(f + L)
        low = act & (z <= L)
        high = act & (z > L)
        out[low] = bot[low] + (z[low] - bot[low]) * (
            (f[low] - bot[low]) / (L[low] - bot[low]))
        out[high] = f[high] + (z[high] - L[high]) * (
            (top[high] - f[high]) / (top[high] - L[high]))
        return out

    def h_inverse(self, x, y, z):
        f, L, bot, top, good = self._shells(x, y)
        z = np.array(np.broadcast_arrays(np.asarray(z, dtype=float), f)[0],
                     dtype=float)
        out = z.copy()
        act = good & (z > bot) & (z < top) & (top > bot) & np.isfinite(f + L)
        low = act & (z <= f)
        high = act & (z > f)
        out[low] = bot[low] + (z[low] - bot[low]) * (
            (L[low] - bot[low]) / (f[low] - bot[low]))
        out[high] = L[high] + (z[high] - f[high]) * (
            (top[high] - L[high]) / (top[high] - f[high]))
        return out

    def support(self, x, y, z):
        _, _, bot, top, good = self._shells(x, y)
        z = np.asarray(z, dtype=float)
        return good & (z > bot) & (z < top) & (top > bot)

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[:, 2] = self.h(pts[:, 0], pts[:, 1], pts[:, 2])
        return out

    def apply_inverse(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        out[:, 2] = self.h_inverse(pts[:, 0], pts[:, 1], pts[:, 2])
        return out


def build_vertical_map(s, lin: Linearization, c: float) -> VerticalMap:
    if not (c > 0.0):
        raise ValueError("squeeze constant c must be positive")
    return VerticalMap(Squeeze(c, s, lin))


# ---------------------------------------------------------------------------
# rotated charts for monotone walls


@dataclass
class RotatedPatch:
    """A monotone strip re-graphed over the plane of a slanted line.

    Rotating the xz-plane by theta = atan(ell_slope) about the y-axis
    sends the strip to the graph of w = ftilde(u, v); for a wall whose
    slope stays in [0, inf] the rotated difference quotients are bounded,
    and `lipschitz` records whether sampling agrees (the finest max
    quotient did not keep growing under refinement)."""

    surface: object
    strip: StripRegion
    theta: float
    max_slope: float
    coarse_slope: float
    lipschitz: bool
    notes: list[str] = field(default_factory=list)

    def to_rotated(self, pts):
        pts = np.asarray(pts, dtype=float)
        ct, st = math.cos(self.theta), math.sin(self.theta)
        u = pts[:, 0] * ct + pts[:, 2] * st
        w = -pts[:, 0] * st + pts[:, 2] * ct
        return np.stack([u, pts[:, 1], w], axis=1)

    def from_rotated(self, pts):
        pts = np.asarray(pts, dtype=float)
        ct, st = math.cos(self.theta), math.sin(self.theta)
        x = pts[:, 0] * ct - pts[:, 2] * st
        z = pts[:, 0] * st + pts[:, 2] * ct
        return np.stack([x, pts[:, 1], z], axis=1)

    def arc_image(self, arc, y):
        """(u, w) coordinates of the surface curve over a chart arc."""
        y = np.asarray(y, dtype=float)
        x = _arc_at(arc, y)
        z = _values(self.surface, x, y)
        ct, st = math.cos(self.theta), math.sin(self.theta)
        return x * ct + z * st, -x * st + z * ct

    def graph_height(self, u, v):
        """ftilde(u, v) by bisection along the rotated vertical.

        Bisect in w, not x: phi(w) = z(w) - f(x(w)) has derivative
        cos(theta) + f_x sin(theta), strictly positive for a monotone
        wall of either sign, so the answer carries no error
        amplification even where f_x is infinite.  The arc images only
        suggest a bracket (the rotated graph may peak between them);
        sign checks expand it until the root is pinned."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        ct, st = math.cos(self.theta), math.sin(self.theta)
        xa, xb = self.strip.edges(v)
        fa = _values(self.surface, xa, v)
        fb = _values(self.surface, xb, v)
        wa = -xa * st + fa * ct
        wb = -xb * st + fb * ct
        lo = np.minimum(wa, wb)
        hi = np.maximum(wa, wb)
        col = np.abs((xb - xa) * ct + (fb - fa) * st)
        pad = 0.05 * (hi - lo + col) + 1e-12
        lo = lo - pad
        hi = hi + pad

        def above(w):
            x = u * ct - w * st
            z = u * st + w * ct
            return z > _values(self.surface, x, v)

        for _ in range(12):
            span = hi - lo
            lo = np.where(above(lo), lo - span, lo)
            hi = np.where(above(hi), hi, hi + span)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            high = above(mid)
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
        return 0.5 * (lo + hi)


def rotate_chart(s, strip: StripRegion, ell_slope: float) -> RotatedPatch:
    """Express a monotone strip as a graph over the slanted plane.

    ell_slope is the slope of the projection line in the xz-plane;
    increasing walls need it positive, decreasing walls negative."""
    if ell_slope == 0.0:
        raise ValueError("ell slope must be nonzero")
    theta = math.atan(ell_slope)

    X, Y = strip.grid(25, 65)
    _, DX = _values_and_slope(s, X, Y)
    finite = np.isfinite(DX)
    scale = 1.0 + (np.max(np.abs(DX[finite])) if finite.any() else 0.0)
    has_pos = bool(np.any(DX[finite] > 1e-9 * scale))
    has_neg = bool(np.any(DX[finite] < -1e-9 * scale))
    if has_pos and has_neg:
        raise NotMonotone("transverse slope changes sign on the strip")
    if has_neg and ell_slope > 0.0:
        raise NotMonotone("decreasing wall needs a negative ell slope")
    if has_pos and ell_slope < 0.0:
        raise NotMonotone("increasing wall needs a positive ell slope")

    def max_quotient(ny, nx):
        Xg, Yg = strip.grid(ny, nx)
        Z = _values(s, Xg, Yg)
        ct, st = math.cos(theta), math.sin(theta)
        U = Xg * ct + Z * st
        W = -Xg * st + Z * ct
        worst = 0.0
        for du, dv, dw in (
                (np.diff(U, axis=1), 0.0, np.diff(W, axis=1)),
                (np.diff(U, axis=0), np.diff(Yg, axis=0), np.diff(W, axis=0))):
            ok = np.isfinite(du) & np.isfinite(dw)
            if np.any(ok):
                q = np.abs(dw[ok]) / np.hypot(du, dv)[ok]
                worst = max(worst, float(np.max(q)))
        return worst

    coarse = max_quotient(25, 65)
    fine = max_quotient(49, 129)
    lipschitz = math.isfinite(fine) and fine <= 1.4 * coarse + 1e-6
    notes = [f"rotated quotients: coarse {coarse:.4g}, fine {fine:.4g}"]
    return RotatedPatch(s, strip, theta, fine, coarse, lipschitz, notes)


@dataclass(frozen=True)
class RotatedChart:
    """rotation o vertical squeeze o rotation^-1 over a monotone span.

    The squeeze happens in the rotated frame, against the linearization
    of ftilde between the span's two arc images, so the chart moves
    points along the slanted direction and stays bilipschitz even where
    f_x blows up."""

    patch: RotatedPatch
    c: float

    def _taper(self, v):
        """Ramp weight: 0 on the strip, 1 past 1.3x its top.

        The strip is the construction window, not the action window.
        Below y_hi the chart does the full squeeze; just above it the
        squeeze target slides back to the linearization, so the chart
        rejoins the identity continuously instead of tearing at a
        horizontal cut.  All branch slopes stay inside [c/(c+1), (c+1)/c]
        through the ramp, so the taper never worsens the constants."""
        y1 = self.patch.strip.y_hi
        return np.clip((v - y1) / (0.3 * y1), 0.0, 1.0)

    def _column(self, u, v):
        """Breakpoint data over a rotated column; degenerate slices are
        marked outside so the chart acts as the identity there."""
        uL, wL = self.patch.arc_image(self.patch.strip.alpha, v)
        uR, wR = self.patch.arc_image(self.patch.strip.beta, v)
        gap = uR - uL
        good = np.isfinite(gap) & (gap >= 1e-13)
        t = (u - uL) / np.where(good, gap, 1.0)
        Lt = (1.0 - t) * wL + t * wR
        ft = self.patch.graph_height(u, v)
        s = self._taper(v)
        mid = (1.0 - s) * ft + s * Lt
        d = np.abs(ft - Lt)
        top = np.maximum(ft, Lt) + self.c * d
        bot = np.minimum(ft, Lt) - self.c * d
        inside = good & (t > 0.0) & (t < 1.0) & (s < 1.0)
        return ft, Lt, mid, bot, top, inside

    def _move(self, pts, forward):
        pts = np.asarray(pts, dtype=float)
        out = pts.copy()
        rot = self.patch.to_rotated(pts)
        u, v, w = rot[:, 0], rot[:, 1], rot[:, 2]
        cand = (v > 0.0) & np.isfinite(u + w)
        if not np.any(cand):
            return out
        ft, Lt, mid, bot, top, inside = self._column(u[cand], v[cand])
        act = inside & (w[cand] > bot) & (w[cand] < top) & (top > bot)
        if not np.any(act):
            return out
        zc = w[cand][act]
        L_, m_, b_, t_ = Lt[act], mid[act], bot[act], top[act]
        if forward:
            lowside = zc <= L_
            moved = np.where(
                lowside,
                b_ + (zc - b_) * ((m_ - b_) / np.where(lowside, L_ - b_, 1.0)),
                m_ + (zc - L_) * ((t_ - m_) / np.where(lowside, 1.0, t_ - L_)))
        else:
            lowside = zc <= m_
            moved = np.where(
                lowside,
                b_ + (zc - b_) * ((L_ - b_) / np.where(lowside, m_ - b_, 1.0)),
                L_ + (zc - m_) * ((t_ - L_) / np.where(lowside, 1.0, t_ - m_)))
        idx = np.flatnonzero(cand)[act]
        rows = np.stack([u[idx], v[idx], moved], axis=1)
        out[idx] = self.patch.from_rotated(rows)
        return out

    def apply(self, pts):
        return self._move(pts, forward=True)

    def apply_inverse(self, pts):
        return self._move(pts, forward=False)

    def support(self, pts):
        pts = np.asarray(pts, dtype=float)
        rot = self.patch.to_rotated(pts)
        u, v, w = rot[:, 0], rot[:, 1], rot[:, 2]
        mask = np.zeros(len(pts), dtype=bool)
        cand = (v > 0.0) & np.isfinite(u + w)
        if not np.any(cand):
            return mask
        _, _, _, bot, top, inside = self._column(u[cand], v[cand])
        mask[cand] = inside & (w[cand] > bot) & (w[cand] < top) & (top > bot)
        return mask


# ---------------------------------------------------------------------------
# bundles, the flank-splitting composite, and sampled distortion


@dataclass(frozen=True)
class DistortionEstimate:
    K_forward: float
    K_inverse: float
    n_pairs: int
    seed: int


@dataclass
class MapBundle:
    """Ordered charts applied as a composition; identity off all supports.

    Entries are (region, chart) where chart is a VerticalMap, a
    RotatedChart, or the string "identity" marking the untouched
    remainder of the wedge."""

    charts: list
    distortion: DistortionEstimate | None = None
    notes: list[str] = field(default_factory=list)

    def _chain(self, pts, forward):
        pts = np.asarray(pts, dtype=float)
        entries = self.charts if forward else self.charts[::-1]
        for _, chart in entries:
            if chart == "identity":
                continue
            pts = chart.apply(pts) if forward else chart.apply_inverse(pts)
        return pts

    def apply(self, pts):
        return self._chain(pts, forward=True)

    def apply_inverse(self, pts):
        return self._chain(pts, forward=False)


def eval_map(m, p):
    """Image of one point under a map object (tuple in, tuple out)."""
    out = m.apply(np.asarray([p], dtype=float))
    return tuple(float(c) for c in out[0])


def eval_inverse(m, p):
    out = m.apply_inverse(np.asarray([p], dtype=float))
    return tuple(float(c) for c in out[0])


def _fit_size_exponent(ys, sizes):
    """Asymptotic growth exponent of a positive size family.

    Slowly decaying unit factors (1 - y^{1/4} and friends) bend the
    log-log line well into any practical window, so a straight fit is
    biased; Aitken acceleration of the local slopes converges instead."""
    ys = np.asarray(ys, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    keep = np.isfinite(sizes) & (sizes > 0.0)
    ys, sizes = ys[keep], sizes[keep]
    if ys.size >= 5:
        local = (np.diff(np.log(sizes)) / np.diff(np.log(ys)))
        return aitken_limit(local)
    return fit_power(ys, sizes).exponent


def _span_exponents(s, region: StripRegion, ys):
    """Width and height growth exponents of a piece span."""
    widths = region.width(ys)
    omega = _fit_size_exponent(ys, widths)
    heights = np.empty(len(ys))
    slopes = np.empty(len(ys))
    for i, y in enumerate(ys):
        a, b = region.edges(np.asarray([y]))
        xs = np.linspace(a[0], b[0], 129)
        V, DX = _values_and_slope(s, xs, np.full_like(xs, y))
        ok = np.isfinite(V)
        heights[i] = np.max(V[ok]) - np.min(V[ok]) if ok.any() else np.nan
        okx = np.isfinite(DX)
        slopes[i] = np.max(np.abs(DX[okx])) if okx.any() else np.nan
    eta = _fit_size_exponent(ys, heights)
    return omega, eta, slopes


def _mid_arc(region: StripRegion):
    alpha, beta = region.alpha, region.beta
    return lambda y: 0.5 * (np.asarray(alpha(y), dtype=float)
                            + np.asarray(beta(y), dtype=float))


def assemble_case_iv(s, left: StripRegion, middle: StripRegion,
                     right: StripRegion, c: float = 0.5):
    """Flatten a fast piece between two flat flanks by splitting the flanks.

    The flanks are cut at their width midpoints and one rotated squeeze
    chart is built over the joined span, so its support pokes past the
    fast piece only into surrendered flank halves.  Needs the wall's
    height to shrink at least as fast as both flank widths; when that
    exponent test fails the HypothesisFailed is returned (not raised) so
    callers can report it as an analysis outcome."""
    ys = SampleSchedule(middle.y_hi, 0.6, 14).values()
    omega_l, _, slopes_l = _span_exponents(s, left, ys)
    omega_r, _, slopes_r = _span_exponents(s, right, ys)
    _, eta_mid, slopes_m = _span_exponents(s, middle, ys)

    for name, slopes in (("left", slopes_l), ("right", slopes_r)):
        worst = float(np.nanmax(slopes))
        if worst > 4.0:
            return HypothesisFailed(
                f"{name} flank is not lipschitz (|f_x| reaches {worst:.3g})")
    need = max(omega_l, omega_r)
    if eta_mid < need - 0.05:
        return HypothesisFailed(
            f"wall height exponent {eta_mid:.3f} below flank width "
            f"exponent {need:.3f}; linearization slope would blow up")

    X, Y = middle.grid(17, 65)
    _, DX = _values_and_slope(s, X, Y)
    finite = np.isfinite(DX)
    rising = float(np.nanmean(DX[finite] > 0.0)) if finite.any() else 1.0
    ell = 1.0 if rising >= 0.5 else -1.0

    span = StripRegion(_mid_arc(left), _mid_arc(right),
                       middle.y_lo, middle.y_hi, label="flank-split span")
    patch = rotate_chart(s, span, ell)
    chart = RotatedChart(patch, c)

    bundle = MapBundle(charts=[(span, chart), ("elsewhere", "identity")])
    bundle.notes.append(
        f"exponents: flanks ({omega_l:.3f}, {omega_r:.3f}), wall {eta_mid:.3f}")
    bundle.notes.append(f"ell slope {ell:+.0f}, c = {c:g}")
    _check_support_projection(bundle, chart, span, left, right, c)
    return bundle


def _check_support_projection(bundle, chart, span, left, right, c):
    """Support shell must project inside the flanked union (with margin)."""
    ys = np.linspace(span.y_lo, span.y_hi, 21)
    us = np.linspace(0.02, 0.98, 41)
    UL, WL = chart.patch.arc_image(span.alpha, ys)
    UR, WR = chart.patch.arc_image(span.beta, ys)
    U = UL[:, None] + us[None, :] * (UR - UL)[:, None]
    V = np.broadcast_to(ys[:, None], U.shape)
    ft, Lt, _, bot, top, _ = chart._column(U.ravel(), V.ravel())
    shell = np.concatenate([
        np.stack([U.ravel(), V.ravel(), bot], axis=1),
        np.stack([U.ravel(), V.ravel(), top], axis=1)])
    back = chart.patch.from_rotated(shell)
    x = back[:, 0]
    y = back[:, 1]
    a_span, b_span = span.edges(y)
    margin = 2.0 * c * (b_span - a_span)
    inside_margin = bool(np.all((x >= a_span - margin)
                                & (x <= b_span + margin)))
    a_out = _arc_at(left.alpha, y)
    b_out = _arc_at(right.beta, y)
    inside_union = bool(np.all((x >= a_out - 1e-12) & (x <= b_out + 1e-12)))
    bundle.notes.append(
        f"support projection within 2c margin: {inside_margin}")
    bundle.notes.append(
        f"support projection inside flanked union: {inside_union}")


def estimate_distortion(m, region: StripRegion, n_pairs: int = 10_000,
                        seed: int = 0) -> DistortionEstimate:
    """Sampled bilipschitz constants of a map over a chart strip.

    Points are drawn uniformly over the strip and a z shell padded well
    past the squeeze supports (so identity pairs anchor the ratios at 1).
    Half the budget goes to independent global pairs; the rest is spent
    in groups of five around random base points: three short axis pairs
    whose difference quotients assemble a one-sided Jacobian, then two
    more pairs aimed along that Jacobian's extreme singular directions.
    Every reported constant is still a max of genuine pair ratios; the
    aimed pairs just stop the max from creeping for thousands of draws
    while it waits for a random direction to line up with the worst
    stretch.  Each random quantity draws from its own counter-based
    stream spawned off the seed, and the z shell comes from a fixed
    probe grid, so a larger n_pairs extends the same pair set instead
    of reshuffling it: the estimate is nondecreasing in n_pairs."""
    if n_pairs < 1000:
        raise ValueError("need at least 1000 pairs for a distortion estimate")
    streams = [np.random.Generator(np.random.Philox(c))
               for c in np.random.SeedSequence(seed).spawn(7)]
    gy, gx, gz, by, bx, bz, br = streams
    n_glob = n_pairs // 2
    n_base = (n_pairs - n_glob) // 5

    def chart_surface(chart):
        if isinstance(chart, VerticalMap):
            return chart.squeeze.surface
        if isinstance(chart, RotatedChart):
            return chart.patch.surface
        return None

    surface = chart_surface(m)
    for _, chart in getattr(m, "charts", []):
        surface = surface or chart_surface(chart)
    grid_y = np.linspace(region.y_lo, region.y_hi, 64)
    ga, gb = region.edges(grid_y)
    if surface is not None:
        t = np.linspace(0.0, 1.0, 33)
        GX = ga[:, None] + t[None, :] * (gb - ga)[:, None]
        GY = np.broadcast_to(grid_y[:, None], GX.shape)
        z0 = _values(surface, GX, GY)
        lo = float(np.nanmin(z0))
        hi = float(np.nanmax(z0))
    else:
        lo, hi = -1.0, 1.0
    spread = max(hi - lo, 1e-3)
    scale = max(region.y_hi - region.y_lo, float(np.max(gb - ga)), spread)

    def draw(g_y, g_x, g_z, count):
        yv = g_y.uniform(region.y_lo, region.y_hi, size=count)
        av, bv = region.edges(yv)
        xv = av + g_x.uniform(0.0, 1.0, size=count) * (bv - av)
        zv = g_z.uniform(lo - 0.5 * spread, hi + 0.5 * spread, size=count)
        return np.stack([xv, yv, zv], axis=1)

    glob = draw(gy, gx, gz, 2 * n_glob)
    P, Q = glob[0::2], glob[1::2]
    B = draw(by, bx, bz, n_base)
    r = scale * 10.0 ** br.uniform(-6.0, -3.0, size=n_base)

    srcs = [np.linalg.norm(P - Q, axis=1)]
    imgs = [np.linalg.norm(m.apply(P) - m.apply(Q), axis=1)]
    H0 = m.apply(B)
    quots = []

    def probe(direction):
        # src is the realized separation, not the nominal radius, so an
        # identity map scores exactly 1
        Bq = B + r[:, None] * direction
        Hq = m.apply(Bq)
        srcs.append(np.linalg.norm(Bq - B, axis=1))
        imgs.append(np.linalg.norm(Hq - H0, axis=1))
        return (Hq - H0) / r[:, None]

    for k in range(3):
        quots.append(probe(np.eye(3)[k]))
    J = np.stack(quots, axis=2)
    J = np.where(np.isfinite(J), J, 0.0)
    Vh = np.linalg.svd(J)[2]
    probe(Vh[:, 0, :])
    probe(Vh[:, 2, :])
    src = np.concatenate(srcs)
    img = np.concatenate(imgs)
    keep = (src > 1e-12) & np.isfinite(img)
    src, img = src[keep], img[keep]
    k_fwd = float(np.max(img / src))
    k_inv = float(np.max(src / img))
    est = DistortionEstimate(k_fwd, k_inv, int(n_glob + 5 * n_base), seed)
    if isinstance(m, MapBundle):
        m.distortion = est
    return est
