"""Inner-metric probes on adaptively refined graph meshes.

A rectangle in (x, y) is sampled on a tensor grid, lifted to the surface
z = f(x, y) and connected 8-neighbor.  Grid columns are split in x
wherever the transverse slope crosses a threshold, so resolution piles
up along steep walls without blowing up the whole patch.  Shortest paths
in the edge graph, tightened by shortcut and relaxation passes against
the surface, estimate the inner distance from above; the regularity
probe fits the growth of d_i/d_o along a shrinking pair family and
turns the exponent into a verdict.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .arcs import PowerFit, SampleSchedule, fit_power
from .exprs import eval_grid, value_at


class Disconnected(RuntimeError):
    """No mesh path joins the requested endpoints."""


class RefinementBudgetExceeded(RuntimeError):
    """Probe geodesic still moving when the level cap was hit.

    The last mesh built is attached as `.mesh` so callers can still use
    the estimate it carries."""

    def __init__(self, message: str, mesh: "MeshPatch"):
        super().__init__(message)
        self.mesh = mesh


@dataclass(frozen=True)
class MeshRegion:
    """Axis-aligned chart rectangle, bounded away from the y = 0 line."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    label: str = ""

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError("empty mesh region")
        if self.y_lo <= 0.0 <= self.y_hi:
            raise ValueError("mesh region must stay off y = 0")

    def contains(self, x: float, y: float, slack: float = 1e-12) -> bool:
        return (self.x_lo - slack <= x <= self.x_hi + slack
                and self.y_lo - slack <= y <= self.y_hi + slack)


def _heights(f, X, Y):
    """Surface heights plus the transverse slope used for refinement marks.

    f is an expression, or any array-valued (X, Y) -> Z callable so the
    image surfaces of explicit maps can be probed with the same mesh."""
    if callable(f):
        Z = np.asarray(f(X, Y), dtype=float)
        GX = np.zeros_like(Z)
        if Z.shape[-1] >= 2:
            GX[..., 1:-1] = (Z[..., 2:] - Z[..., :-2]) / (X[..., 2:] - X[..., :-2])
            GX[..., 0] = (Z[..., 1] - Z[..., 0]) / (X[..., 1] - X[..., 0])
            GX[..., -1] = (Z[..., -1] - Z[..., -2]) / (X[..., -1] - X[..., -2])
        return Z, GX
    V, DX, _ = eval_grid(f, X, Y)
    return V, DX


def _height_at(f, x: float, y: float) -> float:
    if callable(f):
        return float(np.asarray(f(np.array([x]), np.array([y])), dtype=float)[0])
    return value_at(f, x, y)


@dataclass
class MeshPatch:
    """Tensor-grid surface mesh with 8-neighbor connectivity.

    Vertex iy * len(xs) + ix sits over (xs[ix], ys[iy]) with its exact
    surface height; vertices whose height failed to evaluate keep their
    row but carry no edges, and `usable` marks the live ones."""

    xs: np.ndarray
    ys: np.ndarray
    vertices: np.ndarray
    usable: np.ndarray
    graph: sparse.csr_matrix
    refinement_level: int
    region: MeshRegion
    notes: list[str] = field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def vertex_index(self, x: float, y: float) -> int:
        """Nearest usable vertex to a chart point."""
        if not bool(np.any(self.usable)):
            raise Disconnected("mesh has no usable vertices")
        d2 = (self.vertices[:, 0] - x) ** 2 + (self.vertices[:, 1] - y) ** 2
        return int(np.argmin(np.where(self.usable, d2, np.inf)))

    def connected(self) -> bool:
        _, labels = connected_components(self.graph, directed=False)
        live = labels[self.usable]
        return live.size == 0 or bool(np.all(live == live[0]))


def _stage_pairs(cols, n_rows, m):
    """8-neighbor index pairs for one refinement stage's column subset."""
    ids = np.arange(n_rows)[:, None] * m + np.asarray(cols)[None, :]
    hops = [
        (ids[:, :-1], ids[:, 1:]),
        (ids[:-1, :], ids[1:, :]),
        (ids[:-1, :-1], ids[1:, 1:]),
        (ids[:-1, 1:], ids[1:, :-1]),
    ]
    a = np.concatenate([p.ravel() for p, _ in hops])
    b = np.concatenate([q.ravel() for _, q in hops])
    return a, b


def _assemble(f, stages, ys, region, notes=None) -> MeshPatch:
    """Mesh over the finest stage, keeping every coarser stage's edges.

    Splitting a column removes its long diagonal hops from the tensor
    graph, which can make the graph metric worse even as the vertex set
    grows.  Nesting the stages keeps refinement monotone: every path
    available at a coarse level survives to the fine one."""
    xs = stages[-1]
    X, Y = np.meshgrid(xs, ys)
    Z, _ = _heights(f, X, Y)
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    ok = np.isfinite(pts[:, 2])
    n, m = Y.shape
    parts = [_stage_pairs(np.searchsorted(xs, s), n, m) for s in stages]
    a = np.concatenate([p for p, _ in parts])
    b = np.concatenate([q for _, q in parts])
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    key = np.unique(lo.astype(np.int64) * (n * m) + hi)
    a = key // (n * m)
    b = key % (n * m)
    keep = ok[a] & ok[b]
    a, b = a[keep], b[keep]
    w = np.linalg.norm(pts[a] - pts[b], axis=1)
    graph = sparse.csr_matrix((w, (a, b)), shape=(n * m, n * m))
    return MeshPatch(xs=np.asarray(xs, float), ys=np.asarray(ys, float),
                     vertices=pts, usable=ok, graph=graph,
                     refinement_level=len(stages) - 1, region=region,
                     notes=list(notes or []))


def _marked_intervals(f, xs, ys, refine_slope):
    """Indices of x intervals whose worst |f_x| crosses the threshold."""
    mids = 0.5 * (xs[:-1] + xs[1:])
    X, Y = np.meshgrid(mids, ys)
    _, GX = _heights(f, X, Y)
    bad = ~np.isfinite(GX) | (np.abs(GX) > refine_slope)
    marked = np.nonzero(np.any(bad, axis=0))[0]
    widths = xs[marked + 1] - xs[marked]
    # stop splitting intervals already at float resolution
    return marked[widths > 1e-9 * (xs[-1] - xs[0])]


def _split_columns(xs, marked):
    mids = 0.5 * (xs[marked] + xs[marked + 1])
    return np.unique(np.concatenate([xs, mids]))


def _dedupe(vals, span):
    vals = np.sort(np.asarray(vals, dtype=float))
    keep = np.concatenate([[True], np.diff(vals) > 1e-12 * span])
    return vals[keep]


def mesh_at_level(f, region: MeshRegion, level: int, *,
                  nx: int = 33, ny: int = 17, refine_slope: float = 2.0,
                  extra_xs=(), extra_ys=()) -> MeshPatch:
    """Mesh after exactly `level` refinement sweeps, no convergence test."""
    xs = _dedupe(np.concatenate([np.linspace(region.x_lo, region.x_hi, nx),
                                 np.asarray(extra_xs, float)]),
                 region.x_hi - region.x_lo)
    ys = _dedupe(np.concatenate([np.linspace(region.y_lo, region.y_hi, ny),
                                 np.asarray(extra_ys, float)]),
                 region.y_hi - region.y_lo)
    notes = []
    stages = [xs]
    for k in range(level):
        marked = _marked_intervals(f, stages[-1], ys, refine_slope)
        if marked.size == 0:
            notes.append(f"slope threshold never crossed past level {k}")
            break
        stages.append(_split_columns(stages[-1], marked))
    return _assemble(f, stages, ys, region, notes)


def build_mesh(f, region: MeshRegion, *,
               nx: int = 33, ny: int = 17, refine_slope: float = 2.0,
               max_level: int = 10, probe=None, probe_tol: float = 0.01,
               extra_xs=(), extra_ys=()) -> MeshPatch:
    """Refine until a probe geodesic settles.

    The probe pair defaults to opposite corners of the region.  Each
    sweep splits every x interval where |f_x| crosses the threshold; the
    mesh is accepted once the probe's graph distance moves by less than
    probe_tol relative between consecutive levels, or nothing is left to
    split."""
    if probe is None:
        probe = ((region.x_lo, region.y_lo), (region.x_hi, region.y_hi))
    for x, y in probe:
        if not region.contains(x, y):
            raise ValueError(f"probe point ({x}, {y}) outside the mesh region")
    xs = _dedupe(np.concatenate([np.linspace(region.x_lo, region.x_hi, nx),
                                 np.asarray(extra_xs, float)]),
                 region.x_hi - region.x_lo)
    ys = _dedupe(np.concatenate([np.linspace(region.y_lo, region.y_hi, ny),
                                 np.asarray(extra_ys, float)]),
                 region.y_hi - region.y_lo)
    prev = None
    patch = None
    stages = [xs]
    for level in range(max_level + 1):
        patch = _assemble(f, stages, ys, region)
        d = _graph_distance(patch, probe[0], probe[1])
        if prev is not None and abs(d - prev) <= probe_tol * prev:
            patch.notes.append(f"probe geodesic settled at level {level}")
            return patch
        prev = d
        marked = _marked_intervals(f, stages[-1], ys, refine_slope)
        if marked.size == 0:
            patch.notes.append("no interval above the slope threshold")
            return patch
        stages.append(_split_columns(stages[-1], marked))
    raise RefinementBudgetExceeded(
        f"probe geodesic still moving after {max_level} refinement levels", patch)


# ---------------------------------------------------------------------------
# shortest paths and straightening


def graph_distances(mesh: MeshPatch, indices) -> np.ndarray:
    return dijkstra(mesh.graph, directed=False, indices=indices)


def _graph_distance(mesh, p, q) -> float:
    i = mesh.vertex_index(*p)
    j = mesh.vertex_index(*q)
    d = float(dijkstra(mesh.graph, directed=False, indices=i)[j])
    if not math.isfinite(d):
        raise Disconnected(f"no mesh path from {p} to {q}")
    return d


def _graph_path(mesh, p, q):
    i = mesh.vertex_index(*p)
    j = mesh.vertex_index(*q)
    dist, pred = dijkstra(mesh.graph, directed=False, indices=i,
                          return_predecessors=True)
    if not math.isfinite(dist[j]):
        raise Disconnected(f"no mesh path from {p} to {q}")
    order = [j]
    while order[-1] != i:
        order.append(int(pred[order[-1]]))
    return mesh.vertices[order[::-1]], float(dist[j])


def _chain_length(pts) -> float:
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def _lift_segment(f, p, q, count):
    """Surface polyline over the straight (x, y) segment from p to q."""
    w = np.linspace(0.0, 1.0, max(int(count), 1) + 1)
    x = (1.0 - w) * p[0] + w * q[0]
    y = (1.0 - w) * p[1] + w * q[1]
    Z, _ = _heights(f, x[None, :], y[None, :])
    return np.stack([x, y, Z[0]], axis=1)


def _shortcut(f, pts):
    """Replace subpaths by lifted straight segments wherever shorter."""
    out = [pts[0]]

    def walk(seg):
        n = len(seg) - 1
        if n >= 2:
            cand = _lift_segment(f, seg[0], seg[-1], n)
            if (bool(np.all(np.isfinite(cand[:, 2])))
                    and _chain_length(cand) < _chain_length(seg)):
                out.extend(cand[1:])
                return
            if n >= 4:
                mid = n // 2
                walk(seg[:mid + 1])
                walk(seg[mid:])
                return
        out.extend(seg[1:])

    walk(pts)
    return np.asarray(out)


def _subdivide(f, pts):
    out = [pts[0:1]]
    for a, b in zip(pts, pts[1:]):
        out.append(_lift_segment(f, a, b, 2)[1:])
    return np.concatenate(out, axis=0)


def _relax(f, pts, sweeps):
    """Red-black midpoint relaxation; moves are only ever accepted when
    they shorten the chain, so the estimate cannot drift upward."""
    pts = pts.copy()
    for _ in range(sweeps):
        improved = 0.0
        for parity in (1, 2):
            idx = np.arange(parity, len(pts) - 1, 2)
            if idx.size == 0:
                continue
            left = pts[idx - 1]
            right = pts[idx + 1]
            mx = 0.5 * (left[:, 0] + right[:, 0])
            my = 0.5 * (left[:, 1] + right[:, 1])
            Z, _ = _heights(f, mx[None, :], my[None, :])
            cand = np.stack([mx, my, Z[0]], axis=1)
            old = (np.linalg.norm(pts[idx] - left, axis=1)
                   + np.linalg.norm(right - pts[idx], axis=1))
            new = (np.linalg.norm(cand - left, axis=1)
                   + np.linalg.norm(right - cand, axis=1))
            take = np.isfinite(cand[:, 2]) & (new < old)
            pts[idx[take]] = cand[take]
            improved += float(np.sum((old - new)[take]))
        if improved < 1e-14:
            break
    return pts


def inner_distance(mesh: MeshPatch, p, q, *, f=None, straighten: bool = True,
                   rounds: int = 3, final_segments: int = 256) -> float:
    """Upper estimate of the inner distance between two chart points.

    Bare graph distance when straighten is off.  Otherwise the Dijkstra
    path is tightened against the surface itself (which needs the height
    function back) and resampled to a fixed resolution, so estimates from
    different refinement levels are comparable."""
    pts, d = _graph_path(mesh, p, q)
    if not straighten:
        return d
    if f is None:
        raise ValueError("straightening needs the surface height function")
    if len(pts) < 2:
        return 0.0
    for _ in range(rounds):
        pts = _shortcut(f, pts)
        pts = _subdivide(f, pts)
        pts = _relax(f, pts, sweeps=24)
    pts = _shortcut(f, pts)
    while len(pts) - 1 < final_segments:
        pts = _subdivide(f, pts)
        pts = _relax(f, pts, sweeps=12)
    return _chain_length(pts)


# ---------------------------------------------------------------------------
# l-regularity along a shrinking pair family


class Regularity(Enum):
    NORMALLY_EMBEDDED = "normally_embedded"
    NOT_L_REGULAR = "not_l_regular"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PairProbe:
    """One slice of the pair family: outer and mesh-estimated inner distance."""

    y: float
    d_o: float
    d_i: float

    @property
    def ratio(self) -> float:
        return self.d_i / self.d_o


@dataclass
class RegularityReport:
    pairs: list[PairProbe]
    ratio_fit: PowerFit
    verdict: Regularity
    notes: list[str] = field(default_factory=list)


def l_regularity_probe(f, pair, schedule: SampleSchedule | None = None, *,
                       tol_exp: float = 0.1, residual_ceiling: float = 0.05,
                       pad: float = 0.3, y_margin: float = 0.12,
                       mesh_kw: dict | None = None) -> RegularityReport:
    """Fit the growth of d_i/d_o along a shrinking pair family.

    pair is (arc_minus, arc_plus), two chart arcs y -> x giving the probe
    points A_-(y) and A_+(y).  Every y gets its own local strip mesh
    spanning the pair with margin: the separation shrinks like a power of
    y, so no single global mesh can resolve all slices at once.  The
    outer distance is computed exactly from the surface heights; the
    inner one is the straightened mesh estimate, always an upper bound.
    """
    arc_m, arc_p = pair
    sched = schedule or SampleSchedule(0.1, 0.7, 12)
    kw = dict(nx=41, ny=9, refine_slope=2.0, max_level=8)
    kw.update(mesh_kw or {})
    pairs: list[PairProbe] = []
    notes: list[str] = []
    ys = sched.values()
    for y in ys:
        xm = float(arc_m(y))
        xp = float(arc_p(y))
        if xm > xp:
            xm, xp = xp, xm
        gap = xp - xm
        if gap <= 0:
            raise ValueError(f"pair family degenerate at y = {y:g}")
        zm = _height_at(f, xm, y)
        zp = _height_at(f, xp, y)
        d_o = math.hypot(gap, zp - zm)
        region = MeshRegion(xm - pad * gap, xp + pad * gap,
                            y * (1.0 - y_margin), y * (1.0 + y_margin),
                            label=f"pair strip at y = {y:g}")
        mesh = build_mesh(f, region, probe=((xm, y), (xp, y)),
                          extra_xs=(xm, xp), extra_ys=(y,), **kw)
        d_i = inner_distance(mesh, (xm, y), (xp, y), f=f)
        pairs.append(PairProbe(y, d_o, d_i))

    ratios = np.array([p.ratio for p in pairs])
    fit = fit_power(ys, ratios)
    verdict = Regularity.INCONCLUSIVE
    if fit.residual > residual_ceiling:
        notes.append(f"ratio fit residual {fit.residual:.4f} above "
                     f"{residual_ceiling}; no verdict")
    elif fit.exponent <= -tol_exp:
        verdict = Regularity.NOT_L_REGULAR
    elif abs(fit.exponent) <= tol_exp and bool(np.all(np.isfinite(ratios))):
        verdict = Regularity.NORMALLY_EMBEDDED
    else:
        notes.append(f"ratio exponent {fit.exponent:.3f} positive; the window "
                     "is too coarse to call")
    return RegularityReport(pairs, fit, verdict, notes)
