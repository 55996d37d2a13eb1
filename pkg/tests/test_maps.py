import numpy as np
import pytest

from singlip.exprs import parse
from singlip.maps import (
    DegenerateGap,
    HypothesisFailed,
    MapBundle,
    NotMonotone,
    StripRegion,
    assemble_case_iv,
    build_vertical_map,
    estimate_distortion,
    eval_inverse,
    eval_map,
    linearize,
    rotate_chart,
    _values,
)
from singlip.metric import Regularity, SampleSchedule, l_regularity_probe

TRIPLE_CUSP = parse("root((x^2+y^2)*(x^2-y^3),3)")
SHARP_21 = parse("y^5/(x^2+y^4)")
CUBE_ROOT_WALL = parse("root(x,3)")


def wall_minus(y):
    return y**1.5 - y**1.75


def wall_plus(y):
    return y**1.5 + y**1.75


def zero_arc(y):
    return 0.0 * y


def edge_arc(y):
    return 1.0 * y


WALL_STRIP = StripRegion(wall_minus, wall_plus, 0.01, 0.25, label="wall")


def wall_samples(n, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    ys = rng.uniform(0.01, 0.25, n)
    a, b = WALL_STRIP.edges(ys)
    xs = a + rng.uniform(0.0, 1.0, n) * (b - a)
    return xs, ys


def cusp_pieces(y_lo=0.01, y_hi=0.25):
    left = StripRegion(zero_arc, wall_minus, y_lo, y_hi, label="slow flank")
    mid = StripRegion(wall_minus, wall_plus, y_lo, y_hi, label="wall")
    right = StripRegion(wall_plus, edge_arc, y_lo, y_hi, label="fast flank")
    return left, mid, right


# ---------------------------------------------------------------------------
# linearization


def test_linearization_agrees_with_surface_on_arcs():
    lin = linearize(TRIPLE_CUSP, wall_minus, wall_plus)
    ys = np.linspace(0.02, 0.24, 23)
    a, b = WALL_STRIP.edges(ys)
    fa = _values(TRIPLE_CUSP, a, ys)
    fb = _values(TRIPLE_CUSP, b, ys)
    # weights are exactly 0 and 1 on the arcs, so agreement is exact
    assert np.array_equal(lin(a, ys), fa)
    assert np.array_equal(lin(b, ys), fb)
    assert np.array_equal(lin.weight(a, ys), np.zeros_like(ys))
    assert np.array_equal(lin.weight(b, ys), np.ones_like(ys))


def test_linearization_slope_is_bounded_on_the_wall():
    # wall height and width shrink at the same rate, so the transverse
    # slope of the interpolant stays bounded as y -> 0
    lin = linearize(TRIPLE_CUSP, wall_minus, wall_plus)
    ys = np.linspace(0.01, 0.25, 400)
    slopes = lin.slope(ys)
    assert np.all(np.isfinite(slopes))
    assert np.all(np.abs(slopes) < 1.5)


def test_linearization_reproduces_affine_surfaces():
    plane = parse("x + 2*y")
    lin = linearize(plane, lambda y: 0.2 * y, lambda y: 0.8 * y)
    rng = np.random.Generator(np.random.Philox(1))
    ys = rng.uniform(0.05, 0.4, 200)
    xs = rng.uniform(-0.5, 0.5, 200) * ys
    assert np.max(np.abs(lin(xs, ys) - (xs + 2.0 * ys))) < 1e-12


def test_linearization_rejects_coincident_arcs():
    lin = linearize(TRIPLE_CUSP, edge_arc, edge_arc)
    with pytest.raises(DegenerateGap, match="below 1e-13"):
        lin(np.array([0.05]), np.array([0.1]))


# ---------------------------------------------------------------------------
# vertical squeeze map


def test_squeeze_shells_bracket_surface_and_interpolant():
    vm = build_vertical_map(
        TRIPLE_CUSP, linearize(TRIPLE_CUSP, wall_minus, wall_plus), c=0.5)
    xs, ys = wall_samples(4000, seed=2)
    f, L, bot, top = vm.squeeze.shells(xs, ys)
    assert np.all(bot <= np.minimum(f, L))
    assert np.all(np.maximum(f, L) <= top)
    apart = np.abs(f - L) > 1e-12
    assert np.all(bot[apart] < np.minimum(f, L)[apart])
    assert np.all(np.maximum(f, L)[apart] < top[apart])


def test_vertical_map_carries_interpolant_to_surface():
    vm = build_vertical_map(
        TRIPLE_CUSP, linearize(TRIPLE_CUSP, wall_minus, wall_plus), c=0.5)
    xs, ys = wall_samples(10_000, seed=3)
    L = vm.lin(xs, ys)
    f = _values(TRIPLE_CUSP, xs, ys)
    pts = np.stack([xs, ys, L], axis=1)
    img = vm.apply(pts)
    assert np.array_equal(img[:, :2], pts[:, :2])
    assert np.max(np.abs(img[:, 2] - f)) <= 1e-9


def test_vertical_map_slope_table():
    # at c = 1/2 the two branch slopes are c/(c+1) = 1/3 and (c+1)/c = 3,
    # which side holds which depends on the sign of f - L
    vm = build_vertical_map(
        TRIPLE_CUSP, linearize(TRIPLE_CUSP, wall_minus, wall_plus), c=0.5)
    xs, ys = wall_samples(10_000, seed=4)
    f, L, bot, top, good = vm._shells(xs, ys)
    step = 1e-7
    ok = good & (np.minimum(L - bot, top - L) > 10 * step) \
        & (np.abs(f - L) > 1e-5)
    assert np.count_nonzero(ok) > 5000

    z_low = 0.5 * (bot + L)
    slope_low = (vm.h(xs, ys, z_low + step) - vm.h(xs, ys, z_low)) / step
    want_low = np.where(f < L, 1.0 / 3.0, 3.0)
    assert np.max(np.abs(slope_low[ok] - want_low[ok])) < 1e-5

    z_high = 0.5 * (L + top)
    slope_high = (vm.h(xs, ys, z_high + step) - vm.h(xs, ys, z_high)) / step
    want_high = np.where(f < L, 3.0, 1.0 / 3.0)
    assert np.max(np.abs(slope_high[ok] - want_high[ok])) < 1e-5


def test_vertical_map_is_identity_off_support():
    vm = build_vertical_map(
        TRIPLE_CUSP, linearize(TRIPLE_CUSP, wall_minus, wall_plus), c=0.5)
    xs, ys = wall_samples(2000, seed=5)
    _, _, bot, top, _ = vm._shells(xs, ys)
    spread = top - bot
    for z in (top + 0.1 * spread, bot - 0.1 * spread, top + 10.0):
        pts = np.stack([xs, ys, z], axis=1)
        assert np.array_equal(vm.apply(pts), pts)
        assert not np.any(vm.support(xs, ys, z))


def test_vertical_map_monotone_in_z():
    vm = build_vertical_map(
        TRIPLE_CUSP, linearize(TRIPLE_CUSP, wall_minus, wall_plus), c=0.5)
    xs, ys = wall_samples(10_000, seed=6)
    _, _, bot, top, _ = vm._shells(xs, ys)
    t = np.linspace(-0.2, 1.2, 29)
    zs = bot[None, :] + t[:, None] * (top - bot)[None, :]
    hs = np.stack([vm.h(xs, ys, z) for z in zs])
    assert np.all(np.diff(hs, axis=0) > 0.0)


def test_vertical_map_round_trip():
    vm = build_vertical_map(
        TRIPLE_CUSP, linearize(TRIPLE_CUSP, wall_minus, wall_plus), c=0.5)
    xs, ys = wall_samples(5000, seed=7)
    _, _, bot, top, _ = vm._shells(xs, ys)
    rng = np.random.Generator(np.random.Philox(8))
    z = bot + rng.uniform(-0.3, 1.3, xs.size) * (top - bot)
    pts = np.stack([xs, ys, z], axis=1)
    back = vm.apply_inverse(vm.apply(pts))
    assert np.max(np.abs(back - pts)) <= 1e-9


def test_build_vertical_map_rejects_nonpositive_c():
    lin = linearize(TRIPLE_CUSP, wall_minus, wall_plus)
    with pytest.raises(ValueError, match="must be positive"):
        build_vertical_map(TRIPLE_CUSP, lin, c=0.0)


def test_strip_region_validates_heights():
    with pytest.raises(ValueError, match="0 < y_lo < y_hi"):
        StripRegion(zero_arc, edge_arc, 0.2, 0.1)


# ---------------------------------------------------------------------------
# rotated charts


def test_rotated_chart_flattens_cube_root_wall():
    strip = StripRegion(lambda y: -0.2 + 0.0 * y, lambda y: 0.2 + 0.0 * y,
                        0.05, 0.3, label="cube root wall")
    patch = rotate_chart(CUBE_ROOT_WALL, strip, 1.0)
    # the wall has infinite slope at x = 0 but the rotated graph is
    # 1-lipschitz: quotients (t - 1)/(t + 1) with t = f_x in [0, inf]
    assert patch.lipschitz
    assert patch.max_slope <= 1.0 + 1e-6

    # closed-form cross-check of the rotated graph height
    for x0 in (-0.15, -0.02, 0.0, 0.01, 0.12):
        z0 = np.cbrt(x0)
        u0 = (x0 + z0) / np.sqrt(2.0)
        w0 = (z0 - x0) / np.sqrt(2.0)
        got = float(patch.graph_height(np.array([u0]), np.array([0.1]))[0])
        assert abs(got - w0) < 1e-9


def test_rotated_chart_matches_slanted_plane():
    plane = parse("2*x")
    strip = StripRegion(lambda y: -0.3 + 0.0 * y, lambda y: 0.3 + 0.0 * y,
                        0.05, 0.3)
    patch = rotate_chart(plane, strip, 2.0)
    assert patch.max_slope <= 1e-9
    us = np.linspace(-0.2, 0.2, 41)
    heights = patch.graph_height(us, np.full_like(us, 0.1))
    assert np.max(np.abs(heights)) < 1e-9


def test_rotate_chart_rejects_bad_walls():
    bump = parse("x^2")
    straddle = StripRegion(lambda y: -0.1 + 0.0 * y, lambda y: 0.1 + 0.0 * y,
                           0.05, 0.2)
    with pytest.raises(NotMonotone, match="changes sign"):
        rotate_chart(bump, straddle, 1.0)

    falling = parse("0 - 2*x")
    right_half = StripRegion(lambda y: 0.05 + 0.0 * y,
                             lambda y: 0.3 + 0.0 * y, 0.05, 0.2)
    with pytest.raises(NotMonotone, match="negative ell slope"):
        rotate_chart(falling, right_half, 1.0)

    with pytest.raises(ValueError, match="nonzero"):
        rotate_chart(bump, right_half, 0.0)


def test_wall_strip_is_lipschitz_in_rotated_frame():
    patch = rotate_chart(TRIPLE_CUSP, WALL_STRIP, 1.0)
    assert patch.lipschitz
    assert patch.max_slope < 1.0


# ---------------------------------------------------------------------------
# flank-splitting composite


def test_assemble_case_iv_builds_bundle_for_triple_cusp():
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)
    assert isinstance(bundle, MapBundle)
    regions = [entry[0] for entry in bundle.charts]
    assert regions[-1] == "elsewhere"
    assert regions[0].label == "flank-split span"

    text = "\n".join(bundle.notes)
    assert "support projection within 2c margin: True" in text
    assert "support projection inside flanked union: True" in text
    # measured exponents: flank widths 3/2 and 1, wall height 7/4
    assert "flanks (1.500, 1.000)" in text
    assert "wall 1.750" in text


def test_assemble_case_iv_round_trip_and_fixed_flank_points():
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)

    p = (0.02, 0.09,
         float(_values(TRIPLE_CUSP, np.array([0.02]), np.array([0.09]))[0]))
    q = eval_inverse(bundle, eval_map(bundle, p))
    assert max(abs(q[i] - p[i]) for i in range(3)) < 1e-12

    xs, ys = wall_samples(3000, seed=10)
    zs = _values(TRIPLE_CUSP, xs, ys)
    rng = np.random.Generator(np.random.Philox(11))
    pts = np.stack([xs, ys, zs + rng.uniform(-0.5, 0.5, xs.size)], axis=1)
    back = bundle.apply_inverse(bundle.apply(pts))
    assert np.max(np.abs(back - pts)) < 1e-12


def test_assemble_case_iv_rejects_steep_wall():
    # width of the slow flank shrinks like y^3 while the wall height
    # only shrinks like y, so the linearization slope would blow up
    inner = lambda y: 0.5 * y**3
    outer = lambda y: 2.0 ** (1.0 / 3.0) * y ** (5.0 / 3.0)
    sl = StripRegion(zero_arc, inner, 0.01, 0.2)
    sm = StripRegion(inner, outer, 0.01, 0.2)
    sr = StripRegion(outer, edge_arc, 0.01, 0.2)
    res = assemble_case_iv(SHARP_21, sl, sm, sr)
    assert isinstance(res, HypothesisFailed)
    assert "below flank width exponent" in str(res)


def test_assemble_case_iv_rejects_steep_flank():
    # pushing the middle boundary out to 2y^2 leaves y^4 terms dominant
    # on the right flank, where f_x grows without bound
    inner = lambda y: 0.5 * y**3
    outer = lambda y: 2.0 * y**2
    sl = StripRegion(zero_arc, inner, 0.01, 0.2)
    sm = StripRegion(inner, outer, 0.01, 0.2)
    sr = StripRegion(outer, edge_arc, 0.01, 0.2)
    res = assemble_case_iv(SHARP_21, sl, sm, sr)
    assert isinstance(res, HypothesisFailed)
    assert "not lipschitz" in str(res)


def test_bundle_image_graph_slopes_bounded():
    # the image of the surface under the inverse bundle is f with the
    # span replaced by per-slice chords; its slopes stay below 2
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)
    worst = 0.0
    for y in np.linspace(0.011, 0.249, 40):
        xs = np.linspace(1e-4, y * 0.999, 240)
        ys = np.full_like(xs, y)
        zs = _values(TRIPLE_CUSP, xs, ys)
        img = bundle.apply_inverse(np.stack([xs, ys, zs], axis=1))
        order = np.argsort(img[:, 0])
        du = np.diff(img[order, 0])
        dz = np.diff(img[order, 2])
        worst = max(worst, float(np.max(np.abs(dz / du))))
    assert worst < 2.0


def test_bundle_charts_commute_on_samples():
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)
    flipped = MapBundle(charts=list(reversed(bundle.charts)))
    xs, ys = wall_samples(1000, seed=12)
    zs = _values(TRIPLE_CUSP, xs, ys)
    pts = np.stack([xs, ys, zs], axis=1)
    assert np.max(np.abs(bundle.apply(pts) - flipped.apply(pts))) <= 1e-9


# ---------------------------------------------------------------------------
# sampled distortion


def test_distortion_of_identity_bundle_is_exactly_one():
    ident = MapBundle(charts=[("everything", "identity")])
    region = StripRegion(zero_arc, edge_arc, 0.01, 0.25)
    est = estimate_distortion(ident, region, 1000, seed=3)
    assert est.K_forward == 1.0
    assert est.K_inverse == 1.0
    assert est.n_pairs == 1000


def test_distortion_is_deterministic_and_monotone_in_budget():
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)
    region = StripRegion(zero_arc, edge_arc, 0.01, 0.25)
    a = estimate_distortion(bundle, region, 2000, seed=9)
    b = estimate_distortion(bundle, region, 2000, seed=9)
    assert a == b
    c = estimate_distortion(bundle, region, 4000, seed=9)
    assert c.K_forward >= a.K_forward
    assert c.K_inverse >= a.K_inverse
    assert a.K_forward >= 1.0 - 1e-12
    assert a.K_inverse >= 1.0 - 1e-12

    with pytest.raises(ValueError, match="at least 1000"):
        estimate_distortion(bundle, region, 999, seed=0)


def test_distortion_of_triple_cusp_bundle_is_finite_and_stable():
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)
    region = StripRegion(zero_arc, edge_arc, 0.01, 0.25)
    e1 = estimate_distortion(bundle, region, 10_000, seed=42)
    # branch slopes put the squeeze factor at 3; shear against the
    # breakpoint drift pushes the sampled constants somewhat higher
    assert 3.0 < e1.K_forward < 4.0
    assert 4.0 < e1.K_inverse < 5.5
    e2 = estimate_distortion(bundle, region, 20_000, seed=42)
    assert (e2.K_forward - e1.K_forward) / e1.K_forward <= 0.10
    assert (e2.K_inverse - e1.K_inverse) / e1.K_inverse <= 0.10
    assert bundle.distortion == e2


# ---------------------------------------------------------------------------
# the verdict is a bilipschitz invariant


def test_regularity_verdict_survives_the_bundle():
    # push the whole wedge through the flank-splitting map and probe the
    # image surface: the wall pair must stay normally embedded
    left, mid, right = cusp_pieces()
    bundle = assemble_case_iv(TRIPLE_CUSP, left, mid, right)
    span = bundle.charts[0][0]

    def image_graph(X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        F = _values(TRIPLE_CUSP, X, Y)
        xl = span.alpha(Y)
        xr = span.beta(Y)
        zl = _values(TRIPLE_CUSP, xl, Y)
        zr = _values(TRIPLE_CUSP, xr, Y)
        w = (X - xl) / (xr - xl)
        chord = (1.0 - w) * zl + w * zr
        return np.where((X > xl) & (X < xr), chord, F)

    def image_arc(arc):
        def pushed(y):
            x = float(arc(y))
            z = float(_values(TRIPLE_CUSP, np.array([x]), np.array([y]))[0])
            return float(bundle.apply_inverse(np.array([[x, y, z]]))[0, 0])
        return pushed

    # the inverse bundle straightens the wall into per-slice chords, so
    # the image surface is the chord graph exactly
    ys = np.linspace(0.011, 0.2, 15)
    xs = np.linspace(1e-3, 0.9, 15)[:, None] * ys[None, :]
    zs = _values(TRIPLE_CUSP, xs.ravel(), np.tile(ys, 15))
    img = bundle.apply_inverse(
        np.stack([xs.ravel(), np.tile(ys, 15), zs], axis=1))
    resid = np.abs(image_graph(img[:, 0], img[:, 1]) - img[:, 2])
    assert np.max(resid) < 1e-12

    sched = SampleSchedule(0.15, 0.7, 10)
    before = l_regularity_probe(TRIPLE_CUSP, (wall_minus, wall_plus), sched)
    after = l_regularity_probe(
        image_graph, (image_arc(wall_minus), image_arc(wall_plus)), sched)
    assert before.verdict == Regularity.NORMALLY_EMBEDDED
    assert after.verdict == before.verdict
