import math

import numpy as np
import pytest

from singlip.arcs import LimitKind, SampleSchedule, make_arc, slope_limit_along_arc
from singlip.exprs import parse
from singlip.fibers import (
    AXIS_ANGLES,
    RayChart,
    check_plane_cone,
    find_zero_tracks,
    golden_max,
    ray_at,
    ray_fiber,
    slope_profile,
    sweep_exceptional_rays,
)

# endpoint of the slope fiber over +y for the a = b quotient surfaces,
# attained on the arcs x = +/- y^a / sqrt(3)
HALF_WIDTH = 3.0 * math.sqrt(3.0) / 8.0

CONE_11 = parse("y^3 / (x^2 + y^2)")
FLAT_22 = parse("y^6 / (x^2 + y^4)")
TAME_12 = parse("y^4 / (x^2 + y^2)")
SHARP_21 = parse("y^5 / (x^2 + y^4)")
SHARP_31 = parse("y^7 / (x^2 + y^6)")
SHARP_32 = parse("y^8 / (x^2 + y^6)")
TRIPLE_CUSP = parse("root((x^2 + y^2) * (x^2 - y^3), 3)")
DOUBLE_CUSP = parse("root((x^2 - y^5) * (x^2 - y^7), 3)")
SMOOTH = parse("x^2 + y^2")


def test_axis_rays_have_exact_frames():
    for label, angle in AXIS_ANGLES.items():
        ray = ray_at(angle)
        assert ray.label == label
        assert ray.er in {(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)}
        ex, ey = ray.er
        nx, ny = ray.en
        assert ex * nx + ey * ny == 0.0
        # en is er rotated by -90 degrees
        assert (nx, ny) == (ey, -ex)


def test_ray_at_snaps_to_axis():
    ray = ray_at(math.pi / 2 + 0.01, snap_tol=0.02)
    assert ray.label == "+y"
    loose = ray_at(math.pi / 2 + 0.01)
    assert loose.label is None
    assert loose.angle == pytest.approx(math.pi / 2 + 0.01)


def test_ray_at_normalizes_angle():
    ray = ray_at(-math.pi / 2)
    assert ray.label is None or ray.label == "-y"
    assert ray.angle == pytest.approx(3 * math.pi / 2)


def test_chart_coordinates_match_frame():
    chart = RayChart(FLAT_22, ray_at(math.pi / 2))
    x, y = chart.xy(0.1, 0.03)
    assert x == pytest.approx(0.03)
    assert y == pytest.approx(0.1)
    chart = RayChart(FLAT_22, ray_at(0.0))
    x, y = chart.xy(0.1, 0.03)
    assert x == pytest.approx(0.1)
    assert y == pytest.approx(-0.03)


def test_chart_slope_is_transverse_derivative():
    # over +y the transverse direction is +x, so the chart slope is f_x
    chart = RayChart(TAME_12, ray_at(math.pi / 2))
    t, u = 0.08, 0.01
    x, y = u, t
    fx = -2 * x * y**4 / (x**2 + y**2) ** 2
    assert chart.slope_at(t, u) == pytest.approx(fx, rel=1e-12)


# ---------------------------------------------------------------------------
# golden section


def test_golden_max_quadratic():
    arg, top = golden_max(lambda v: 1.0 - (v - 0.3) ** 2, 0.0, 1.0)
    assert top == pytest.approx(1.0, abs=1e-12)
    assert arg == pytest.approx(0.3, abs=1e-6)


def test_golden_max_reversed_bracket():
    arg, top = golden_max(lambda v: -((v - 2.0) ** 2), 3.0, 1.0)
    assert arg == pytest.approx(2.0, abs=1e-6)


def test_golden_max_ignores_nan():
    def fun(v):
        return float("nan") if v < 0.1 else -v

    arg, top = golden_max(fun, 0.0, 1.0)
    assert top == pytest.approx(-0.1, abs=1e-3)


# ---------------------------------------------------------------------------
# slope profiles and fibers


def test_cone_profile_hits_known_extremes():
    # z = y^3/(x^2+y^2): transverse slope over +y peaks at 3 sqrt(3)/8
    # on the rays x = +/- t/sqrt(3), which sit inside a slope-1 wedge
    chart = RayChart(CONE_11, ray_at(math.pi / 2))
    prof = slope_profile(chart, wedge_slope=1.0)
    np.testing.assert_allclose(prof.hi, HALF_WIDTH, rtol=1e-6)
    np.testing.assert_allclose(prof.lo, -HALF_WIDTH, rtol=1e-6)


def test_fiber_interval_for_cone():
    fiber = ray_fiber(CONE_11, ray_at(math.pi / 2))
    assert fiber.lo == pytest.approx(-HALF_WIDTH, rel=1e-2)
    assert fiber.hi == pytest.approx(HALF_WIDTH, rel=1e-2)
    assert not fiber.contains_infinity
    assert not fiber.is_singleton()
    assert not fiber.is_full


def test_fiber_interval_for_flat_quotient():
    fiber = ray_fiber(FLAT_22, ray_at(math.pi / 2))
    assert fiber.lo == pytest.approx(-HALF_WIDTH, rel=1e-2)
    assert fiber.hi == pytest.approx(HALF_WIDTH, rel=1e-2)
    assert not fiber.contains_infinity


def test_fiber_singleton_for_tame_quotient():
    fiber = ray_fiber(TAME_12, ray_at(math.pi / 2))
    assert fiber.is_singleton()
    assert fiber.lo == pytest.approx(0.0, abs=1e-3)
    assert fiber.hi == pytest.approx(0.0, abs=1e-3)


def test_fiber_full_for_sharp_quotient():
    fiber = ray_fiber(SHARP_21, ray_at(math.pi / 2))
    assert fiber.is_full
    assert fiber.contains_infinity
    assert fiber.lo == -math.inf
    assert fiber.hi == math.inf


def test_fiber_full_for_cusp_surfaces():
    for f in (TRIPLE_CUSP, DOUBLE_CUSP):
        fiber = ray_fiber(f, ray_at(math.pi / 2))
        assert fiber.is_full
        assert fiber.contains_infinity


def test_fiber_parity_symmetry():
    # f even in x and odd-signed in y: the -y fiber mirrors the +y fiber
    up = ray_fiber(FLAT_22, ray_at(math.pi / 2))
    down = ray_fiber(FLAT_22, ray_at(3 * math.pi / 2))
    assert up.hi == pytest.approx(down.hi, rel=1e-6)
    assert up.lo == pytest.approx(down.lo, rel=1e-6)


def test_nonexceptional_ray_kills_random_tangent_arcs():
    # singleton fiber at 0 means every tangent arc sees slope -> 0
    rng = np.random.Generator(np.random.Philox(23))
    fiber = ray_fiber(TAME_12, ray_at(math.pi / 2))
    assert fiber.is_singleton()
    for _ in range(20):
        c = rng.uniform(-2.0, 2.0)
        s = rng.uniform(1.1, 3.0)
        arc = make_arc((c, s))
        lim = slope_limit_along_arc(TAME_12, arc)
        assert lim.kind is LimitKind.ZERO


# ---------------------------------------------------------------------------
# zero tracks


def test_zero_tracks_of_double_cusp():
    # x^2 = y^5 and x^2 = y^7 give value-zero tracks at |x| = y^(5/2), y^(7/2)
    chart = RayChart(DOUBLE_CUSP, ray_at(math.pi / 2))
    tracks = find_zero_tracks(chart)
    exps = sorted(tr.location_exponent() for tr in tracks if tr.side != 0)
    assert len(exps) == 4
    assert exps[0] == pytest.approx(2.5, abs=0.05)
    assert exps[1] == pytest.approx(2.5, abs=0.05)
    assert exps[2] == pytest.approx(3.5, abs=0.05)
    assert exps[3] == pytest.approx(3.5, abs=0.05)


def test_zero_track_of_triple_cusp():
    chart = RayChart(TRIPLE_CUSP, ray_at(math.pi / 2))
    tracks = find_zero_tracks(chart)
    exps = sorted(tr.location_exponent() for tr in tracks if tr.side != 0)
    assert len(exps) == 2
    for e in exps:
        assert e == pytest.approx(1.5, abs=0.05)


def test_no_zero_tracks_on_smooth_surface():
    chart = RayChart(SMOOTH, ray_at(math.pi / 2))
    assert find_zero_tracks(chart) == []


# ---------------------------------------------------------------------------
# tangent cone


def test_plane_cone_verdicts():
    for f in (FLAT_22, TAME_12, SHARP_32, TRIPLE_CUSP, DOUBLE_CUSP):
        assert check_plane_cone(f).is_plane
    for f in (CONE_11, SHARP_21, SHARP_31):
        assert not check_plane_cone(f).is_plane


def test_smooth_surface_has_plane_cone():
    res = check_plane_cone(SMOOTH)
    assert res.is_plane


# ---------------------------------------------------------------------------
# the sweep


def expected_labels(result):
    return sorted(fb.ray.describe() for fb in result.fibers)


def test_sweep_cone_finds_axis_pair():
    res = sweep_exceptional_rays(CONE_11)
    assert expected_labels(res) == ["+y", "-y"]
    assert all(not fb.is_full for fb in res.fibers)
    assert any("cone curvature" in note for note in res.notes)


def test_sweep_flat_quotient_finds_axis_pair():
    res = sweep_exceptional_rays(FLAT_22)
    assert expected_labels(res) == ["+y", "-y"]
    assert all(not fb.is_full for fb in res.fibers)


def test_sweep_sharp_quotient_finds_full_axis_pair():
    res = sweep_exceptional_rays(SHARP_21)
    assert expected_labels(res) == ["+y", "-y"]
    assert all(fb.is_full for fb in res.fibers)
    assert all(fb.contains_infinity for fb in res.fibers)


def test_sweep_tame_quotient_empty():
    res = sweep_exceptional_rays(TAME_12)
    assert res.fibers == []


def test_sweep_smooth_empty():
    res = sweep_exceptional_rays(SMOOTH)
    assert res.fibers == []
    # nothing even cleared the rough floor
    assert res.examined == []


def test_sweep_triple_cusp_single_full_ray():
    res = sweep_exceptional_rays(TRIPLE_CUSP)
    assert expected_labels(res) == ["+y"]
    assert res.fibers[0].is_full


def test_sweep_double_cusp_single_ray():
    res = sweep_exceptional_rays(DOUBLE_CUSP)
    assert expected_labels(res) == ["+y"]
