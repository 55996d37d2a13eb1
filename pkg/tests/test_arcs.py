import math
from fractions import Fraction

import numpy as np
import pytest

from singlip.arcs import (
    ArcSpec,
    Limit,
    LimitKind,
    NoisyFit,
    SampleSchedule,
    aitken_limit,
    classify_samples,
    dump_csv,
    fit_power,
    make_arc,
    slope_limit_along_arc,
    value_limit_along_arc,
)
from singlip.exprs import parse


def test_arc_eval_and_side():
    arc = make_arc((2.0, "5/2"), side=-1)
    t = 0.04
    assert arc(t) == pytest.approx(-2.0 * t ** 2.5)
    ts = np.array([0.1, 0.01])
    np.testing.assert_allclose(arc(ts), -2.0 * ts ** 2.5)


def test_arc_leading_term():
    arc = make_arc((1.0, "3/2"), (0.5, "7/4"))
    coeff, exponent = arc.leading()
    assert coeff == 1.0
    assert exponent == Fraction(3, 2)


def test_schedule_floor():
    sched = SampleSchedule(start=1e-10, ratio=0.5, count=20)
    ts = sched.values()
    assert ts.min() > 1e-14
    assert len(ts) == 14


# ---------------------------------------------------------------------------
# fits


def test_fit_power_exact_monomial():
    ts = SampleSchedule().values()
    vals = 3.7 * ts ** (5 / 3)
    fit = fit_power(ts, vals)
    assert fit.exponent == pytest.approx(5 / 3, abs=1e-10)
    assert fit.coeff(5 / 3) == pytest.approx(3.7, rel=1e-10)
    assert fit.residual < 1e-10
    assert fit.sign == 1


def test_fit_power_negative_values():
    ts = SampleSchedule().values()
    fit = fit_power(ts, -2.0 * ts ** 0.5)
    assert fit.sign == -1
    assert fit.coeff(0.5) == pytest.approx(-2.0, rel=1e-10)


def test_fit_power_matches_polyfit_under_noise():
    rng = np.random.Generator(np.random.Philox(11))
    ts = SampleSchedule().values()
    vals = 1.3 * ts ** 0.75 * np.exp(rng.normal(0, 0.01, ts.shape))
    fit = fit_power(ts, vals)
    slope, intercept = np.polyfit(np.log(ts), np.log(np.abs(vals)), 1)
    assert fit.exponent == pytest.approx(slope, abs=1e-12)
    assert fit.log_value_ref == pytest.approx(
        slope * math.log(ts.min()) + intercept, abs=1e-12
    )


def test_fit_power_needs_points():
    with pytest.raises(NoisyFit):
        fit_power([0.1, 0.07], [1.0, 1.0])
    with pytest.raises(NoisyFit):
        fit_power([0.1, 0.07, 0.049], [0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# aitken


def test_aitken_kills_single_geometric_correction():
    ts = SampleSchedule().values()
    vals = 2.0 + 3.0 * ts ** 0.25
    # raw tail is still ~0.2 away from the limit; acceleration nails it
    assert abs(vals[-1] - 2.0) > 0.1
    assert aitken_limit(vals) == pytest.approx(2.0, abs=1e-6)


def test_aitken_two_corrections():
    ts = SampleSchedule().values()
    vals = 1.5 + 2.0 * ts ** 0.5 - 0.7 * ts
    assert aitken_limit(vals) == pytest.approx(1.5, abs=1e-6)


def test_aitken_constant_sequence():
    assert aitken_limit(np.full(20, 4.25)) == 4.25


# ---------------------------------------------------------------------------
# trichotomy


def test_classify_zero():
    ts = SampleSchedule().values()
    lim = classify_samples(ts, ts ** 1.5)
    assert lim.kind is LimitKind.ZERO
    assert lim.value == 0.0


def test_classify_exact_zero_samples():
    ts = SampleSchedule().values()
    lim = classify_samples(ts, np.zeros_like(ts))
    assert lim.kind is LimitKind.ZERO
    assert lim.fit is None


def test_classify_infinite():
    ts = SampleSchedule().values()
    lim = classify_samples(ts, -3.0 * ts ** -0.5)
    assert lim.kind is LimitKind.INFINITE
    assert lim.value == -math.inf
    assert lim.sign == -1


def test_classify_finite_with_correction():
    ts = SampleSchedule().values()
    lim = classify_samples(ts, 2.0 + 3.0 * ts ** 0.25)
    assert lim.kind is LimitKind.FINITE
    assert lim.value == pytest.approx(2.0, abs=1e-6)


def test_classify_noisy_raises():
    ts = SampleSchedule().values()
    vals = ts ** (1.0 + 0.5 * np.sin(37.0 * np.log(ts)))
    with pytest.raises(NoisyFit):
        classify_samples(ts, vals)


def test_classify_drops_nan_samples():
    ts = SampleSchedule().values()
    vals = ts ** 2
    vals[3] = np.nan
    lim = classify_samples(ts, vals)
    assert lim.kind is LimitKind.ZERO
    assert lim.n_dropped == 1


# ---------------------------------------------------------------------------
# limits along arcs (closed-form oracles)

HOMOG = parse("y^3/(x^2+y^2)")
CUSP = parse("root((x^2+y^2)*(x^2-y^3), 3)")


def test_slope_limit_homogeneous_extremal_ray():
    # f = y^3/(x^2+y^2) restricted to the ray x = y/sqrt(3):
    # f_x is 0-homogeneous, so the limit equals the pointwise value
    # -2xy^3/(x^2+y^2)^2 = -3*sqrt(3)/8, constant along the ray.
    arc = make_arc((1.0 / math.sqrt(3.0), 1))
    lim = slope_limit_along_arc(HOMOG, arc)
    assert lim.kind is LimitKind.FINITE
    assert lim.value == pytest.approx(-3.0 * math.sqrt(3.0) / 8.0, rel=1e-9)
    mirror = make_arc((1.0 / math.sqrt(3.0), 1), side=-1)
    lim = slope_limit_along_arc(HOMOG, mirror)
    assert lim.value == pytest.approx(3.0 * math.sqrt(3.0) / 8.0, rel=1e-9)


def test_slope_limit_homogeneous_axis():
    lim = slope_limit_along_arc(HOMOG, make_arc((0.0, 1)))
    assert lim.kind is LimitKind.ZERO
    lim = slope_limit_along_arc(HOMOG, make_arc((0.0, 1)), component="y")
    assert lim.kind is LimitKind.FINITE
    assert lim.value == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_slope_limit_cusp_tangent_family(c):
    # x = y^(3/2) + c*y^(7/4) balances the blowup of f_x against the
    # shrinking distance to the zero curve of x^2 - y^3; the limit is
    # 2 / (3 * (2c)^(2/3)), derived by expanding f_x = 2x(2x^2+y^2-y^3)/(3f^2)
    # with x^2 - y^3 ~ 2*y^(3/2)*delta, delta = c*y^(7/4).
    arc = make_arc((1.0, "3/2"), (c, "7/4"))
    lim = slope_limit_along_arc(CUSP, arc)
    assert lim.kind is LimitKind.FINITE
    want = 2.0 / (3.0 * (2.0 * c) ** (2.0 / 3.0))
    assert lim.value == pytest.approx(want, rel=0.02)
    lim_y = slope_limit_along_arc(CUSP, arc, component="y")
    assert lim_y.kind is LimitKind.ZERO


def test_slope_limit_on_blowup_locus_uses_sentinels():
    # exactly on x = y^(3/2) the root argument vanishes and the jet reports
    # a signed infinity at every sample
    arc = make_arc((1.0, "3/2"))
    lim = slope_limit_along_arc(CUSP, arc)
    assert lim.kind is LimitKind.INFINITE


def test_value_limit_along_arc():
    lim = value_limit_along_arc(HOMOG, make_arc((1.0 / math.sqrt(3.0), 1)))
    assert lim.kind is LimitKind.ZERO
    lim = value_limit_along_arc(parse("x^2+1"), make_arc((1.0, 1)))
    assert lim.kind is LimitKind.FINITE
    assert lim.value == pytest.approx(1.0, abs=1e-9)


def test_dump_csv(tmp_path):
    ts = np.array([0.1, 0.07])
    path = tmp_path / "probe.csv"
    dump_csv(path, ts, {"fx": np.array([1.0, 2.0]), "fy": np.array([3.0, 4.0])})
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "y,fx,fy"
    assert lines[1] == "0.1,1.0,3.0"
    assert len(lines) == 3
