import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trace_sobolev_lab.axisym import AxisBall, axisym_quad, compact_bump, radial_cutoff


def one(x1, rho):
    return np.ones_like(x1)


def test_half_ball_volume():
    for n, vol in [(2, math.pi / 2), (3, 2 * math.pi / 3)]:
        res = axisym_quad(one, n, balls=[AxisBall(0.0, 1.0)])
        assert res.value == pytest.approx(vol, rel=1e-12)


@given(st.floats(-0.9, 0.9))
def test_ball_cut_by_boundary(b):
    # portion of the unit ball about b e_1 with x_1 > 0: full ball minus a cap of height 1 - b
    h = 1.0 - b
    expected = 4 * math.pi / 3 - math.pi * h * h * (3 - h) / 3
    for center in (0.0, b, -0.5):
        res = axisym_quad(one, 3, center=center, balls=[AxisBall(b, 1.0)])
        assert res.value == pytest.approx(expected, rel=1e-10)
        # the reported error bound must cover the true error
        assert abs(res.value - expected) <= 10 * res.error + 1e-14 * expected


def test_gaussian_over_half_space_with_outside_center():
    for n in (2, 3, 4):
        res = axisym_quad(lambda x1, rho: np.exp(-(x1 * x1 + rho * rho)), n, center=-1.0)
        assert res.value == pytest.approx(0.5 * math.pi ** (n / 2), rel=1e-10)


def test_annulus_in_half_space():
    # half annulus 1 < |x| < 2 in the plane
    res = axisym_quad(one, 2, balls=[AxisBall(0.0, 2.0), AxisBall(0.0, 1.0, inside=False)])
    assert res.value == pytest.approx(0.5 * math.pi * 3, rel=1e-12)


def test_axis_ball_needs_positive_radius():
    with pytest.raises(ValueError):
        AxisBall(0.0, 0.0)


@given(st.floats(0.0, 3.0))
def test_radial_cutoff_derivative(r):
    v, d = radial_cutoff(r, 1.0, 2.0)
    h = 1e-6
    fd = (radial_cutoff(r + h, 1.0, 2.0)[0] - radial_cutoff(r - h, 1.0, 2.0)[0]) / (2 * h)
    assert 0.0 <= v <= 1.0
    assert float(d) == pytest.approx(float(fd), abs=1e-7)


def test_radial_cutoff_endpoints():
    v, d = radial_cutoff(np.array([0.5, 1.0, 2.0, 3.0]), 1.0, 2.0)
    assert list(v) == [1.0, 1.0, 0.0, 0.0]
    assert list(d) == [0.0, 0.0, 0.0, 0.0]
    assert radial_cutoff(1.5, 1.0, 2.0)[0] == pytest.approx(0.5)


@given(st.floats(0.0, 2.0), st.floats(0.2, 1.5))
def test_compact_bump_derivative(d2, a):
    v, dv = compact_bump(d2, a)
    h = 1e-7
    fd = (compact_bump(d2 + h, a)[0] - compact_bump(max(d2 - h, 0.0), a)[0]) / (d2 + h - max(d2 - h, 0.0))
    assert float(v) >= 0.0
    assert float(dv) == pytest.approx(float(fd), abs=1e-5 / a**4)
