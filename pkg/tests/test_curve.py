import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trace_sobolev_lab.curve import (
    fundamental_constants,
    phi_of_T,
    scan_curve,
    verify_transport_identity,
)
from trace_sobolev_lab.kernel import Params, sphere_area
from trace_sobolev_lab.profiles import ProfileFamily

from test_profiles import ORACLE, talenti_constant


def escobar_closed_form(n):
    """Sharp trace constant for p = 2: sqrt((n-2)/2 * |S^{n-1}|^{1/(n-1)})."""
    return math.sqrt(0.5 * (n - 2) * sphere_area(n - 1) ** (1 / (n - 1)))


@pytest.mark.parametrize("n,p", [(3, 2.0), (2, 1.5), (4, 2.5), (5, 3.0)])
def test_fundamental_constants(n, p):
    P = Params(n, p)
    c = fundamental_constants(P, estimate_t_star=False)
    table = ORACLE[(n, p)]
    esc = next(v for k, v in table.items() if k[0] == "E")
    assert c.S == pytest.approx(talenti_constant(n, p), rel=1e-10)
    assert c.TE == pytest.approx(esc[0], rel=1e-9)
    assert c.E == pytest.approx(esc[1] / esc[0], rel=1e-9)
    assert c.sobolev_floor == pytest.approx(c.S / 2 ** (1 / n), rel=1e-14)
    if ("S", 0.0) in table:
        assert c.T0 == pytest.approx(table[("S", 0.0)][0], rel=1e-9)
    assert c.T0 < c.TE


@pytest.mark.parametrize("n", [3, 4, 5])
def test_escobar_constant_closed_form(n):
    c = fundamental_constants(Params(n, 2.0), estimate_t_star=False)
    assert c.E == pytest.approx(escobar_closed_form(n), rel=1e-10)


def test_special_points(P32, consts32):
    assert phi_of_T(consts32.T0, P32).phi == pytest.approx(consts32.sobolev_floor, rel=1e-10)
    assert phi_of_T(consts32.TE, P32).phi == pytest.approx(consts32.E * consts32.TE, rel=1e-10)


@pytest.mark.parametrize("key", [("S", 2.0), ("S", -3.0), ("B", -3.0), ("B", -1.1), ("B", -1.01)])
def test_inversion_recovers_oracle_profiles(P32, consts32, key):
    T, phi, _ = ORACLE[(3, 2.0)][key]
    pt = phi_of_T(T, P32, consts=consts32, with_error=True)
    assert pt.phi == pytest.approx(phi, rel=1e-9)
    expect = ProfileFamily.SOBOLEV if key[0] == "S" else ProfileFamily.HYPERBOLIC
    assert pt.regime is expect
    if key[0] == "S":
        assert pt.s == pytest.approx(key[1], rel=1e-7, abs=1e-9)
    else:
        assert pt.clearance == pytest.approx(-key[1] - 1.0, rel=1e-7)
    assert pt.phi_err < 1e-8 * pt.phi


def test_regimes_around_TE(P215, consts215):
    TE = consts215.TE
    assert phi_of_T(0.99 * TE, P215, consts=consts215).regime is ProfileFamily.SOBOLEV
    assert phi_of_T(TE, P215, consts=consts215).regime is ProfileFamily.ESCOBAR
    assert phi_of_T(1.01 * TE, P215, consts=consts215).regime is ProfileFamily.HYPERBOLIC


@pytest.mark.parametrize("T", [0.3, 0.9, 1.3, 1.6, 2.5])
def test_transport_identity_moderate_T(P32, consts32, T):
    assert verify_transport_identity(T, P32, consts=consts32) < 1e-10


@given(st.floats(0.2, 6.0))
def test_phi_above_linear_floor_and_asymptote(T):
    P = Params(3, 2.0)
    c = fundamental_constants(P, estimate_t_star=False)
    pt = phi_of_T(T, P, consts=c, with_error=True)
    tol = pt.phi_err + 1e-12 * pt.phi
    assert pt.phi >= max(c.E * T, c.sobolev_floor) - tol
    assert pt.phi > T**P.p_sharp / P.p_sharp


def test_scan_rejects_bad_grids(P32):
    for grid in ([], [1.0, 0.5], [0.0, 1.0], [[1.0, 2.0]]):
        with pytest.raises(ValueError):
            scan_curve(grid, P32)


def test_scan_small_grid_certificates(P32, consts32):
    grid = np.concatenate([np.linspace(0.3, consts32.T0 * 0.99, 6), np.linspace(consts32.T0, 4.0, 10)])
    scan = scan_curve(grid, P32, consts=consts32)
    for key in ("decreasing_below_T0", "increasing_above_T0", "convex_above_T0",
                "above_asymptote", "above_linear_and_floor", "tail_ratio_decreasing"):
        assert scan.shape_report[key], key
    assert [pt.record()["regime"] for pt in scan.points[:2]] == ["SobolevRegime"] * 2


def test_phi_point_record_columns(P32, consts32):
    rec = phi_of_T(1.0, P32, consts=consts32).record()
    assert list(rec) == ["T", "regime", "s", "phi", "yT"]


@pytest.mark.parametrize("n,p", [(3, 2.0), (2, 1.5)])
def test_tiny_T_uses_power_law_start(n, p):
    from trace_sobolev_lab.curve import smallest_solvable_T

    P = Params(n, p)
    c = fundamental_constants(P, estimate_t_star=False)
    t_min = smallest_solvable_T(P)
    assert 0 < t_min < 1e-8
    for T in (1e-4, 1e-7, 3 * t_min):
        pt = phi_of_T(T, P, consts=c)
        assert pt.regime is ProfileFamily.SOBOLEV
        assert pt.extremal.T == pytest.approx(T, rel=1e-10)
        assert c.sobolev_floor < pt.phi <= c.S * (1 + 1e-14)
    with pytest.raises(ValueError):
        phi_of_T(0.5 * t_min, P, consts=c)


@pytest.mark.parametrize("offset", [2.6e-9, 1e-7, 1e-5])
def test_hyperbolic_solve_just_above_TE(P32, consts32, offset):
    # the solving member sits far from the boundary (large clearance)
    T = consts32.TE * (1 + offset)
    pt = phi_of_T(T, P32, consts=consts32, with_error=True)
    assert pt.regime is ProfileFamily.HYPERBOLIC
    assert pt.clearance > 10
    assert pt.extremal.T == pytest.approx(T, rel=1e-13)
    assert pt.phi_err < 1e-12
    # the curve is tangent to the Escobar line at TE
    assert pt.phi == pytest.approx(consts32.E * T, rel=10 * offset)
    below = phi_of_T(consts32.TE * (1 - offset), P32, consts=consts32)
    assert below.phi < pt.phi
