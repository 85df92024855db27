import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from trace_sobolev_lab.binding import build_split_function, split_complement
from trace_sobolev_lab.kernel import Params
from trace_sobolev_lab.stability import (
    BumpTerm,
    PerturbationMode,
    PerturbationSpec,
    StabilityRow,
    TestFunction,
    annulus_cutoff_norm,
    annulus_trace_check,
    deficit,
    distance_to_extremals,
    extremal_test_function,
    function_norms,
    glue_quadratic_stability,
    perturbation_family,
    slope_fit,
    stability_ratio_scan,
)


def test_extremal_has_zero_deficit_and_distance(P32, consts32):
    u = extremal_test_function(consts32.T0, P32)
    rep = deficit(u, P32)
    assert rep.T == pytest.approx(consts32.T0, rel=1e-10)
    assert abs(rep.delta) <= rep.delta_tol
    d = distance_to_extremals(u, rep.T, P32)
    assert d.distance < 1e-10
    assert d.alpha == pytest.approx(1.0, rel=1e-6)
    assert d.offset_check


def test_symmetries_keep_distance_zero(P32):
    u = extremal_test_function(1.0, P32).dilated(1.7).translated(0.3)
    nm = function_norms(u)
    assert nm.mass == pytest.approx(1.0, rel=1e-10)
    d = distance_to_extremals(u, nm.T(P32), P32)
    assert d.distance < 1e-10
    assert d.alpha == pytest.approx(1.7, rel=1e-6)


def test_sign_flip_is_an_extremal(P32):
    u = extremal_test_function(1.0, P32)
    flipped = u.with_scale(-1.0)
    d = distance_to_extremals(flipped, 1.0, P32, check_offset=False)
    assert d.sign == -1 and d.distance < 1e-10


@pytest.mark.parametrize("mode", list(PerturbationMode))
def test_perturbation_family_normalized(P32, consts32, mode):
    u0 = perturbation_family(PerturbationSpec(consts32.T0, mode, 0.0), P32)
    assert len(u0.terms) == 1
    u = perturbation_family(PerturbationSpec(consts32.T0, mode, 0.1), P32)
    nm = function_norms(u)
    assert nm.mass == pytest.approx(1.0, rel=1e-10)
    rep = deficit(u, P32)
    assert rep.delta > rep.delta_tol
    d = distance_to_extremals(u, rep.T, P32)
    assert d.distance > 0 and d.converged and d.offset_check


def test_perturbation_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec(1.0, "dilationBlend", 0.7)
    with pytest.raises(ValueError):
        PerturbationSpec(0.0, "dilationBlend", 0.1)
    with pytest.raises(ValueError):
        PerturbationSpec(1.0, "wiggle", 0.1)


def test_scan_marks_zero_epsilon_undefined(P32, consts32):
    rows = stability_ratio_scan(consts32.T0, [0.0, 0.1], "dilationBlend", P32)
    assert rows[0].flags == "undefined" and math.isnan(rows[0].ratio)
    assert rows[1].ratio > 0
    assert list(rows[1].record()) == ["epsilon", "T", "delta", "distance", "ratio", "flags"]


def test_scan_flags_non_quadratic_exponent(P215, consts215):
    rows = stability_ratio_scan(consts215.T0, [0.1], "dilationBlend", P215)
    assert "no-quadratic-law" in rows[0].flags


@given(st.floats(0.5, 4.0), st.floats(0.1, 10.0))
def test_slope_fit_recovers_power_laws(k, c):
    x = np.geomspace(0.02, 0.2, 7)
    assert slope_fit(x, c * x**k) == pytest.approx(k, rel=1e-10)


@pytest.mark.parametrize("n", [2, 3])
def test_annulus_cutoff_norm_independent(n):
    def ramp(r, a):
        t = r - a
        return (30 * t * t * (1 - t) ** 2) ** n * r ** (n - 1)

    total = integrate.quad(ramp, 1, 2, args=(1,), epsabs=0, epsrel=1e-13)[0] + \
        integrate.quad(ramp, 7, 8, args=(7,), epsabs=0, epsrel=1e-13)[0]
    area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    expected = (0.5 * area * total) ** (1 / n)
    assert annulus_cutoff_norm(Params(n, 1.5)) == pytest.approx(expected, rel=1e-12)


def test_annulus_check_extremal(P32, consts32):
    u = extremal_test_function(consts32.T0, P32)
    chk = annulus_trace_check(u, 20.0, 1e-3, P32)
    assert chk.applicable and chk.passed
    assert 0 < chk.lhs < chk.rhs
    # a precondition that fails makes the check not applicable
    assert annulus_trace_check(u, 0.2, 1e-6, P32).passed is None


def test_annulus_check_compact_bump(P32):
    u = TestFunction((BumpTerm(1.0, 0.0, 0.5),), P32)
    chk = annulus_trace_check(u, 1.0, 1e-12, P32)
    assert chk.lhs == 0.0 and chk.annulus_mass == 0.0 and chk.passed


def test_annulus_check_split(P215, consts215):
    spec = split_complement(consts215.T0, 2 ** (-1 / P215.p_star), consts215.T0 * 2 ** (-1 / P215.p_sharp), P215)
    sc = build_split_function(spec, 8.0, None, P215)
    chk = annulus_trace_check(sc, 2.0, None, P215)
    assert chk.applicable and chk.passed
    assert chk.lhs > 0 and chk.annulus_mass > 0


def test_split_deficit_uses_construction_energy(P215, consts215):
    spec = split_complement(consts215.T0, 2 ** (-1 / P215.p_star), consts215.T0 * 2 ** (-1 / P215.p_sharp), P215)
    sc = build_split_function(spec, 8.0, None, P215)
    rep = deficit(sc, P215)
    assert rep.delta == pytest.approx(sc.w_energy - sc.lhs, rel=1e-12)
    with pytest.raises(TypeError):
        distance_to_extremals(sc, consts215.T0, P215)


def test_gluing_constant_and_branches(P32):
    rows = [StabilityRow(0.1, 1.3, 0.01, 0.1, 1.0), StabilityRow(0.2, 1.3, 2.0, 0.5, 8.0),
            StabilityRow(0.0, 1.3, 0.0, 0.0, math.nan, "undefined")]
    rep = glue_quadratic_stability(rows, alpha_T=0.6, delta0=0.4, params=P32, grad_energies=[3.5, 4.0, 3.4])
    assert rep.alpha_prime == pytest.approx(0.1)
    assert [r["branch"] for r in rep.rows] == ["local", "large"]
    assert rep.rows[1]["distanceBoundOk"] is True
    assert rep.consistent
    with pytest.raises(ValueError):
        glue_quadratic_stability(rows, 0.6, 0.4, Params(2, 1.5))
    with pytest.raises(ValueError):
        glue_quadratic_stability(rows, 0.6, 1.4, P32)


def test_concentration_radius_scales_with_dilation(P32, consts32):
    from trace_sobolev_lab.stability import concentration_radius
    u = extremal_test_function(consts32.T0, P32)
    r = concentration_radius(u)
    # U_{T0} is the full-space bubble centred on the boundary: half of the
    # half-space mass sits in B_r, so the radius matches the full-space quantile
    assert r > 0
    assert concentration_radius(u.dilated(2.5)) == pytest.approx(2.5 * r, rel=1e-8)
    with pytest.raises(ValueError):
        concentration_radius(u, fraction=1.0)


def test_concentration_radius_matches_radial_oracle(P32, consts32):
    from scipy import integrate, optimize
    from trace_sobolev_lab.stability import concentration_radius
    # U_{T0} for (3, 2) is (1 + r^2)^{-1/2} up to scale; mass density r^2 (1 + r^2)^{-3}
    def frac(x):
        return integrate.quad(lambda r: r * r / (1 + r * r) ** 3, 0, x)[0] / (math.pi / 16)
    x_half = optimize.brentq(lambda x: frac(x) - 0.5, 1e-3, 1e3, xtol=1e-14)
    x_quarter = optimize.brentq(lambda x: frac(x) - 0.25, 1e-3, 1e3, xtol=1e-14)
    u = extremal_test_function(consts32.T0, P32)
    ratio = concentration_radius(u) / concentration_radius(u, fraction=0.25)
    assert ratio == pytest.approx(x_half / x_quarter, rel=1e-8)
