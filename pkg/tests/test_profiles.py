import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trace_sobolev_lab.kernel import Params
from trace_sobolev_lab.profiles import (
    ProfileFamily,
    TranslatedProfile,
    eval_profile,
    full_space_sobolev_ratio,
    normalize,
    trace_ratio,
)

# (T, phi, Y_T) of the unit-mass normalised translates, computed independently with
# scipy.integrate.quad on the radial form (bulk integrand times spherical-cap fraction,
# trace integrand on the boundary plane) at epsrel 1e-12.
ORACLE = {
    (3, 2.0): {
        ("S", 2.0): (0.7685164653422507, 2.1136084590260853, 1.5748563919259215),
        ("S", 0.0): (1.285540732229639, 1.8576499497625667, 1.732050807568877),
        ("S", -3.0): (1.4752335006735473, 1.964294936060804, 7.626992035636582),
        ("E", -1.0): (1.482931297468476, 1.974278878406177, 2.449489742783178),
        ("B", -3.0): (1.4918081975864637, 1.986453134914681, 7.0546319224562355),
        ("B", -1.1): (1.6451605235587687, 2.3213557038040658, 1.6243999359078187),
        ("B", -1.01): (1.9336448869073795, 3.6975031561489655, 1.1058216384958661),
    },
    (2, 1.5): {
        ("S", 2.0): (0.6649772750365744, 2.196218244488316, 1.1766880186109838),
        ("S", 0.0): (1.2904907420478493, 1.7862817694632551, 1.2599210498948734),
        ("E", -1.0): (1.5446252869781714, 1.9461059132637073, 1.8936641128199845),
        ("B", -1.1): (1.666774596058343, 2.1368429094918118, 1.640959137219588),
        ("B", -1.01): (1.9256719080095959, 2.78286294136389, 1.1979092295975984),
    },
    (4, 2.5): {
        ("S", 0.0): (1.246634300962594, 1.7812285151860876, 2.2973967099940658),
        ("E", -2.0): (1.4028241963991699, 1.8681896856658753, 5.816011630783907),
        ("B", -1.1): (1.5723716692839511, 2.3295401348413285, 1.5438053294453502),
    },
    (5, 3.0): {
        ("S", 2.0): (0.8850120222706719, 1.7953286030110522, 2.578493307430242),
        ("E", -1.0): (1.3397170743989624, 1.748066905021606, 3.3076572762851586),
        ("B", -1.01): (1.7426117250263184, 4.761677449520667, 1.0423604492774812),
    },
}

CASES = [(np_, key, val) for np_, table in ORACLE.items() for key, val in table.items()]


def _profile(kind, s, P):
    if kind == "S":
        return TranslatedProfile(ProfileFamily.SOBOLEV, s, P)
    if kind == "E":
        return TranslatedProfile(ProfileFamily.ESCOBAR, s, P)
    return TranslatedProfile.hyperbolic(P, -s - 1.0)


def talenti_constant(n, p):
    """Sharp full-space Sobolev constant from its closed form."""
    g = math.gamma
    inv = (math.pi ** -0.5 * n ** (-1 / p) * ((p - 1) / (n - p)) ** (1 - 1 / p)
           * (g(1 + n / 2) * g(n) / (g(n / p) * g(1 + n - n / p))) ** (1 / n))
    return 1.0 / inv


@pytest.mark.parametrize("np_,key,val", CASES, ids=[f"{a}-{k[0]}{k[1]}" for a, k, _ in CASES])
def test_normalized_norms_match_oracle(np_, key, val):
    P = Params(*np_)
    ext = normalize(_profile(*key, P))
    T, phi, yT = val
    assert ext.T == pytest.approx(T, rel=1e-9)
    assert ext.phi == pytest.approx(phi, rel=1e-9)
    assert ext.yT == pytest.approx(yT, rel=1e-9)
    assert ext.rel_error < 1e-8


@pytest.mark.parametrize("n,p", [(3, 2.0), (2, 1.5), (4, 2.5), (5, 3.0), (3, 1.5)])
def test_full_space_constant_closed_form(n, p):
    S, rel = full_space_sobolev_ratio(Params(n, p))
    assert S == pytest.approx(talenti_constant(n, p), rel=1e-10)
    assert rel < 1e-9


def test_trace_ratio_agrees_with_normalize(P32):
    for kind, s in [("S", 2.0), ("B", -1.1)]:
        tp = _profile(kind, s, P32)
        assert trace_ratio(tp.family, tp.s, P32, clearance=tp.clearance) == pytest.approx(
            normalize(tp).T, rel=1e-12)


def test_eval_profile_domain_checks(P32):
    with pytest.raises(ValueError):
        eval_profile("HyperbolicRegime", np.array([0.5, 2.0]), P32)
    with pytest.raises(ValueError):
        eval_profile("EscobarRegime", 0.0, P32)
    with pytest.raises(ValueError):
        eval_profile("SobolevRegime", -1.0, P32)
    v, g = eval_profile("SobolevRegime", 0.0, P32)
    assert v == 1.0 and g == 0.0


def test_translate_validation(P32):
    with pytest.raises(ValueError):
        TranslatedProfile(ProfileFamily.ESCOBAR, 0.5, P32)
    with pytest.raises(ValueError):
        TranslatedProfile(ProfileFamily.HYPERBOLIC, -0.5, P32)
    with pytest.raises(ValueError):
        TranslatedProfile(ProfileFamily.SOBOLEV, 0.0, P32, scale=0.0)
    tp = TranslatedProfile.hyperbolic(P32, 1e-30)
    assert tp.clearance == 1e-30
    assert tp.s == -1.0


@given(st.sampled_from(["S", "E", "B"]), st.floats(0.05, 3.0), st.floats(0.0, 3.0))
def test_gradient_matches_central_differences(kind, x1, rho):
    P = Params(3, 2.0)
    tp = {"S": TranslatedProfile(ProfileFamily.SOBOLEV, 0.7, P),
          "E": TranslatedProfile(ProfileFamily.ESCOBAR, -0.6, P),
          "B": TranslatedProfile.hyperbolic(P, 0.3, scale=0.8)}[kind]
    h = 1e-6
    _, g1, gr = tp.value_grad(x1, rho)
    d1 = (tp.value_grad(x1 + h, rho)[0] - tp.value_grad(x1 - h, rho)[0]) / (2 * h)
    dr = (tp.value_grad(x1, rho + h)[0] - tp.value_grad(x1, rho - h)[0]) / (2 * h)
    assert float(g1) == pytest.approx(float(d1), rel=1e-6, abs=1e-8)
    assert float(gr) == pytest.approx(float(dr), rel=1e-6, abs=1e-8)


@given(st.sampled_from(["S", "B"]), st.floats(0.3, 4.0))
def test_dilation_invariance(kind, alpha):
    """Both ratios are scale invariant, so dilating the shape leaves T and Phi fixed."""
    P = Params(3, 2.0)
    tp = _profile(kind, 1.5 if kind == "S" else -1.2, P)
    a, b = normalize(tp), normalize(tp.dilate(alpha))
    assert b.T == pytest.approx(a.T, rel=1e-9)
    assert b.phi == pytest.approx(a.phi, rel=1e-9)
