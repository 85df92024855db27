import math

import mpmath as mp
import pytest

from trace_sobolev_lab.curve import fundamental_constants, identity_check, phi_of_T
from trace_sobolev_lab.extended import _cap_fraction, hyperbolic_identity_mp
from trace_sobolev_lab.kernel import Params

from test_profiles import ORACLE

HYPER_CASES = [(np_, -s - 1.0, val) for np_, table in ORACLE.items()
               for (kind, s), val in table.items() if kind == "B"]


@pytest.mark.parametrize("np_,d,val", HYPER_CASES, ids=[f"{a}-d{d:.3g}" for a, d, _ in HYPER_CASES])
def test_matches_scipy_oracle(np_, d, val):
    res = hyperbolic_identity_mp(Params(*np_), d)
    T, phi, yT = val
    assert res.T == pytest.approx(T, rel=1e-9)
    assert res.phi == pytest.approx(phi, rel=1e-9)
    assert res.yT == pytest.approx(yT, rel=1e-9)
    assert res.residual < 1e-20


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_cap_fraction_closed_forms(n):
    h = mp.mpf(n - 1) / 2
    for x in (mp.mpf("1e-12"), mp.mpf("0.03"), mp.mpf("0.5"), mp.mpf("0.9")):
        ref = mp.betainc(h, h, 0, x, regularized=True)
        assert abs(_cap_fraction(n, x) - ref) <= 1e-14 * ref


@pytest.mark.parametrize("n,p", [(3, 2.0), (2, 1.5), (4, 2.5), (5, 3.0)])
def test_tiny_clearance_resolves_identity(n, p):
    res = hyperbolic_identity_mp(Params(n, p), 1e-15)
    assert res.error < 1e-10
    assert res.residual < 1e-10


def test_error_estimate_bounds_finer_rule():
    P = Params(3, 2.0)
    base = hyperbolic_identity_mp(P, 1e-12)
    fine = hyperbolic_identity_mp(P, 1e-12, nodes=40, width=0.5)
    assert abs(base.T - fine.T) / fine.T <= base.error + 1e-15
    assert abs(base.phi - fine.phi) / fine.phi <= base.error + 1e-15


def test_validation():
    with pytest.raises(ValueError):
        hyperbolic_identity_mp(Params(3, 2.0), 0.0)
    with pytest.raises(ValueError):
        identity_check(1.0, Params(3, 2.0), precision="quad")


def test_auto_route_switches_on_error_bound():
    P = Params(2, 1.5)
    consts = fundamental_constants(P, estimate_t_star=False)
    low = identity_check(0.9 * consts.T0, P, consts=consts)
    assert low.route == "double" and low.error <= 1e-10
    T = 10 * consts.TE
    double = identity_check(T, P, consts=consts, precision="double")
    auto = identity_check(T, P, consts=consts)
    assert double.error > 1e-10
    assert auto.route == "extended"
    assert auto.residual < 1e-12
    # the double residual is consistent with its own bound
    assert double.residual <= double.error


def test_extended_route_needs_hyperbolic_point():
    P = Params(3, 2.0)
    with pytest.raises(ValueError):
        identity_check(1.0, P, precision="extended")


def test_extended_member_matches_double_solve():
    P = Params(4, 2.5)
    consts = fundamental_constants(P, estimate_t_star=False)
    pt = phi_of_T(3 * consts.TE, P, consts=consts)
    res = hyperbolic_identity_mp(P, pt.clearance)
    assert res.T == pytest.approx(3 * consts.TE, rel=1e-8)
    assert res.phi == pytest.approx(pt.phi, rel=1e-6)
    assert math.isfinite(res.error)
