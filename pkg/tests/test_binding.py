import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trace_sobolev_lab.axisym import AxisBall, axisym_quad
from trace_sobolev_lab.binding import (
    GAP_COLUMNS,
    ConeSpec,
    PhiTable,
    SplitSpec,
    binding_gap,
    build_split_function,
    cone_for_split,
    corner_path,
    finite_partition_check,
    proof_side_bound,
    scan_binding_grid,
    split_complement,
    split_energy_convergence,
)
from trace_sobolev_lab.kernel import Params, QuadratureConfig, adaptive_quad, sphere_area


def test_split_complement_arithmetic(P32):
    s = split_complement(1.0, 0.6, 0.3, P32)
    assert s.m2 == pytest.approx((1 - 0.6**6) ** (1 / 6), rel=1e-15)
    assert s.t2 == pytest.approx((1 - 0.3**4) ** (1 / 4), rel=1e-15)
    assert s.T1 == pytest.approx(0.5, rel=1e-15)
    assert s.T2 == pytest.approx(s.t2 / s.m2, rel=1e-15)


def test_split_spec_validation(P32):
    with pytest.raises(ValueError):
        SplitSpec(1.0, 0.6, 0.6, 0.3, 0.3, P32)
    with pytest.raises(ValueError):
        split_complement(1.0, 1.2, 0.3, P32)
    with pytest.raises(ValueError):
        split_complement(1.0, 0.5, 1.5, P32)


@given(st.floats(0.05, 0.95), st.floats(0.0, 1.0))
def test_gap_swap_symmetry_and_sign(m1, f):
    P = Params(3, 2.0)
    table = _table(P)
    spec = split_complement(1.3, m1, 1.3 * f, P)
    g = binding_gap(spec, P, table=table)
    h = binding_gap(spec.swapped(), P, table=table)
    assert g.gap == h.gap
    assert g.gap > 0 and g.certified


_TABLES = {}


def _table(P):
    if P not in _TABLES:
        _TABLES[P] = PhiTable(P)
    return _TABLES[P]


def test_phi_table_zero_trace_is_sobolev_constant(P32, consts32):
    phi, err = _table(P32)(0.0)
    assert phi == pytest.approx(consts32.S, rel=1e-14)
    assert 0 < err < 1e-8


def test_gap_record_schema(P32):
    rec = binding_gap(split_complement(1.0, 0.6, 0.3, P32), P32, table=_table(P32)).record()
    assert tuple(rec) == GAP_COLUMNS and len(GAP_COLUMNS) == 10


def test_small_grid_scan(P215, consts215):
    scan = scan_binding_grid(consts215.T0, 6, P215, margin=0.05, table=_table(P215))
    assert len(scan.table) == 36
    assert scan.min_certified and scan.min_gap > 0
    with pytest.raises(ValueError):
        scan_binding_grid(1.0, 3, P215)
    with pytest.raises(ValueError):
        scan_binding_grid(1.0, 8, P215, margin=0.6)


@pytest.mark.parametrize("n,p", [(3, 2.0), (2, 1.5)])
def test_corner_path_gap_behaves_like_m2_to_the_p(n, p):
    """As m2 -> 0 with T2 = T the gap is m2^p Phi(T)^p to leading order."""
    P = Params(n, p)
    m2s = [0.2, 0.1, 0.05, 0.02, 0.01]
    rows = corner_path(1.3, m2s, P, table=_table(P))
    gaps = [r.gap for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    last = rows[-1]
    assert last.gap / last.lhs == pytest.approx(0.01**p, rel=0.05)


def test_finite_partitions_hold(P32):
    rng = np.random.default_rng(7)
    for parts in (2, 3, 5):
        chk = finite_partition_check(1.4, parts, P32, rng, table=_table(P32))
        assert chk.holds
        assert math.fsum(m ** P32.p_star for m in chk.masses) == pytest.approx(1.0)
        assert math.fsum(t ** P32.p_sharp for t in chk.traces) == pytest.approx(1.4**P32.p_sharp)
    with pytest.raises(ValueError):
        finite_partition_check(1.0, 1, P32, rng)


def test_proof_side_bound_positive(P32, consts32):
    spec = split_complement(consts32.T0, 2 ** (-1 / 6), consts32.T0 * 2 ** (-1 / 4), P32)
    res = proof_side_bound(spec, P32, grid=200)
    c0 = res["c0"] if isinstance(res, dict) else res.c0
    assert c0 > 0


def test_cone_membership():
    cone = cone_for_split(8.0, 24.0)
    assert isinstance(cone, ConeSpec)
    # flat double cone about z_n = 0: points far along e_n are outside
    pts = np.array([[0.0, 20.0], [0.0, -20.0], [100.0, 1.0], [0.0, 0.0]])
    inside = cone.contains(pts)
    assert list(inside) == [False, False, True, False]
    # every difference of points of the two bump balls lies outside the cone
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (500, 2)) * 8 / np.sqrt(2) + [0.0, 12.0]
    b = rng.uniform(-1, 1, (500, 2)) * 8 / np.sqrt(2) - [0.0, 12.0]
    assert not cone.contains(a - b).any()


def _symmetric(T, P):
    return split_complement(T, 2 ** (-1 / P.p_star), T * 2 ** (-1 / P.p_sharp), P)


def _requadrature(sc, P, cfg):
    """Mass, trace and energy of w bump by bump, on each bump's own axis."""
    n, ps, pz, p = P.n, P.p_star, P.p_sharp, P.p
    tangent = np.zeros(n)
    tangent[-1] = 1.0
    mass = trace = energy = 0.0
    for ctr in sc.centers():
        def pts(x1, rho):
            X = np.zeros(x1.shape + (n,))
            X[..., 0] = x1
            X[..., :] += rho[..., None] * tangent
            X[..., 0] = x1
            return (X + ctr).reshape(-1, n)

        def f(x1, rho):
            v, g = sc.value_grad(pts(x1, rho))
            v = v.reshape(x1.shape)
            gg = np.einsum("ij,ij->i", g, g).reshape(x1.shape)
            return np.stack([np.abs(v) ** ps, gg ** (0.5 * p)])

        R = sc.R
        bps = [0.5 * R] + [c.radius for c in sc.corrections] + [abs(c.center) + c.radius for c in sc.corrections]
        res = axisym_quad(f, n, balls=[AxisBall(0.0, R)], cfg=cfg, breakpoints=sorted(bps))
        mass += res.value[0]
        energy += res.value[1]
        area = sphere_area(n - 2)

        def tr(rho):
            v, _ = sc.value_grad(pts(np.zeros_like(rho), rho))
            return area * np.abs(v) ** pz * rho ** (n - 2)

        trace += adaptive_quad(tr, 0.0, R, cfg, sorted(b for b in bps if b < R)).value
    return mass, trace, energy


@pytest.mark.parametrize("n,p", [(3, 2.0), (2, 1.5)])
def test_split_construction_constraints_by_independent_quadrature(n, p):
    P = Params(n, p)
    from trace_sobolev_lab.curve import fundamental_constants

    c = fundamental_constants(P, estimate_t_star=False)
    sc = build_split_function(_symmetric(c.T0, P), 8.0, None, P)
    assert max(map(abs, sc.constraint_residuals)) <= 1e-10
    assert sc.w_energy >= sc.lhs - 1e-6
    assert sc.lower_mass >= 0.5
    mass, trace, energy = _requadrature(sc, P, QuadratureConfig(rel_tol=1e-11))
    assert mass ** (1 / P.p_star) == pytest.approx(1.0, abs=1e-8)
    assert trace ** (1 / P.p_sharp) == pytest.approx(c.T0, rel=1e-8)
    assert energy == pytest.approx(sc.w_energy, rel=1e-8)


def test_split_value_grad_finite_differences(P32, consts32):
    sc = build_split_function(_symmetric(consts32.T0, P32), 6.0, None, P32)
    rng = np.random.default_rng(3)
    X = rng.uniform([0.05, -2.0, 6.0], [4.0, 2.0, 12.0], size=(40, 3))
    _, g = sc.value_grad(X)
    h = 1e-6
    for k in range(3):
        E = np.zeros(3)
        E[k] = h
        fd = (sc.value_grad(X + E)[0] - sc.value_grad(X - E)[0]) / (2 * h)
        assert np.allclose(g[:, k], fd, rtol=1e-5, atol=1e-8)


def test_split_needs_disjoint_supports(P32, consts32):
    spec = _symmetric(consts32.T0, P32)
    with pytest.raises(ValueError):
        build_split_function(spec, 8.0, 10.0, P32)
    with pytest.raises(ValueError):
        build_split_function(spec, -1.0, None, P32)


def test_split_energy_converges_fast_above_TE(P32, consts32):
    """Hyperbolic profiles decay faster than any cutoff shell matters: the excess collapses."""
    rows = split_energy_convergence(_symmetric(2 * consts32.TE, P32), [4, 8, 16, 32], P32)
    ex = [r["excess"] for r in rows]
    assert all(b < a for a, b in zip(ex, ex[1:]))
    assert ex[-1] / rows[-1]["rhs"] < 1e-3
    assert all(max(map(abs, r["residuals"])) <= 1e-10 for r in rows)
    with pytest.raises(ValueError):
        split_energy_convergence(_symmetric(2 * consts32.TE, P32), [8, 4], P32)


def test_phi_table_below_invertible_range(P32, consts32):
    from trace_sobolev_lab.curve import smallest_solvable_T

    table = PhiTable(P32)
    t_min = smallest_solvable_T(P32)
    phi, err = table(1e-300)
    # pinned between Phi(T_min) and S by monotonicity
    assert abs(phi - consts32.S) <= err + 1e-15 * consts32.S
    assert err < 1e-12
    assert table(0.5 * t_min) == (phi, err)
