"""Extended-precision norms of hyperbolic extremals with tiny clearance.

Far along the hyperbolic branch the two sides of the transport identity are
each about 1/d times larger than their difference, so double precision cannot
resolve the residual once d drops much below 1e-8.  This module re-evaluates
the five integrals with mpmath on a fixed composite Gauss-Legendre rule whose
panels are laid out in log(r - 1), which resolves the scale d without any
adaptive refinement.  The radial variable is always t = r - 1 and powers are
formed through expm1/log1p, so no step loses relative accuracy to cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import mpmath as mp

from .kernel import Params

__all__ = ["ExtendedIdentity", "AsymptoteExcess", "hyperbolic_identity_mp", "asymptote_excess_mp"]


@dataclass(frozen=True)
class ExtendedIdentity:
    """Normalized quantities of the hyperbolic extremal and the identity residual."""

    clearance: float
    T: float
    phi: float
    yT: float
    residual: float
    error: float
    dps: int


@lru_cache(maxsize=8)
def _gauss_rule(nodes: int, dps: int):
    with mp.workdps(dps):
        x, w = mp.gauss_quadrature(nodes, "legendre")
    return tuple(x), tuple(w)


def _cap_fraction(n: int, x):
    """Fraction of a sphere in R^n lying in a cap of normalized height x in [0, 1]."""
    if n == 2:
        return 2 * mp.asin(mp.sqrt(x)) / mp.pi
    if n == 3:
        return x
    if n == 4:
        # the two terms cancel to O(x^{3/2}); carry the lost digits as guard digits
        with mp.extradps(5 + int(max(0, -mp.log10(x))) if x > 0 else 5):
            return +(2 * (mp.asin(mp.sqrt(x)) - (1 - 2 * x) * mp.sqrt(x * (1 - x))) / mp.pi)
    if n == 5:
        return x * x * (3 - 2 * x)
    h = mp.mpf(n - 1) / 2
    return mp.betainc(h, h, 0, x, regularized=True)


def _panels(lo, hi, width):
    k = max(1, int(mp.ceil((hi - lo) / width)))
    step = (hi - lo) / k
    return [(lo + i * step, lo + (i + 1) * step) for i in range(k)]


def _graded_panels(lo, hi, width):
    """Panels in a log variable: doubling away from ``lo``, uniform across the
    unit scale where the profile bends, and wide in the power-law tail."""
    knee_lo, knee_hi = mp.mpf(-3), mp.mpf(5)
    edges = [lo]
    step = width / 2
    while edges[-1] + 2 * step < min(knee_lo, hi):
        edges.append(edges[-1] + step)
        step *= 2
    out = [(a, b) for a, b in zip(edges[:-1], edges[1:])]
    mid_lo = edges[-1]
    if mid_lo < knee_hi:
        out += _panels(mid_lo, min(knee_hi, hi), width)
    if hi > knee_hi:
        out += _panels(max(mid_lo, knee_hi), hi, 4 * width)
    return out


def _integrate(fun, panels, rule):
    """Sum of composite Gauss rules; ``fun`` returns a list of integrand values."""
    nodes, weights = rule
    total = None
    for a, b in panels:
        half = (b - a) / 2
        mid = (a + b) / 2
        for x, w in zip(nodes, weights):
            vals = fun(mid + half * x)
            if total is None:
                total = [0] * len(vals)
            for i, v in enumerate(vals):
                total[i] += w * half * v
    return total


def _evaluate(params: Params, d, nodes: int, dps: int, width: float, digits: int):
    n = params.n
    p = mp.mpf(params.p)
    q = p / (p - 1)
    ps = n * p / (n - p)
    pz = (n - 1) * p / (n - p)
    expo = (p - n) / p
    rule = _gauss_rule(nodes, dps)
    a = 1 + d
    area_n = 2 * mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2)
    area_b = 2 * mp.pi ** (mp.mpf(n - 1) / 2) / mp.gamma(mp.mpf(n - 1) / 2)
    # decay rates in log r of the slowest bulk and trace integrands
    decay = min(mp.mpf(n - p) / (p - 1), mp.mpf(n - 1) / (p - 1))
    u_max = max(mp.mpf(4), digits * mp.log(10) / decay + 4)

    def shape(t):
        # U, |U'| and r^q at r = 1 + t
        lr = mp.log1p(t)
        w = mp.expm1(q * lr)  # r^q - 1
        rq = w + 1
        U = w ** expo
        dU = -expo * q * mp.exp((q - 1) * lr) * w ** (expo - 1)
        return U, dU, rq

    def bulk_at(t, jac):
        r = 1 + t
        U, dU, rq = shape(t)
        x = (t - d) / (2 * r)  # (r - a)/(2r)
        m = area_n * r ** (n - 1) * _cap_fraction(n, x) * jac
        Ups = U**ps
        return [Ups * m, dU**p * m, Ups * rq * m, U**pz * m]

    # near the boundary t = d(1 + w^2); farther out t = e^u
    near = _integrate(lambda w: bulk_at(d * (1 + w * w), 2 * d * w),
                      _panels(mp.mpf(0), mp.mpf(1), width / 4), rule)
    u0 = mp.log(2 * d)
    far = _integrate(lambda u: bulk_at(mp.exp(u), mp.exp(u)), _graded_panels(u0, u_max, width), rule)
    M, G, Y, I = (x + y for x, y in zip(near, far))

    def trace_at(rho, jac):
        rho2 = rho * rho
        # r - 1 = d + rho^2/(r + a) with r = sqrt(a^2 + rho^2)
        t = d + rho2 / (mp.sqrt(a * a + rho2) + a)
        U = shape(t)[0]
        return [area_b * U**pz * rho ** (n - 2) * jac]

    root = mp.sqrt(d)
    tr = _integrate(lambda rho: trace_at(rho, 1), _panels(mp.mpf(0), root, root * width / 4), rule)[0]
    tr += _integrate(lambda v: trace_at(mp.exp(v), mp.exp(v)),
                     _graded_panels(mp.log(root), u_max, width), rule)[0]

    N = M ** (1 / ps)
    T = tr ** (1 / pz) / N
    phi = G ** (1 / p) / N
    yT = (Y / M) ** ((p - 1) / p)
    Ib = I / N**pz
    lhs = pz * phi * yT - a * T**pz
    return T, phi, yT, (lhs - n * Ib) / (n * Ib)


def hyperbolic_identity_mp(params: Params, clearance: float, dps: int = 40,
                           nodes: int = 20, width: float = 1.0, digits: int = 30) -> ExtendedIdentity:
    """Identity residual of the hyperbolic extremal with the given clearance, in mpmath.

    The hyperbolic member is the unit profile centred at -(1 + d) e_1.  Each
    panel carries a ``nodes``-point Gauss-Legendre rule, and the error is the
    change in every reported quantity when all panels are halved.  Integrands are truncated once their tail falls below
    10**-digits relative to the total.
    """
    if not clearance > 0:
        raise ValueError("clearance must be positive")
    if params.p >= params.n:
        raise ValueError("the hyperbolic family needs p < n")
    with mp.workdps(dps):
        d = mp.mpf(clearance)
        coarse = _evaluate(params, d, nodes, dps, width, digits)
        fine = _evaluate(params, d, nodes, dps, width / 2, digits)
        err = max(abs(x - y) / abs(y) for x, y in zip(coarse[:3], fine[:3]))
        err = max(err, abs(coarse[3] - fine[3]))
        T, phi, yT, res = fine
        return ExtendedIdentity(float(clearance), float(T), float(phi), float(yT),
                                float(abs(res)), float(err), dps)


@dataclass(frozen=True)
class AsymptoteExcess:
    """Phi(T) / (T^{p#}/p#) - 1 at the hyperbolic member solved for T in mpmath."""

    T: float
    clearance: float
    excess: float
    error: float


def asymptote_excess_mp(params: Params, T: float, clearance: float, dps: int = 50,
                        nodes: int = 20, width: float = 1.0, digits: int = 40,
                        max_iter: int = 30) -> AsymptoteExcess:
    """Relative excess of Phi over the asymptote T^{p#}/p#, resolved beyond double precision.

    ``clearance`` is a starting guess (the double solve); the member is re-solved
    by secant iteration on log d until its trace ratio equals T to working
    precision.  The error compares against the same member on panels twice as
    wide, plus a rounding floor.
    """
    if params.p >= params.n or not T > 0 or not clearance > 0:
        raise ValueError("needs p < n, T > 0 and a positive clearance guess")
    with mp.workdps(dps):
        target = mp.log(mp.mpf(T))
        tol = mp.mpf(10) ** (8 - dps)

        def trace_gap(u):
            vals = _evaluate(params, mp.exp(u), nodes, dps, width / 2, digits)
            return mp.log(vals[0]) - target, vals

        u0 = mp.log(mp.mpf(clearance))
        u1 = u0 + mp.mpf("1e-6")
        g0, _ = trace_gap(u0)
        g1, vals = trace_gap(u1)
        for _ in range(max_iter):
            if abs(g1) < tol or g1 == g0:
                break
            u0, g0, u1 = u1, g1, u1 - g1 * (u1 - u0) / (g1 - g0)
            g1, vals = trace_gap(u1)
        else:
            raise RuntimeError(f"secant solve for T = {T!r} did not converge")
        if abs(g1) >= tol:
            raise RuntimeError(f"secant solve for T = {T!r} stalled at log-mismatch {float(g1):.3g}")
        pz = mp.mpf(params.n - 1) * params.p / (params.n - params.p)

        def excess(v):
            return v[1] * pz / v[0] ** pz - 1

        fine = excess(vals)
        coarse = excess(_evaluate(params, mp.exp(u1), nodes, dps, width, digits))
        # the residual log-mismatch moves T^{p#} by about p# |g1|
        err = abs(fine - coarse) + pz * abs(g1) + mp.mpf(10) ** (10 - dps)
        return AsymptoteExcess(float(T), float(mp.exp(u1)), float(fine), float(err))
