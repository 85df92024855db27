"""Solving T -> Phi_H(T) from the extremal families, and certifying the curve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import Bracket, BracketError, Params, QuadratureConfig, find_root_bracketed
from .profiles import (
    NormalizedExtremal,
    ProfileFamily,
    TranslatedProfile,
    full_space_sobolev_ratio,
    normalize,
    trace_ratio,
)

__all__ = [
    "PhiPoint",
    "FundamentalConstants",
    "CurveScan",
    "MonotonicityDiagnostic",
    "fundamental_constants",
    "solve_s_for_T",
    "phi_of_T",
    "verify_transport_identity",
    "identity_check",
    "IdentityCheck",
    "scan_curve",
    "smallest_solvable_T",
]

REGIME_TOL = 1e-9
# beyond this translation the bulk and trace integrands leave double range for some (n, p)
SOBOLEV_S_LIMIT = 1e18


class MonotonicityDiagnostic(RuntimeError):
    """T(s) was found non-monotone while bracketing; the bracketed solve cannot be trusted."""


@dataclass(frozen=True)
class PhiPoint:
    T: float
    regime: ProfileFamily
    s: float
    phi: float
    yT: float
    clearance: float | None = None
    extremal: NormalizedExtremal | None = field(default=None, compare=False, repr=False)
    phi_err: float = 0.0

    def record(self) -> dict:
        return {"T": self.T, "regime": self.regime.value, "s": self.s,
                "phi": self.phi, "yT": self.yT}


@dataclass(frozen=True)
class FundamentalConstants:
    S: float
    E: float
    TE: float
    T0: float
    sobolev_floor: float
    phi_T0: float
    T_star_estimate: float | None = None
    T_star_bracket: tuple[float, float] | None = None

    def record(self) -> dict:
        return {"S": self.S, "E": self.E, "TE": self.TE, "T0": self.T0,
                "sobolevFloor": self.sobolev_floor,
                "TStarEstimate": self.T_star_estimate}


@dataclass
class CurveScan:
    points: list[PhiPoint]
    shape_report: dict
    failures: dict


_CONSTANTS_CACHE: dict = {}


def _key(params, cfg):
    return (params.n, params.p, cfg.rel_tol, cfg.abs_tol, cfg.max_depth)


def fundamental_constants(params: Params, cfg: QuadratureConfig | None = None,
                          estimate_t_star: bool = True) -> FundamentalConstants:
    cfg = cfg or QuadratureConfig()
    key = _key(params, cfg) + (estimate_t_star,)
    if key in _CONSTANTS_CACHE:
        return _CONSTANTS_CACHE[key]
    S, _ = full_space_sobolev_ratio(params, cfg)
    esc = normalize(TranslatedProfile(ProfileFamily.ESCOBAR, -1.0, params), cfg)
    sob0 = normalize(TranslatedProfile(ProfileFamily.SOBOLEV, 0.0, params), cfg)
    TE = esc.T
    E = esc.phi / esc.T
    floor = S / 2.0 ** (1.0 / params.n)
    consts = FundamentalConstants(S, E, TE, sob0.T, floor, sob0.phi)
    if estimate_t_star:
        est, br = _estimate_t_star(consts, params, cfg)
        consts = FundamentalConstants(S, E, TE, sob0.T, floor, sob0.phi, est, br)
    _CONSTANTS_CACHE[key] = consts
    return consts


def _estimate_t_star(consts, params, cfg, count=41):
    """First concave-to-convex sign change of second differences on (0, T0).

    Only an estimate with grid-resolution bars; nothing downstream relies on it.
    """
    grid = consts.T0 * np.linspace(0.02, 0.98, count)
    phis = np.array([pt.phi for pt in _solve_grid(grid, params, cfg, consts)])
    d2 = phis[2:] - 2 * phis[1:-1] + phis[:-2]
    for i in range(1, d2.size):
        if d2[i - 1] < 0 <= d2[i]:
            lo, hi = grid[i], grid[i + 1]
            return 0.5 * (lo + hi), (float(lo), float(hi))
    return None, None


def _sobolev_T(s, params, cfg):
    return trace_ratio(ProfileFamily.SOBOLEV, s, params, cfg)


def _hyper_T(log_d, params, cfg):
    return trace_ratio(ProfileFamily.HYPERBOLIC, None, params, cfg, clearance=math.exp(log_d))


def _expand(fun, target, x0, step, lo_limit, hi_limit, decreasing=True):
    """Grow a bracket around x0 until fun - target changes sign (fun monotone)."""
    lo, hi = x0 - step, x0 + step
    f_lo, f_hi = fun(lo), fun(hi)
    sign = 1.0 if decreasing else -1.0
    while sign * (f_lo - target) < 0:
        if lo <= lo_limit:
            raise BracketError(lo, hi, f_lo - target, f_hi - target)
        hi, f_hi = lo, f_lo
        step *= 2.0
        lo = max(lo - step, lo_limit)
        f_new = fun(lo)
        if sign * (f_new - f_lo) < 0:
            raise MonotonicityDiagnostic(f"trace ratio not monotone near {lo!r}")
        f_lo = f_new
    while sign * (f_hi - target) > 0:
        if hi >= hi_limit:
            raise BracketError(lo, hi, f_lo - target, f_hi - target)
        lo, f_lo = hi, f_hi
        step *= 2.0
        hi = min(hi + step, hi_limit)
        f_new = fun(hi)
        if sign * (f_new - f_hi) > 0:
            raise MonotonicityDiagnostic(f"trace ratio not monotone near {hi!r}")
        f_hi = f_new
    return Bracket(lo, hi)


def _power_law_start(fun, T, s_ref=1e3):
    """Far from the boundary T(s) ~ c s^{-k}; extrapolate from two reference points."""
    t1, t2 = fun(s_ref), fun(2.0 * s_ref)
    k = math.log(t1 / t2) / math.log(2.0)
    log_s = math.log(s_ref) + (math.log(t1) - math.log(T)) / k
    return math.exp(min(log_s, math.log(0.5 * SOBOLEV_S_LIMIT)))


def smallest_solvable_T(params: Params, cfg: QuadratureConfig | None = None) -> float:
    """Trace ratio at the largest admissible Sobolev translation; below it T cannot be inverted."""
    return _sobolev_T(SOBOLEV_S_LIMIT, params, cfg or QuadratureConfig())


def solve_s_for_T(T: float, params: Params, cfg: QuadratureConfig | None = None,
                  consts: FundamentalConstants | None = None, warm: float | None = None):
    """Regime and translation for the extremal with trace ratio T.

    Returns ``(regime, s, clearance)``; ``clearance`` is the authoritative
    parameter in the hyperbolic regime and ``None`` otherwise.  ``warm`` is a
    nearby solution parameter (s, or log-clearance in the hyperbolic regime).
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    cfg = cfg or QuadratureConfig()
    consts = consts or fundamental_constants(params, cfg, estimate_t_star=False)
    TE = consts.TE
    if abs(T - TE) <= REGIME_TOL * TE:
        return ProfileFamily.ESCOBAR, -1.0, None
    if T < TE:
        def fun(s):
            return _sobolev_T(s, params, cfg)
        x0 = 0.0 if warm is None else warm
        step = 2.0 if warm is None else 0.05 * max(1.0, abs(warm))
        if warm is None and T < 1e-2 * consts.T0:
            t_min = fun(SOBOLEV_S_LIMIT)
            if T <= t_min:
                raise BracketError(0.0, SOBOLEV_S_LIMIT, t_min - T, t_min - T)
            x0 = _power_law_start(fun, T)
            step = 0.05 * x0
        br = _expand(fun, T, x0, step, -1e12, SOBOLEV_S_LIMIT)
        s = find_root_bracketed(lambda x: fun(x) - T, br, tol=2e-15 * max(1.0, abs(br.lo), abs(br.hi)))
        return ProfileFamily.SOBOLEV, s, None

    def fun(u):
        return _hyper_T(u, params, cfg)
    x0 = 0.0 if warm is None else warm
    step = 2.0 if warm is None else 0.25
    br = _expand(fun, T, x0, step, math.log(1e-290), math.log(1e12))
    u = find_root_bracketed(lambda x: fun(x) - T, br, tol=1e-14 * max(1.0, abs(br.lo)))
    d = math.exp(u)
    return ProfileFamily.HYPERBOLIC, -1.0 - d, d


def _profile_for(regime, s, clearance, params):
    if regime is ProfileFamily.HYPERBOLIC:
        return TranslatedProfile.hyperbolic(params, clearance)
    return TranslatedProfile(regime, s, params)


def _slope(regime, s, clearance, params, cfg):
    """dPhi/dT along the extremal family by central differences in the solve parameter."""
    if regime is ProfileFamily.ESCOBAR:
        return None
    if regime is ProfileFamily.HYPERBOLIC:
        u, h = math.log(clearance), 1e-4
        a = normalize(TranslatedProfile.hyperbolic(params, math.exp(u - h)), cfg)
        b = normalize(TranslatedProfile.hyperbolic(params, math.exp(u + h)), cfg)
    else:
        h = 1e-4 * max(1.0, abs(s))
        a = normalize(TranslatedProfile(regime, s - h, params), cfg)
        b = normalize(TranslatedProfile(regime, s + h, params), cfg)
    return (b.phi - a.phi) / (b.T - a.T)


def phi_of_T(T: float, params: Params, cfg: QuadratureConfig | None = None,
             consts: FundamentalConstants | None = None, warm: float | None = None,
             include_psharp_bulk: bool = False, with_error: bool = False) -> PhiPoint:
    """Phi_H(T) as the gradient norm of the normalised extremal at trace ratio T."""
    cfg = cfg or QuadratureConfig()
    consts = consts or fundamental_constants(params, cfg, estimate_t_star=False)
    regime, s, d = solve_s_for_T(T, params, cfg, consts, warm)
    ext = normalize(_profile_for(regime, s, d, params), cfg, include_psharp_bulk)
    err = ext.rel_error * ext.phi
    if with_error:
        slope = _slope(regime, s, d, params, cfg)
        if slope is None:
            slope = consts.E
        err += abs(slope) * abs(ext.T - T) + 1e-15 * ext.phi
    return PhiPoint(T, regime, ext.s, ext.phi, ext.yT, d, ext, err)


@dataclass(frozen=True)
class IdentityCheck:
    """One evaluation of the transport identity at the extremal solved for T.

    ``condition`` is (|p# Phi Y_T| + |s| T^{p#}) / (n int U^{p#}), the factor by
    which relative errors in the terms are amplified in the residual.
    """

    T: float
    residual: float
    error: float
    condition: float
    route: str

    def record(self) -> dict:
        return {"T": self.T, "residual": self.residual, "residualError": self.error,
                "condition": self.condition, "route": self.route}


# auto mode leaves the double route once its error bound exceeds this
EXTENDED_TRIGGER = 1e-10


def identity_check(T: float, params: Params, cfg: QuadratureConfig | None = None,
                   consts: FundamentalConstants | None = None, point: PhiPoint | None = None,
                   precision: str = "auto") -> IdentityCheck:
    """Residual of  p# Phi Y_T + s T^{p#} = n * int_H U_T^{p#}  with its route.

    Uses the trace ratio recomputed from the extremal itself, so the root-solve
    tolerance does not enter the residual.  The double error bound is the
    condition times the quadrature error plus rounding.  With ``precision="auto"``
    hyperbolic points whose bound exceeds EXTENDED_TRIGGER are re-evaluated in
    mpmath, since there the double residual mostly measures its own error.
    """
    if precision not in ("auto", "double", "extended"):
        raise ValueError("precision must be 'auto', 'double' or 'extended'")
    cfg = cfg or QuadratureConfig()
    if point is None or point.extremal is None or point.extremal.psharp_bulk is None:
        point = phi_of_T(T, params, cfg, consts, include_psharp_bulk=True)
    ext = point.extremal
    pz = params.p_sharp
    rhs = params.n * ext.psharp_bulk
    lhs = pz * ext.phi * ext.yT + ext.s * ext.T**pz
    cond = (abs(pz * ext.phi * ext.yT) + abs(ext.s) * ext.T**pz) / rhs
    residual = abs(lhs - rhs) / rhs
    err = cond * (ext.rel_error + 64 * np.finfo(float).eps)
    hyper = point.regime is ProfileFamily.HYPERBOLIC and point.clearance is not None
    if precision == "extended" and not hyper:
        raise ValueError("the extended route covers the hyperbolic family only")
    if precision == "double" or not hyper or (precision == "auto" and err <= EXTENDED_TRIGGER):
        return IdentityCheck(float(T), residual, err, cond, "double")
    from .extended import hyperbolic_identity_mp

    mp_res = hyperbolic_identity_mp(params, point.clearance)
    # the mpmath member must be the one the double solve found
    drift = abs(mp_res.T - ext.T) / ext.T
    if drift > 1e-6 + ext.rel_error:
        raise RuntimeError(f"extended evaluation disagrees with the double solve (T drift {drift:.3g})")
    return IdentityCheck(float(T), mp_res.residual, mp_res.error, cond, "extended")


def verify_transport_identity(T: float, params: Params, cfg: QuadratureConfig | None = None,
                              consts: FundamentalConstants | None = None,
                              point: PhiPoint | None = None, precision: str = "auto") -> float:
    """Relative residual of the transport identity at T; see :func:`identity_check`."""
    return identity_check(T, params, cfg, consts, point, precision).residual


def _solve_grid(Tgrid, params, cfg, consts, include_psharp_bulk=False, with_error=False):
    points = []
    warm_s = warm_u = None
    for T in Tgrid:
        T = float(T)
        regime_hint = ProfileFamily.SOBOLEV if T < consts.TE else ProfileFamily.HYPERBOLIC
        warm = warm_s if regime_hint is ProfileFamily.SOBOLEV else warm_u
        pt = phi_of_T(T, params, cfg, consts, warm, include_psharp_bulk, with_error)
        if pt.regime is ProfileFamily.SOBOLEV:
            warm_s = pt.s
        elif pt.regime is ProfileFamily.HYPERBOLIC:
            warm_u = math.log(pt.clearance)
        points.append(pt)
    return points


def scan_curve(Tgrid, params: Params, cfg: QuadratureConfig | None = None,
               consts: FundamentalConstants | None = None, extended: bool = True) -> CurveScan:
    """Solve every grid point and certify the shape of the curve on the grid.

    Certificates (each lists its failing grid indices):

    * ``decreasing_below_TE``: strict decrease between consecutive points below T_E;
    * ``decreasing_below_T0``: strict decrease between consecutive points below T_0;
    * ``increasing_above_T0`` / ``convex_above_T0``: strict increase and
      nonnegative second differences for points at or above T_0;
    * ``above_asymptote``: Phi > T^{p#}/p#;
    * ``above_linear_and_floor``: Phi >= max(E T, S / 2^{1/n});
    * ``tail_ratio_decreasing``: Phi / (T^{p#}/p#) non-increasing and not below 1,
      both within error bars, for T >= T_E.

    The last two compare the relative excess Phi / (T^{p#}/p#) - 1.  With
    ``extended`` set, hyperbolic points where double precision cannot separate
    Phi from the asymptote are re-solved in mpmath and their excess replaced;
    ``above_asymptote_extended`` lists those indices.  ``above_asymptote_unresolved``
    lists failures of ``above_asymptote`` that are within error bars rather than
    reversed.
    """
    Tgrid = np.asarray(Tgrid, dtype=float)
    if Tgrid.ndim != 1 or Tgrid.size == 0 or np.any(Tgrid <= 0) or np.any(np.diff(Tgrid) <= 0):
        raise ValueError("Tgrid must be a nonempty, strictly increasing list of positive reals")
    cfg = cfg or QuadratureConfig()
    consts = consts or fundamental_constants(params, cfg, estimate_t_star=False)
    points = _solve_grid(Tgrid, params, cfg, consts, with_error=True)
    phi = np.array([pt.phi for pt in points])
    err = np.array([pt.phi_err for pt in points]) + 1e-13 * phi
    pz = params.p_sharp
    asym = Tgrid**pz / pz

    failures = {}

    def pairs(mask_fn, test):
        bad = []
        for i in range(len(points) - 1):
            if mask_fn(i) and not test(i):
                bad.append(i)
        return bad

    failures["decreasing_below_TE"] = pairs(
        lambda i: Tgrid[i + 1] < consts.TE, lambda i: phi[i + 1] < phi[i] - err[i] - err[i + 1])
    failures["decreasing_below_T0"] = pairs(
        lambda i: Tgrid[i + 1] <= consts.T0, lambda i: phi[i + 1] < phi[i] - err[i] - err[i + 1])
    failures["increasing_above_T0"] = pairs(
        lambda i: Tgrid[i] >= consts.T0, lambda i: phi[i + 1] > phi[i] + err[i] + err[i + 1])
    convex_bad = []
    for i in range(1, len(points) - 1):
        if Tgrid[i - 1] >= consts.T0:
            h0, h1 = Tgrid[i] - Tgrid[i - 1], Tgrid[i + 1] - Tgrid[i]
            # divided second difference, valid on nonuniform grids
            d2 = (phi[i + 1] - phi[i]) / h1 - (phi[i] - phi[i - 1]) / h0
            slack = (err[i - 1] + 2 * err[i] + err[i + 1]) * (1 / h0 + 1 / h1)
            if d2 < -slack:
                convex_bad.append(i)
    failures["convex_above_T0"] = convex_bad
    # relative excess over the asymptote; far out it drops below double resolution
    excess = (phi - asym) / asym
    excess_err = err / asym
    refined = []
    if extended:
        from .extended import asymptote_excess_mp
        for i, pt in enumerate(points):
            if (pt.regime is ProfileFamily.HYPERBOLIC and pt.clearance is not None
                    and not excess[i] > excess_err[i]):
                res = asymptote_excess_mp(params, float(Tgrid[i]), pt.clearance)
                excess[i], excess_err[i] = res.excess, res.error
                refined.append(i)
    failures["above_asymptote"] = [i for i in range(len(points)) if not excess[i] > excess_err[i]]
    unresolved = [i for i in failures["above_asymptote"] if excess[i] > -excess_err[i]]
    lower = np.maximum(consts.E * Tgrid, consts.sobolev_floor)
    failures["above_linear_and_floor"] = [
        i for i in range(len(points)) if phi[i] < lower[i] - err[i] - 1e-12 * lower[i]]
    tail_bad = [i for i in range(len(points))
                if Tgrid[i] >= consts.TE and excess[i] < -excess_err[i]]
    tail_bad += pairs(lambda i: Tgrid[i] >= consts.TE,
                      lambda i: excess[i + 1] < excess[i] + excess_err[i] + excess_err[i + 1])
    failures["tail_ratio_decreasing"] = sorted(set(tail_bad))
    report = {k: not v for k, v in failures.items()}
    report["above_asymptote_unresolved"] = unresolved
    report["above_asymptote_extended"] = refined
    tail = excess[Tgrid >= consts.TE]
    report["tail_ratio_last"] = float(1.0 + tail[-1]) if tail.size else None
    report["tail_excess_last"] = float(tail[-1]) if tail.size else None
    return CurveScan(points, report, failures)
