"""Deficits, distances to the extremal family, and the quadratic stability law.

Test functions here are finite combinations of dilated extremals and compact
bumps, all symmetric about one axis parallel to e_1.  Their norms reduce to
(x_1, rho) quadrature, and the distance to the extremal family reduces to a
one-parameter search over the dilation (the tangential offset is pinned to
the axis by symmetry and only checked locally).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .axisym import AxisBall, axisym_quad, compact_bump, radial_cutoff
from .kernel import (Bracket, Params, QuadratureConfig, adaptive_quad, find_root_bracketed,
                     minimize_scalar, sphere_area)
from .profiles import NormalizedExtremal, bulk_breakpoints, trace_breakpoints

__all__ = [
    "ProfileTerm",
    "BumpTerm",
    "TestFunction",
    "Norms",
    "DeficitReport",
    "DistanceResult",
    "PerturbationMode",
    "PerturbationSpec",
    "StabilityRow",
    "AnnulusCheck",
    "extremal_test_function",
    "function_norms",
    "concentration_radius",
    "deficit",
    "distance_to_extremals",
    "perturbation_family",
    "stability_ratio_scan",
    "slope_fit",
    "annulus_cutoff_norm",
    "annulus_trace_check",
    "glue_quadratic_stability",
]


def _extremal(T, params, cfg):
    from .curve import phi_of_T

    return phi_of_T(T, params, cfg).extremal


@dataclass(frozen=True)
class ProfileTerm:
    """coef * alpha^{-n/p*} U(x / alpha) for a unit-mass extremal U."""

    extremal: NormalizedExtremal
    coef: float = 1.0
    alpha: float = 1.0

    def value_grad(self, x1, rho, params):
        k = self.coef * self.alpha ** (-params.n / params.p_star)
        v, g1, gr = self.extremal.value_grad(x1 / self.alpha, rho / self.alpha)
        return k * v, k * g1 / self.alpha, k * gr / self.alpha

    def dilated(self, lam, params):
        return replace(self, alpha=self.alpha * lam)

    @property
    def center(self):
        return self.extremal.s * self.alpha


@dataclass(frozen=True)
class BumpTerm:
    """coef * (1 - |x - c e_1|^2 / a^2)^3_+ ."""

    coef: float
    center: float
    radius: float

    def value_grad(self, x1, rho, params):
        dx = x1 - self.center
        phi, dphi = compact_bump(dx * dx + rho * rho, self.radius)
        return self.coef * phi, self.coef * dphi * 2.0 * dx, self.coef * dphi * 2.0 * rho

    def dilated(self, lam, params):
        k = lam ** (-params.n / params.p_star)
        return BumpTerm(self.coef * k, self.center * lam, self.radius * lam)


@dataclass(frozen=True)
class TestFunction:
    """A sum of profile and bump terms, symmetric about the axis {x' = offset e_n}."""

    __test__ = False  # not a pytest class

    terms: tuple
    params: Params
    scale: float = 1.0
    offset: float = 0.0
    label: str = ""

    def axial(self, x1, rho):
        x1 = np.asarray(x1, dtype=float)
        rho = np.asarray(rho, dtype=float)
        v = np.zeros(np.broadcast(x1, rho).shape)
        g1 = np.zeros_like(v)
        gr = np.zeros_like(v)
        for t in self.terms:
            a, b, c = t.value_grad(x1, rho, self.params)
            v = v + a
            g1 = g1 + b
            gr = gr + c
        return self.scale * v, self.scale * g1, self.scale * gr

    def value_grad(self, X):
        """Values and gradients at points X of shape (N, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tang = X[:, 1:].copy()
        tang[:, -1] -= self.offset
        rho = np.linalg.norm(tang, axis=1)
        v, g1, gr = self.axial(X[:, 0], rho)
        grad = np.zeros_like(X)
        grad[:, 0] = g1
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[:, None] > 0, tang / np.where(rho > 0, rho, 1.0)[:, None], 0.0)
        grad[:, 1:] = gr[:, None] * unit
        return v, grad

    def dilated(self, lam: float) -> "TestFunction":
        """x -> lam^{-n/p*} u(x / lam); keeps both constraint norms and the energy."""
        return replace(self, terms=tuple(t.dilated(lam, self.params) for t in self.terms),
                       offset=self.offset * lam)

    def translated(self, shift: float) -> "TestFunction":
        return replace(self, offset=self.offset + shift)

    def with_scale(self, scale: float) -> "TestFunction":
        return replace(self, scale=scale)

    def quad_hints(self):
        profiles = [t for t in self.terms if isinstance(t, ProfileTerm)]
        center = profiles[0].center if profiles else 0.0
        bps, tbps = set(), set()
        for t in profiles:
            bps.update(b * t.alpha for b in bulk_breakpoints(t.extremal.base))
            tbps.update(b * t.alpha for b in trace_breakpoints(t.extremal.base))
        r0 = -center if center < 0 else 0.0
        for t in self.terms:
            if isinstance(t, BumpTerm):
                dist = abs(center - t.center)
                for e in (dist - t.radius, dist + t.radius, t.radius - dist):
                    if e - r0 > 0:
                        bps.add(e - r0)
                if t.radius > abs(t.center):
                    tbps.add(math.sqrt(t.radius**2 - t.center**2))
        return center, sorted(bps), sorted(tbps)


def extremal_test_function(T: float, params: Params, cfg: QuadratureConfig | None = None,
                           label: str = "extremal") -> TestFunction:
    return TestFunction((ProfileTerm(_extremal(T, params, cfg)),), params, label=label)


@dataclass(frozen=True)
class Norms:
    mass: float
    trace: float
    energy: float
    rel_error: float

    def T(self, params: Params) -> float:
        return self.trace ** (1.0 / params.p_sharp) / self.mass ** (1.0 / params.p_star)


def function_norms(u: TestFunction, cfg: QuadratureConfig | None = None) -> Norms:
    """(int u^{p*}, int_{boundary} u^{p#}, int |grad u|^p) by axisymmetric quadrature."""
    cfg = cfg or QuadratureConfig()
    params = u.params
    n, ps, pz, p = params.n, params.p_star, params.p_sharp, params.p
    center, bps, tbps = u.quad_hints()

    def f(x1, rho):
        v, g1, gr = u.axial(x1, rho)
        return np.stack([np.abs(v) ** ps, (g1 * g1 + gr * gr) ** (0.5 * p)])

    bulk = axisym_quad(f, n, center=center, cfg=cfg, breakpoints=bps)
    area = sphere_area(n - 2)

    def tr(rho):
        return area * np.abs(u.axial(np.zeros_like(rho), rho)[0]) ** pz * rho ** (n - 2)

    trace = adaptive_quad(tr, 0.0, math.inf, cfg, tbps)
    mass, energy = (float(x) for x in bulk.value)
    err = float(bulk.error[0] / mass + bulk.error[1] / energy + trace.error / trace.value)
    return Norms(mass, float(trace.value), energy, err)


def _normalize(u: TestFunction, cfg):
    nm = function_norms(u, cfg)
    if not nm.mass > 0:
        raise ValueError("test function has zero mass")
    k = nm.mass ** (-1.0 / u.params.p_star)
    params = u.params
    scaled = Norms(1.0, nm.trace * k**params.p_sharp, nm.energy * k**params.p, nm.rel_error)
    return u.with_scale(u.scale * k), scaled


def concentration_radius(u: TestFunction, cfg: QuadratureConfig | None = None,
                         fraction: float = 0.5) -> float:
    """Radius r with int_{H cap B_r} |u|^{p*} = fraction after unit-mass scaling.

    The ball is centred on the boundary point of u's symmetry axis.  This is a
    diagnostic of the concentration scale only; nothing is normalized by it.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    cfg = cfg or QuadratureConfig()
    un, _ = _normalize(u, cfg)
    un = un.translated(-un.offset)
    ps = u.params.p_star
    center, bps, _ = un.quad_hints()

    def f(x1, rho):
        return np.abs(un.axial(x1, rho)[0]) ** ps

    def excess(r):
        ball = [AxisBall(0.0, r)]
        return float(axisym_quad(f, u.params.n, center=center, balls=ball, cfg=cfg, breakpoints=bps).value) - fraction

    hi = max(1.0, abs(center))
    while excess(hi) < 0:
        hi *= 2.0
    lo = 0.5 * hi
    while excess(lo) > 0:
        lo *= 0.5
    return find_root_bracketed(excess, Bracket(lo, hi), tol=1e-10 * hi)


@dataclass(frozen=True)
class DeficitReport:
    T: float
    delta: float
    distance: float = math.nan
    ratio: float = math.nan
    energy: float = math.nan
    phi: float = math.nan
    delta_tol: float = 0.0

    def record(self) -> dict:
        return {"T": self.T, "delta": self.delta, "distance": self.distance, "ratio": self.ratio}


def deficit(u, params: Params, cfg: QuadratureConfig | None = None) -> DeficitReport:
    """delta_T(u) = |grad u|_p^p - Phi(T)^p at the trace ratio T measured after unit-mass scaling.

    ``u`` is a TestFunction or a split construction (already exactly in the
    constraint class).
    """
    from .curve import phi_of_T

    cfg = cfg or QuadratureConfig()
    if hasattr(u, "w_energy"):
        T = u.spec.T
        energy = u.w_energy
        err = 0.0
    else:
        _, nm = _normalize(u, cfg)
        T = nm.T(params)
        energy = nm.energy
        err = nm.rel_error
    pt = phi_of_T(T, params, cfg, with_error=True)
    target = pt.phi**params.p
    tol = energy * err + params.p * pt.phi ** (params.p - 1) * pt.phi_err + 1e-13 * energy
    return DeficitReport(T, energy - target, energy=energy, phi=pt.phi, delta_tol=tol)


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    alpha: float
    sign: int
    converged: bool
    offset_check: bool | None
    offset_values: tuple = ()


def _moment_exponent(params):
    # the q-th moment of U^{p*} converges iff q < n p / (p - 1) - n
    return min(2.0, 0.5 * (params.n * params.p / (params.p - 1.0) - params.n))


def _moment(fun_axial, params, center, bps, k, cfg):
    ps = params.p_star

    def f(x1, rho):
        v = fun_axial(x1, rho)[0]
        return np.abs(v) ** ps * (x1 * x1 + rho * rho) ** (0.5 * k)

    return float(axisym_quad(f, params.n, center=center, cfg=cfg, breakpoints=bps).value)


def _grad_gap(u: TestFunction, v: TestFunction, cfg):
    p = u.params.p
    center, bps, _ = u.quad_hints()
    _, vb, _ = v.quad_hints()

    def f(x1, rho):
        _, a1, ar = u.axial(x1, rho)
        _, b1, br = v.axial(x1, rho)
        d1 = a1 - b1
        dr = ar - br
        return (d1 * d1 + dr * dr) ** (0.5 * p)

    res = axisym_quad(f, u.params.n, center=center, cfg=cfg, breakpoints=sorted(set(bps) | set(vb)))
    return float(res.value) ** (1.0 / p)


def _grad_gap_offset(u: TestFunction, v: TestFunction, x0: float, cfg, nodes: int = 24):
    """Same as _grad_gap with v's axis moved by x0 along e_n (full angular integration)."""
    params = u.params
    n, p = params.n, params.p
    center, bps, _ = u.quad_hints()
    if n == 2:
        phis = np.array([0.0, math.pi])
        wts = np.array([0.5, 0.5])
    else:
        xs, ws = np.polynomial.legendre.leggauss(nodes)
        edges = np.linspace(0.0, math.pi, 5)
        phis = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * xs for a, b in zip(edges[:-1], edges[1:])])
        wts = np.concatenate([0.5 * (b - a) * ws for a, b in zip(edges[:-1], edges[1:])])
        wts = wts * np.sin(phis) ** (n - 3)
        wts = wts / wts.sum()
    cph = np.cos(phis)

    def f(x1, rho):
        _, a1, ar = u.axial(x1, rho)
        x1e = x1[..., None]
        re = rho[..., None]
        dx = re * cph - x0
        dy2 = (re * np.sin(phis)) ** 2
        rv = np.sqrt(dx * dx + dy2)
        _, b1, br = v.axial(x1e, rv)
        with np.errstate(invalid="ignore", divide="ignore"):
            cosang = np.where(rv * re > 0, (re - x0 * cph) / np.where(rv > 0, rv, 1.0), 1.0)
        d1 = a1[..., None] - b1
        dt2 = ar[..., None] ** 2 + br * br - 2.0 * ar[..., None] * br * cosang
        val = np.maximum(d1 * d1 + dt2, 0.0) ** (0.5 * p)
        return val @ wts

    res = axisym_quad(f, n, center=center, cfg=cfg, breakpoints=bps)
    return float(res.value) ** (1.0 / p)


def distance_to_extremals(u, T: float, params: Params, cfg: QuadratureConfig | None = None,
                          check_offset: bool = True, span: float = 2.5) -> DistanceResult:
    """inf over v = +-alpha^{-n/p*} U_T(./alpha) of |grad(u - v)|_p, on u's own axis.

    The dilation is found by bounded Brent search in log alpha, warm-started
    from matching a moment of u^{p*}.  With ``check_offset`` the distance is
    also evaluated with the extremal's axis moved off u's axis by a small
    tangential step on either side, which must not decrease it.
    """
    cfg = cfg or QuadratureConfig()
    if hasattr(u, "w_energy"):
        raise TypeError("distance search needs an axisymmetric TestFunction")
    un, _ = _normalize(u, cfg)
    un = un.translated(-un.offset)
    base = extremal_test_function(T, params, cfg)
    k = _moment_exponent(params)
    cu, bu, _ = un.quad_hints()
    cb, bb, _ = base.quad_hints()
    mu_ = _moment(un.axial, params, cu, bu, k, cfg)
    mb = _moment(base.axial, params, cb, bb, k, cfg)
    a0 = math.log((mu_ / mb) ** (1.0 / k))

    found = []
    for sign in (1, -1):
        signed = base.with_scale(sign * base.scale)

        def h(log_a, signed=signed):
            return _grad_gap(un, signed.dilated(math.exp(log_a)), cfg)

        la, d = minimize_scalar(h, Bracket(a0 - span, a0 + span), tol=1e-9)
        found.append((d, sign, la, signed))
    d, sign, la, signed = min(found, key=lambda t: (t[0], -t[1]))
    converged = a0 - span < la < a0 + span
    alpha = math.exp(la)
    best = signed.dilated(alpha)
    check = None
    vals = ()
    if check_offset:
        step = 0.05 * alpha * max(1.0, abs(best.terms[0].extremal.s)) * best.terms[0].extremal.base.scale
        vals = tuple(_grad_gap_offset(un, best, x, cfg) for x in (-step, step))
        check = all(v >= d - 1e-9 * max(1.0, d) for v in vals)
    return DistanceResult(d, alpha, sign, converged, check, vals)


class PerturbationMode(str, enum.Enum):
    DILATION_BLEND = "dilationBlend"
    PROFILE_BLEND = "profileBlend"
    BOUNDARY_BUMP = "boundaryBump"


@dataclass(frozen=True)
class PerturbationSpec:
    baseT: float
    mode: PerturbationMode
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "mode", PerturbationMode(self.mode))
        if not 0.0 <= self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in [0, 0.5]")
        if not self.baseT > 0:
            raise ValueError("baseT must be positive")


def perturbation_family(spec: PerturbationSpec, params: Params, cfg: QuadratureConfig | None = None,
                        other_T: float | None = None, bump_radius: float | None = None) -> TestFunction:
    """Unit-mass perturbation of U_T; epsilon = 0 returns U_T itself."""
    cfg = cfg or QuadratureConfig()
    ext = _extremal(spec.baseT, params, cfg)
    eps = spec.epsilon
    base = ProfileTerm(ext)
    if eps == 0.0:
        return TestFunction((base,), params, label=f"{spec.mode.value}:0")
    if spec.mode is PerturbationMode.DILATION_BLEND:
        terms = (ProfileTerm(ext, 1.0 - eps), ProfileTerm(ext, eps, 2.0))
    elif spec.mode is PerturbationMode.PROFILE_BLEND:
        T2 = other_T if other_T is not None else 2.0 * spec.baseT
        terms = (ProfileTerm(ext, 1.0 - eps), ProfileTerm(_extremal(T2, params, cfg), eps))
    else:
        a = bump_radius if bump_radius is not None else ext.base.scale * max(1.0, abs(ext.s))
        peak = float(ext.value_grad(max(ext.s, 0.0), 0.0)[0])
        terms = (base, BumpTerm(eps * peak, 0.0, a))
    u = TestFunction(terms, params, label=f"{spec.mode.value}:{eps}")
    un, _ = _normalize(u, cfg)
    return un


@dataclass(frozen=True)
class StabilityRow:
    epsilon: float
    T: float
    delta: float
    distance: float
    ratio: float
    flags: str = ""

    def record(self) -> dict:
        return {"epsilon": self.epsilon, "T": self.T, "delta": self.delta,
                "distance": self.distance, "ratio": self.ratio, "flags": self.flags}


def stability_ratio_scan(baseT: float, eps_grid, mode, params: Params,
                         cfg: QuadratureConfig | None = None) -> list:
    """Rows (eps, T, delta, distance, delta / distance^2) along a perturbation family."""
    cfg = cfg or QuadratureConfig()
    rows = []
    for eps in eps_grid:
        eps = float(eps)
        if eps == 0.0:
            rows.append(StabilityRow(0.0, baseT, 0.0, 0.0, math.nan, "undefined"))
            continue
        u = perturbation_family(PerturbationSpec(baseT, mode, eps), params, cfg)
        rep = deficit(u, params, cfg)
        dist = distance_to_extremals(u, rep.T, params, cfg, check_offset=False)
        flags = []
        if rep.delta < -rep.delta_tol:
            flags.append("negative-deficit")
        if not dist.converged:
            flags.append("search-at-bound")
        if params.p != 2.0:
            flags.append("no-quadratic-law")
        ratio = rep.delta / dist.distance**2 if dist.distance > 0 else math.nan
        rows.append(StabilityRow(eps, rep.T, rep.delta, dist.distance, ratio, ",".join(flags)))
    return rows


def slope_fit(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def annulus_cutoff_norm(params: Params, cfg: QuadratureConfig | None = None) -> float:
    """|grad psi|_{L^n(H)} for psi = 1 on B_7 minus B_2, 0 on B_1 and off B_8 (quintic ramps)."""
    n = params.n

    def f(r):
        _, d_in = radial_cutoff(r, 1.0, 2.0)
        _, d_out = radial_cutoff(r, 7.0, 8.0)
        return np.abs(np.where(r < 4.5, d_in, d_out)) ** n * r ** (n - 1)

    val = adaptive_quad(f, 1.0, 8.0, cfg, [2.0, 7.0]).value
    return float((0.5 * sphere_area(n - 1) * val) ** (1.0 / n))


@dataclass(frozen=True)
class AnnulusCheck:
    lhs: float
    rhs: float
    applicable: bool
    annulus_mass: float
    c_psi: float

    @property
    def passed(self) -> bool | None:
        return (self.lhs <= self.rhs) if self.applicable else None


def _split_annulus_integrals(sc, R, params, cfg, panels=96):
    """Annulus bulk mass and boundary trace of a planar split construction."""
    if params.n != 2:
        raise ValueError("split annulus integrals are implemented for n = 2")
    ps, pz = params.p_star, params.p_sharp
    xs, ws = np.polynomial.legendre.leggauss(15)
    edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, panels + 1)
    th = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * xs for a, b in zip(edges[:-1], edges[1:])])
    tw = np.concatenate([0.5 * (b - a) * ws for a, b in zip(edges[:-1], edges[1:])])

    def bulk(r):
        X = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=1)
        v = sc.value_grad(X)[0].reshape(r.size, th.size)
        return (np.maximum(v, 0.0) ** ps @ tw) * r

    c = 0.5 * sc.sep
    bps = [b for b in (c - sc.R, c - 0.5 * sc.R, c, c + 0.5 * sc.R, c + sc.R) if R < b < 8 * R]
    mass = adaptive_quad(bulk, R, 8.0 * R, cfg, bps).value

    def tr(y):
        out = 0.0
        for sgn in (1.0, -1.0):
            X = np.stack([np.zeros_like(y), sgn * y], axis=1)
            out = out + np.maximum(sc.value_grad(X)[0], 0.0) ** pz
        return out

    tb = [b for b in (c - sc.R, c - 0.5 * sc.R, c, c + 0.5 * sc.R, c + sc.R) if 2 * R < b < 7 * R]
    trace = adaptive_quad(tr, 2.0 * R, 7.0 * R, cfg, tb).value
    return float(mass), float(trace), sc.w_energy ** (1.0 / params.p)


def annulus_trace_check(u, R: float, epsilon_mass: float | None, params: Params,
                        cfg: QuadratureConfig | None = None) -> AnnulusCheck:
    """Trace on the boundary annulus B_7R minus B_2R against p# (C_psi eps^{1/p*} + |grad u|_p) eps^{(p#-1)/p*}.

    The precondition (bulk mass of B_8R minus B_R at most ``epsilon_mass``) is
    checked first; when it fails the result is marked not applicable.  With
    ``epsilon_mass=None`` the measured annulus mass itself is used.
    """
    cfg = cfg or QuadratureConfig()
    n, ps, pz, p = params.n, params.p_star, params.p_sharp, params.p
    c_psi = annulus_cutoff_norm(params, cfg)
    if hasattr(u, "w_energy"):
        mass, lhs, grad = _split_annulus_integrals(u, R, params, cfg)
    else:
        un, nm = _normalize(u, cfg)
        un = un.translated(-un.offset)
        grad = nm.energy ** (1.0 / p)
        center, bps, tbps = un.quad_hints()

        def f(x1, rho):
            return np.abs(un.axial(x1, rho)[0]) ** ps

        mass = float(axisym_quad(f, n, center=center,
                                 balls=[AxisBall(0.0, 8.0 * R), AxisBall(0.0, R, False)],
                                 cfg=cfg, breakpoints=bps).value)
        area = sphere_area(n - 2)

        def tr(rho):
            return area * np.abs(un.axial(np.zeros_like(rho), rho)[0]) ** pz * rho ** (n - 2)

        lhs = float(adaptive_quad(tr, 2.0 * R, 7.0 * R, cfg,
                                  [b for b in tbps if 2.0 * R < b < 7.0 * R]).value)
    eps = mass if epsilon_mass is None else float(epsilon_mass)
    applicable = mass <= eps
    rhs = pz * (c_psi * eps ** (1.0 / ps) + grad) * eps ** ((pz - 1.0) / ps)
    return AnnulusCheck(lhs, rhs, applicable, mass, c_psi)


@dataclass(frozen=True)
class GluingReport:
    alpha_prime: float
    rows: list = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return all(r["holds"] is not False for r in self.rows)


def glue_quadratic_stability(rows, alpha_T: float, delta0: float, params: Params,
                             grad_energies=None) -> GluingReport:
    """Case split combining a supplied local constant alpha_T with the large-deficit branch.

    alpha' = min(alpha_T / 2, delta0 / 4).  A row with delta >= delta0 |grad u|^2
    falls in the large-deficit branch, where d^2 <= 4 |grad u|^2 is checked
    from the measured energy; other rows fall in the local branch, where
    delta >= alpha' d^2 is reported against the supplied constant.
    """
    if params.p != 2.0:
        raise ValueError("the gluing argument is stated for p = 2")
    if not (alpha_T > 0 and 0 < delta0 < 1):
        raise ValueError("need alpha_T > 0 and delta0 in (0, 1)")
    ap = min(0.5 * alpha_T, 0.25 * delta0)
    out = []
    for k, r in enumerate(rows):
        if not r.distance > 0:
            continue
        g2 = grad_energies[k] if grad_energies is not None else r.delta + _phi_sq(r.T, params)
        large = r.delta >= delta0 * g2
        bound_ok = r.distance**2 <= 4.0 * g2 if large else None
        out.append({"epsilon": r.epsilon, "branch": "large" if large else "local",
                    "distanceBoundOk": bound_ok, "holds": r.delta >= ap * r.distance**2})
    return GluingReport(ap, out)


def _phi_sq(T, params):
    from .curve import phi_of_T

    return phi_of_T(T, params).phi ** 2
