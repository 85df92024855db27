"""The three explicit extremal families and their half-space norms.

A translated profile is radial about the point s*e_1, so every half-space
integral is one-dimensional: bulk integrals weight the radius r by the fraction
of the sphere of radius r that lies in {x_1 > 0}, trace integrals run over the
tangential radius rho on the boundary hyperplane where r = sqrt(s^2 + rho^2).

The hyperbolic family is parametrised by its *clearance* d = -s/scale - 1,
the gap between its singular sphere and the boundary.  Large trace ratios
need d as small as 1e-20, far below the spacing of doubles near s = -1, so the
singular factor is always evaluated from d and never from s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kernel import (
    Params,
    QuadratureConfig,
    adaptive_quad,
    cap_fraction_from_sagitta,
    sphere_area,
)

__all__ = [
    "ProfileFamily",
    "TranslatedProfile",
    "HalfspaceNorms",
    "NormalizedExtremal",
    "eval_profile",
    "halfspace_norms",
    "normalize",
    "trace_ratio",
    "full_space_sobolev_ratio",
    "bulk_breakpoints",
    "trace_breakpoints",
]


class ProfileFamily(str, enum.Enum):
    SOBOLEV = "SobolevRegime"
    ESCOBAR = "EscobarRegime"
    HYPERBOLIC = "HyperbolicRegime"


def _shape(family, r, w, params):
    """Profile value and |U'| at radius r (unit scale); w = r - 1 for the hyperbolic family."""
    n, p, q = params.n, params.p, params.q
    decay = (n - p) / (p - 1.0)
    if family is ProfileFamily.SOBOLEV:
        base = 1.0 + r**q
        value = base ** ((p - n) / p)
        grad = decay * r ** (q - 1.0) * value / base
    elif family is ProfileFamily.ESCOBAR:
        value = r ** (-decay)
        grad = decay * value / r
    else:
        base = np.expm1(q * np.log1p(w))
        value = base ** ((p - n) / p)
        grad = decay * r ** (q - 1.0) * value / base
    return value, grad


def eval_profile(family: ProfileFamily, r, params: Params):
    """(U(r), |U'(r)|) for one of the untranslated families; vectorised in r."""
    family = ProfileFamily(family)
    r = np.asarray(r, dtype=float)
    if family is ProfileFamily.HYPERBOLIC:
        if np.any(r <= 1.0):
            raise ValueError("hyperbolic profile is singular for r <= 1")
    elif family is ProfileFamily.ESCOBAR:
        if np.any(r <= 0.0):
            raise ValueError("Escobar profile is singular at r = 0")
    elif np.any(r < 0.0):
        raise ValueError("radius must be nonnegative")
    value, grad = _shape(family, r, r - 1.0, params)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


@dataclass(frozen=True)
class TranslatedProfile:
    """x -> U((x - s e_1) / scale) restricted to the closed half-space.

    ``clearance`` is authoritative for the hyperbolic family; when given, ``s``
    is recomputed from it (and is only accurate to double precision).
    """

    family: ProfileFamily
    s: float
    params: Params
    scale: float = 1.0
    clearance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", ProfileFamily(self.family))
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.family is ProfileFamily.HYPERBOLIC:
            d = self.clearance if self.clearance is not None else -self.s / self.scale - 1.0
            if not d > 0:
                raise ValueError(f"hyperbolic profile needs s < -scale (clearance {d!r})")
            object.__setattr__(self, "clearance", float(d))
            object.__setattr__(self, "s", -self.scale * (1.0 + d))
        elif self.family is ProfileFamily.ESCOBAR and not self.s < 0:
            raise ValueError("Escobar profile needs s < 0")

    @classmethod
    def hyperbolic(cls, params: Params, clearance: float, scale: float = 1.0):
        return cls(ProfileFamily.HYPERBOLIC, -scale * (1.0 + clearance), params, scale, clearance)

    def dilate(self, alpha: float) -> "TranslatedProfile":
        """Shape of x -> U((x/alpha - s e_1)/scale); the amplitude factor is left to normalisation."""
        return replace(self, s=self.s * alpha, scale=self.scale * alpha)

    def value_grad(self, x1, rho):
        """Profile value and gradient components (d/dx1, d/drho) at points of the closed half-space."""
        x1 = np.asarray(x1, dtype=float)
        rho = np.asarray(rho, dtype=float)
        c = self.scale
        y1 = (x1 - self.s) / c
        yr = rho / c
        r = np.hypot(y1, yr)
        if self.family is ProfileFamily.HYPERBOLIC:
            d = self.clearance
            # r^2 - 1 without cancellation: (y1 - 1)(y1 + 1) with y1 - 1 = x1/c + d
            w = ((x1 / c + d) * (y1 + 1.0) + yr * yr) / (r + 1.0)
        else:
            w = r - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            value, g = _shape(self.family, r, w, self.params)
            radial = np.where(r > 0, -g / np.where(r > 0, r, 1.0) / c, 0.0)
        return value, radial * y1, radial * yr


@dataclass(frozen=True)
class HalfspaceNorms:
    lp_star_mass: float
    trace_mass: float
    grad_energy: float
    y_moment: float
    psharp_bulk: float | None = None
    errors: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class NormalizedExtremal:
    base: TranslatedProfile
    lp_star_normalizer: float
    T: float
    phi: float
    yT: float
    psharp_bulk: float | None = None
    rel_error: float = 0.0

    @property
    def s(self) -> float:
        return self.base.s

    def value_grad(self, x1, rho):
        v, g1, gr = self.base.value_grad(x1, rho)
        k = 1.0 / self.lp_star_normalizer
        return k * v, k * g1, k * gr


def _geometric(lo, hi, ratio=4.0):
    pts = []
    t = lo
    while t < hi:
        pts.append(t)
        t *= ratio
    return pts


def bulk_breakpoints(tp):
    """Breakpoints in v = r - |s| for the outer region (natural scale first)."""
    c = tp.scale
    if tp.family is ProfileFamily.HYPERBOLIC:
        # small clearance: the boundary layer of width d; large: the distance |s| itself
        L = max(c, abs(tp.s))
        inner = _geometric(min(tp.clearance * c / 16.0, L * 2.0**-12), 4.0 * L)
    else:
        L = max(c, abs(tp.s))
        inner = _geometric(L * 2.0**-12, 4.0 * L)
    return inner


def _bulk_integrand(tp, components):
    """Vectorised integrand in v for the part of r >= |s| (and the full ball part, if s > 0)."""
    params = tp.params
    n, ps, pz, p, q = params.n, params.p_star, params.p_sharp, params.p, params.q
    c, s = tp.scale, tp.s
    area = sphere_area(n - 1)
    hyper = tp.family is ProfileFamily.HYPERBOLIC

    def pieces(r, frac, w):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            value, g = _shape(tp.family, r / c, w, params)
        g = g / c
        jac = area * r ** (n - 1) * frac
        out = []
        for comp in components:
            if comp == "mass":
                out.append(value**ps * jac)
            elif comp == "grad":
                out.append(g**p * jac)
            elif comp == "ymoment":
                out.append(value**ps * r**q * jac)
            elif comp == "psharp":
                out.append(value**pz * jac)
        return np.vstack(out)

    def outer(v):
        r = abs(s) + v
        y = v / (2.0 * r)
        if s >= 0:
            frac = 1.0 - cap_fraction_from_sagitta(n, y)
        else:
            frac = cap_fraction_from_sagitta(n, y)
        w = (tp.clearance * c + v) / c if hyper else r / c - 1.0
        return pieces(r, frac, w)

    def ball(r):
        return pieces(r, np.ones_like(r), r / c - 1.0)

    return outer, ball


def _bulk(tp, cfg, components):
    outer, ball = _bulk_integrand(tp, components)
    res = adaptive_quad(outer, 0.0, math.inf, cfg, bulk_breakpoints(tp))
    value = np.atleast_1d(res.value).astype(float)
    err = np.atleast_1d(res.error).astype(float)
    if tp.s > 0:
        inner = adaptive_quad(ball, 0.0, tp.s, cfg, _geometric(tp.scale / 64.0, tp.s))
        value = value + np.atleast_1d(inner.value)
        err = err + np.atleast_1d(inner.error)
    return value, err


def trace_breakpoints(tp):
    """Breakpoints in the tangential radius for boundary integrals."""
    c = tp.scale
    L = max(c, abs(tp.s))
    if tp.family is ProfileFamily.HYPERBOLIC:
        return _geometric(min(math.sqrt(tp.clearance) * c, L) / 16.0, 4.0 * L)
    return _geometric(L / 64.0, 4.0 * L)


def _trace(tp, cfg):
    params = tp.params
    n, pz = params.n, params.p_sharp
    c, s = tp.scale, tp.s
    area = sphere_area(n - 2)
    hyper = tp.family is ProfileFamily.HYPERBOLIC

    def f(rho):
        r = np.hypot(s, rho)
        if hyper:
            d = tp.clearance
            w = (d * (2.0 + d) + (rho / c) ** 2) / (r / c + 1.0)
        else:
            w = r / c - 1.0
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            value, _ = _shape(tp.family, r / c, w, params)
        return area * value**pz * rho ** (n - 2)

    res = adaptive_quad(f, 0.0, math.inf, cfg, trace_breakpoints(tp))
    return res.value, res.error


def halfspace_norms(
    tp: TranslatedProfile,
    cfg: QuadratureConfig | None = None,
    include_psharp_bulk: bool = False,
) -> HalfspaceNorms:
    """Bulk L^{p*} mass, boundary L^{p#} mass, gradient energy and transport moment of ``tp``."""
    cfg = cfg or QuadratureConfig()
    comps = ["mass", "grad", "ymoment"] + (["psharp"] if include_psharp_bulk else [])
    vals, errs = _bulk(tp, cfg, comps)
    tr, tr_err = _trace(tp, cfg)
    errors = {k: float(e) for k, e in zip(comps, errs)}
    errors["trace"] = float(tr_err)
    return HalfspaceNorms(
        lp_star_mass=float(vals[0]),
        trace_mass=float(tr),
        grad_energy=float(vals[1]),
        y_moment=float(vals[2]),
        psharp_bulk=float(vals[3]) if include_psharp_bulk else None,
        errors=errors,
    )


def normalize(
    tp: TranslatedProfile,
    cfg: QuadratureConfig | None = None,
    include_psharp_bulk: bool = False,
) -> NormalizedExtremal:
    norms = halfspace_norms(tp, cfg, include_psharp_bulk)
    params = tp.params
    ps, pz, p = params.p_star, params.p_sharp, params.p
    M = norms.lp_star_mass
    N = M ** (1.0 / ps)
    T = norms.trace_mass ** (1.0 / pz) / N
    phi = norms.grad_energy ** (1.0 / p) / N
    # |x - s e_1|^{p/(p-1)} is scale-free under amplitude changes, so only the mass rescales
    yT = (norms.y_moment / M) ** ((p - 1.0) / p)
    psharp = norms.psharp_bulk / N**pz if include_psharp_bulk else None
    e = norms.errors
    rel = (
        e["mass"] / M / ps
        + e["trace"] / max(norms.trace_mass, 1e-300) / pz
        + e["grad"] / norms.grad_energy / p
    )
    return NormalizedExtremal(tp, N, T, phi, yT, psharp, rel)


def trace_ratio(family, s, params: Params, cfg: QuadratureConfig | None = None,
                clearance: float | None = None) -> float:
    """Trace norm of the unit-mass normalised translate; only two integrals are needed."""
    cfg = cfg or QuadratureConfig()
    family = ProfileFamily(family)
    if family is ProfileFamily.HYPERBOLIC and clearance is not None:
        tp = TranslatedProfile.hyperbolic(params, clearance)
    else:
        tp = TranslatedProfile(family, s, params)
    (M,), _ = _bulk(tp, cfg, ["mass"])
    tr, _ = _trace(tp, cfg)
    return float(tr ** (1.0 / params.p_sharp) / M ** (1.0 / params.p_star))


def full_space_sobolev_ratio(params: Params, cfg: QuadratureConfig | None = None):
    """(S_{n,p}, relative error) from the full-space norms of the Sobolev bubble."""
    cfg = cfg or QuadratureConfig()
    n, p, ps = params.n, params.p, params.p_star
    area = sphere_area(n - 1)

    def f(r):
        value, g = _shape(ProfileFamily.SOBOLEV, r, r - 1.0, params)
        jac = area * r ** (n - 1)
        return np.vstack([value**ps * jac, g**p * jac])

    res = adaptive_quad(f, 0.0, math.inf, cfg, _geometric(2.0**-8, 16.0))
    M, G = res.value
    S = G ** (1.0 / p) / M ** (1.0 / ps)
    rel = res.error[0] / M / ps + res.error[1] / G / p
    return float(S), float(rel)
