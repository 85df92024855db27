"""Numeric substrate: exponents, sphere caps, adaptive 1-D quadrature, roots, minimisation.

Every half-space integral in the package reduces to one dimension by radial
symmetry, so the quadrature here is the workhorse.  It is a breadth-first
adaptive bisection scheme with a fixed Gauss-Legendre rule per panel; the
integrand is evaluated for all active panels of one level in a single
vectorised call, which keeps the Python overhead per integral small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

__all__ = [
    "Params",
    "QuadratureConfig",
    "Bracket",
    "QuadratureError",
    "BracketError",
    "QuadResult",
    "sphere_area",
    "cap_area_fraction",
    "cap_fraction_from_sagitta",
    "adaptive_quad",
    "integrate_radial",
    "find_root_bracketed",
    "minimize_scalar",
]


@dataclass(frozen=True)
class Params:
    """Dimension ``n`` and exponent ``p`` with the derived critical exponents."""

    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        if not 1.0 < self.p < self.n:
            raise ValueError(f"exponent must satisfy 1 < p < n, got p={self.p!r}, n={self.n}")

    @property
    def p_star(self) -> float:
        return self.n * self.p / (self.n - self.p)

    @property
    def p_sharp(self) -> float:
        return (self.n - 1) * self.p / (self.n - self.p)

    @property
    def q(self) -> float:
        """Conjugate exponent p/(p-1) appearing in the profile formulas."""
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_depth: int = 60
    tail_transform: str = "reciprocal"

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0 and 0.0 < self.abs_tol < 1.0):
            raise ValueError("rel_tol and abs_tol must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.tail_transform not in ("reciprocal", "none"):
            raise ValueError(f"unknown tail transform {self.tail_transform!r}")


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")


class QuadratureError(RuntimeError):
    """Adaptive quadrature ran out of depth; carries the partial estimate."""

    def __init__(self, message, value, error):
        super().__init__(f"{message} (partial value={value!r}, error bound={error!r})")
        self.value = value
        self.error = error


class BracketError(ValueError):
    def __init__(self, lo, hi, g_lo, g_hi):
        super().__init__(
            f"no sign change on [{lo!r}, {hi!r}]: g(lo)={g_lo!r}, g(hi)={g_hi!r}"
        )
        self.lo, self.hi, self.g_lo, self.g_hi = lo, hi, g_lo, g_hi


class QuadResult(NamedTuple):
    value: np.ndarray | float
    error: np.ndarray | float


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^(k+1); S^0 counts two points."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def cap_fraction_from_sagitta(n: int, x):
    """Cap fraction of S^(n-1) given x = (1 - cos theta) / 2.

    Passing x directly (rather than the angle) keeps full relative precision for
    very thin caps, which matter when a profile sits just outside the half-space.
    """
    a = 0.5 * (n - 1)
    return special.betainc(a, a, np.clip(x, 0.0, 1.0))


def cap_area_fraction(n: int, theta_max: float) -> float:
    """Fraction of S^(n-1) within angle ``theta_max`` of e_1."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 <= theta_max <= math.pi:
        raise ValueError(f"theta_max must lie in [0, pi], got {theta_max!r}")
    return float(cap_fraction_from_sagitta(n, math.sin(0.5 * theta_max) ** 2))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


def _panel_rule(f, a, b):
    """Gauss-Legendre estimate on every panel [a_i, b_i]; returns shape (m, P)."""
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES
    fx = np.asarray(f(x.ravel()), dtype=float)
    fx = fx.reshape((-1,) + x.shape)
    return (fx @ _GL_WEIGHTS) * half


def _split_at_tail(a, b, breakpoints, cfg):
    pts = sorted({float(t) for t in breakpoints if a < t < b} | {float(a), float(b)})
    if math.isinf(b) and cfg.tail_transform == "none":
        raise ValueError("infinite domain requires tail_transform='reciprocal'")
    if math.isinf(a):
        raise ValueError("only upper-unbounded domains are supported")
    segments = [(lo, hi) for lo, hi in zip(pts[:-1], pts[1:])]
    finite = [s for s in segments if not math.isinf(s[1])]
    tail = [s for s in segments if math.isinf(s[1])]
    if tail and tail[0][0] <= 0.0:
        # reciprocal map needs a positive start
        lo = tail[0][0]
        cut = lo + 1.0
        finite.append((lo, cut))
        tail = [(cut, math.inf)]
    return finite, (tail[0][0] if tail else None)


def adaptive_quad(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    cfg: QuadratureConfig | None = None,
    breakpoints: Sequence[float] = (),
) -> QuadResult:
    """Integrate a (possibly vector-valued) vectorised integrand over [a, b].

    ``f`` maps a 1-D array of abscissae to an array whose last axis matches it;
    leading axes are independent components sharing the same refinement.  An
    infinite upper limit is handled by r = 1/t on the final segment.
    """
    cfg = cfg or QuadratureConfig()
    finite, tail_start = _split_at_tail(a, b, breakpoints, cfg)

    x_probe = 0.5 * (finite[0][0] + finite[0][1]) if finite else 2.0 * tail_start
    with np.errstate(all="ignore"):
        probe = np.asarray(f(np.array([x_probe])), dtype=float)
    n_comp = max(1, probe.size)
    scalar = probe.ndim <= 1 and probe.size == 1

    def wrap(g):
        return lambda x: np.asarray(g(x), dtype=float).reshape(n_comp, -1)

    groups = []
    if finite:
        lo = np.array([s[0] for s in finite])
        hi = np.array([s[1] for s in finite])
        groups.append((wrap(f), lo, hi))
    if tail_start is not None:
        def tail(t):
            r = 1.0 / t
            return np.asarray(f(r), dtype=float).reshape(n_comp, -1) / (t * t)

        groups.append((tail, np.array([0.0]), np.array([1.0 / tail_start])))

    accepted = np.zeros(n_comp)
    accepted_err = np.zeros(n_comp)
    active = []
    for g, lo, hi in groups:
        active.append((g, lo, hi, _panel_rule(g, lo, hi)))

    for _depth in range(cfg.max_depth + 1):
        evaluated = []
        for g, lo, hi, coarse in active:
            mid = 0.5 * (lo + hi)
            left = _panel_rule(g, lo, mid)
            right = _panel_rule(g, mid, hi)
            fine = left + right
            err = np.abs(fine - coarse)
            evaluated.append((g, lo, mid, hi, left, right, fine, err))
        estimate = accepted + sum(e[6].sum(axis=1) for e in evaluated)
        tol = np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(estimate))
        n_active = sum(e[1].size for e in evaluated)
        budget = np.maximum(tol - accepted_err, 0.0)
        threshold = budget / max(n_active, 1)
        if not np.all(np.isfinite(estimate)):
            raise QuadratureError("non-finite integrand values", estimate, np.inf)

        next_active = []
        for g, lo, mid, hi, left, right, fine, err in evaluated:
            ok = np.all(err <= threshold[:, None], axis=0)
            accepted += fine[:, ok].sum(axis=1)
            accepted_err += err[:, ok].sum(axis=1)
            bad = ~ok
            if bad.any():
                new_lo = np.concatenate([lo[bad], mid[bad]])
                new_hi = np.concatenate([mid[bad], hi[bad]])
                new_coarse = np.concatenate([left[:, bad], right[:, bad]], axis=1)
                next_active.append((g, new_lo, new_hi, new_coarse))
        active = next_active
        if not active:
            break
    else:
        pending = sum(c.sum(axis=1) for *_, c in active)
        value = accepted + pending
        raise QuadratureError(
            f"no convergence within max_depth={cfg.max_depth}",
            value if not scalar else float(value[0]),
            float(np.max(tol)),
        )

    if scalar:
        return QuadResult(float(accepted[0]), float(accepted_err[0]))
    return QuadResult(accepted.reshape(probe.shape[:-1]), accepted_err.reshape(probe.shape[:-1]))


def integrate_radial(
    f: Callable[[np.ndarray], np.ndarray],
    weight_power: int = 0,
    domain: tuple[float, float] = (0.0, math.inf),
    cfg: QuadratureConfig | None = None,
    breakpoints: Sequence[float] = (),
    full_output: bool = False,
):
    """Adaptive estimate of the integral of f(r) r**weight_power over ``domain``."""
    if weight_power < 0 or int(weight_power) != weight_power:
        raise ValueError("weight_power must be a nonnegative integer")
    if weight_power:
        def g(r):
            return np.asarray(f(r), dtype=float) * r**weight_power
    else:
        g = f
    res = adaptive_quad(g, domain[0], domain[1], cfg, breakpoints)
    return res if full_output else res.value


def find_root_bracketed(
    g: Callable[[float], float],
    bracket: Bracket,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Root of ``g`` inside a sign-changing bracket.

    Secant steps (Illinois-weighted regula falsi) are taken while they shrink
    the bracket by at least half every two steps; otherwise bisect.
    """
    a, b = float(bracket.lo), float(bracket.hi)
    fa, fb = float(g(a)), float(g(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if math.copysign(1.0, fa) == math.copysign(1.0, fb):
        raise BracketError(a, b, fa, fb)
    side = 0
    widths = [b - a]
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if len(widths) >= 3 and widths[-1] > 0.5 * widths[-3]:
            x = 0.5 * (a + b)
            side = 0
        else:
            x = (a * fb - b * fa) / (fb - fa)
            if not a < x < b:
                x = 0.5 * (a + b)
        fx = float(g(x))
        if fx == 0.0:
            return x
        if math.copysign(1.0, fx) == math.copysign(1.0, fa):
            a, fa = x, fx
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb = x, fx
            if side == 1:
                fa *= 0.5
            side = 1
        widths.append(b - a)
    return a if abs(fa) < abs(fb) else b


def minimize_scalar(
    h: Callable[[float], float],
    bracket: Bracket,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Bounded Brent minimisation of ``h`` on ``bracket``; returns (argmin, min)."""
    res = optimize.minimize_scalar(
        h, bounds=(bracket.lo, bracket.hi), method="bounded",
        options={"xatol": tol, "maxiter": 500},
    )
    x = float(res.x)
    fx = float(res.fun)
    # the bounded method never samples the endpoints themselves
    for end in (bracket.lo, bracket.hi):
        fe = float(h(end))
        if fe < fx:
            x, fx = end, fe
    return x, fx
