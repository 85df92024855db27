"""Two-dimensional quadrature for functions symmetric about the x_1 axis.

Points of the closed half-space are written as (x_1, rho) with rho the
distance to the axis, and the volume element is |S^{n-2}| rho^{n-2} dx_1 drho.
Integration uses polar coordinates (r, theta) in that half-plane about an axis
point ``center * e_1``, normally the center of the dominant profile, so that the
profile depends on r alone and only cutoffs and bumps vary with theta.

Every domain is the half-space intersected with balls (or ball complements)
centered on the axis.  Each such constraint is linear in cos(theta), so the
admissible angles at fixed r form one interval.  Interval endpoints are
evaluated from half-angle (sagitta) forms, which keeps thin caps exact when
the center sits a tiny distance outside the half-space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kernel import QuadratureConfig, QuadResult, adaptive_quad, sphere_area

__all__ = ["AxisBall", "axisym_quad", "radial_cutoff", "compact_bump"]


@dataclass(frozen=True)
class AxisBall:
    """The ball |x - b e_1| < a (``inside=True``) or its complement."""

    b: float
    a: float
    inside: bool = True

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("ball radius must be positive")


_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(15)


def _half_angle_limit(num, den):
    """2 arcsin(sqrt(num/den)) clipped to [0, pi]; num may be negative (empty)."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return 2.0 * np.arcsin(np.sqrt(np.clip(ratio, 0.0, 1.0))), ratio


def _theta_interval(t, r, center, r0, balls):
    """Admissible theta interval [lo, hi] at radius r = r0 + t about center*e_1."""
    lo = np.zeros_like(r)
    hi = np.full_like(r, math.pi)
    # half-space x_1 >= 0
    if center < 0:
        # x_1 = t - 2 r sin^2(theta/2) >= 0 with r0 = |center|
        lim, _ = _half_angle_limit(t, 2.0 * r)
        hi = np.minimum(hi, lim)
    else:
        # x_1 = center + r cos(theta) >= 0; binding only beyond r = center
        lim, _ = _half_angle_limit(r - center, 2.0 * r)
        hi = np.minimum(hi, np.where(r > center, math.pi - lim, math.pi))
    for ball in balls:
        delta = center - ball.b
        dist = abs(delta)
        if dist == 0.0:
            inside = r < ball.a
            keep = inside if ball.inside else ~inside
            hi = np.where(keep, hi, lo)
            continue
        # r - dist, exact when dist == r0
        gap = t + (r0 - dist)
        num = ball.a**2 - gap * gap
        lim, ratio = _half_angle_limit(num, 4.0 * dist * r)
        full = ratio >= 1.0
        if delta < 0:
            # ball lies toward theta = 0: inside iff theta <= lim
            if ball.inside:
                hi = np.minimum(hi, np.where(full, math.pi, lim))
            else:
                lo = np.maximum(lo, np.where(full, math.pi, lim))
        else:
            # ball lies toward theta = pi: inside iff theta >= pi - lim
            edge = math.pi - lim
            if ball.inside:
                lo = np.maximum(lo, np.where(full, 0.0, edge))
            else:
                hi = np.minimum(hi, np.where(full, 0.0, edge))
    return lo, np.maximum(hi, lo)


def axisym_quad(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n: int,
    center: float = 0.0,
    balls: Sequence[AxisBall] = (),
    r_range: tuple[float, float] = (0.0, math.inf),
    cfg: QuadratureConfig | None = None,
    breakpoints: Sequence[float] = (),
    theta_panels: int = 4,
) -> QuadResult:
    """Integral over H intersected with ``balls`` of f(x_1, rho) d^n x.

    ``f`` takes arrays (x1, rho) of equal shape and returns either an array of
    that shape or one with a leading component axis.  The radial variable is
    t = r - r0 with r0 = |center| when the center lies outside the half-space
    (and 0 otherwise); ``r_range`` and ``breakpoints`` refer to t.  For an
    outside center x_1 is formed as t - 2 r sin^2(theta/2), so points a tiny
    distance from the boundary keep their relative precision as long as t does.
    """
    cfg = cfg or QuadratureConfig()
    r0 = -center if center < 0 else 0.0
    area = sphere_area(n - 2)
    k = theta_panels
    edges = np.linspace(0.0, 1.0, k + 1)
    xi = ((0.5 * (edges[:-1] + edges[1:]))[:, None]
          + 0.5 * (edges[1:] - edges[:-1])[:, None] * _NODES).ravel()
    wi = (0.5 * (edges[1:] - edges[:-1])[:, None] * _WEIGHTS).ravel()

    def g(t):
        t = np.asarray(t, dtype=float)
        r = r0 + t
        lo, hi = _theta_interval(t, r, center, r0, balls)
        span = hi - lo
        theta = lo[:, None] + span[:, None] * xi
        rr = r[:, None]
        half = np.sin(0.5 * theta)
        if center < 0:
            x1 = t[:, None] - 2.0 * rr * half * half
        else:
            x1 = center + rr * np.cos(theta)
        x1 = np.maximum(x1, 0.0)
        rho = rr * np.sin(theta)
        with np.errstate(all="ignore"):
            vals = np.asarray(f(x1, rho), dtype=float)
        jac = area * rho ** (n - 2) * rr * span[:, None] * wi
        vals = np.where(jac > 0, vals, 0.0) * jac
        return vals.sum(axis=-1)

    bps = set(float(b) for b in breakpoints)
    if center > 0:
        bps.add(center)
    for ball in balls:
        dist = abs(center - ball.b)
        for edge in (dist - ball.a, dist + ball.a, ball.a - dist):
            t_edge = edge - r0
            if t_edge > 0:
                bps.add(t_edge)
        if ball.a > abs(ball.b):
            # radius at which the sphere meets the boundary plane
            t_edge = math.sqrt(center * center + (ball.a - ball.b) * (ball.a + ball.b)) - r0
            if t_edge > 0:
                bps.add(t_edge)
    return adaptive_quad(g, r_range[0], r_range[1], cfg, sorted(bps))


def radial_cutoff(r, inner: float, outer: float):
    """(value, d/dr) of a C^2 quintic step: 1 for r <= inner, 0 for r >= outer."""
    r = np.asarray(r, dtype=float)
    width = outer - inner
    t = np.clip((r - inner) / width, 0.0, 1.0)
    value = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    deriv = -30.0 * t * t * (1.0 - t) ** 2 / width
    return value, deriv


def compact_bump(dist2, a: float):
    """(value, d/d(dist^2)) of (1 - dist^2/a^2)^3 on the ball of radius a, zero outside."""
    u = np.clip(1.0 - np.asarray(dist2, dtype=float) / (a * a), 0.0, None)
    return u**3, -3.0 * u * u / (a * a)
