"""Strict binding inequality: certified gaps over splits and the two-bump competitor.

A split moves a fraction of the bulk mass and of the trace mass into a second
profile.  With m_1^{p*} + m_2^{p*} = 1 and t_1^{p#} + t_2^{p#} = T^{p#}, the gap

    m_1^p Phi(t_1/m_1)^p + m_2^p Phi(t_2/m_2)^p - Phi(T)^p

is positive at every interior split.  ``build_split_function`` realises the
right-hand side as an honest competitor: two cut-off extremals far apart on
the boundary, plus two small bumps that restore both constraints exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .axisym import AxisBall, axisym_quad, compact_bump, radial_cutoff
from .curve import smallest_solvable_T, FundamentalConstants, PhiPoint, _solve_grid, fundamental_constants
from .kernel import (
    Bracket,
    Params,
    QuadratureConfig,
    adaptive_quad,
    find_root_bracketed,
    sphere_area,
)
from .profiles import NormalizedExtremal, bulk_breakpoints, trace_breakpoints

__all__ = [
    "SplitSpec",
    "GapResult",
    "BindingScan",
    "PartitionCheck",
    "ConeSpec",
    "BumpNorms",
    "CorrectionBump",
    "SplitConstruction",
    "GAP_COLUMNS",
    "PhiTable",
    "split_complement",
    "binding_gap",
    "scan_binding_grid",
    "corner_path",
    "finite_partition_check",
    "proof_side_bound",
    "build_split_function",
    "split_energy_convergence",
    "cone_for_split",
]

GAP_COLUMNS = ("m1", "t1", "m2", "t2", "T1", "T2", "lhs", "rhs", "gap", "errBound")
CUTOFF_NAME = "quintic smoothstep, 1 on B_{R/2}, 0 off B_R"
_INVARIANT_TOL = 1e-12


@dataclass(frozen=True)
class SplitSpec:
    T: float
    m1: float
    m2: float
    t1: float
    t2: float
    params: Params = field(compare=False, repr=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        for name in ("m1", "m2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("trace parts must be nonnegative")
        ps, pz = self.params.p_star, self.params.p_sharp
        mass_err = abs(self.m1**ps + self.m2**ps - 1.0)
        trace_err = abs(self.t1**pz + self.t2**pz - self.T**pz) / self.T**pz
        if mass_err > _INVARIANT_TOL or trace_err > _INVARIANT_TOL:
            raise ValueError(f"split violates constraints (mass {mass_err:.3g}, trace {trace_err:.3g})")

    @property
    def T1(self) -> float:
        return self.t1 / self.m1

    @property
    def T2(self) -> float:
        return self.t2 / self.m2

    def swapped(self) -> "SplitSpec":
        return replace(self, m1=self.m2, m2=self.m1, t1=self.t2, t2=self.t1)

    def key(self):
        return (self.m1, self.t1, self.m2, self.t2)


def split_complement(T: float, m1: float, t1: float, params: Params) -> SplitSpec:
    """Complete (m1, t1) to a split of unit bulk mass and trace mass T^{p#}."""
    if not 0.0 < m1 < 1.0:
        raise ValueError(f"m1 must lie in (0, 1), got {m1!r}")
    if not 0.0 <= t1 <= T:
        raise ValueError(f"t1 must lie in [0, T], got t1={t1!r}, T={T!r}")
    ps, pz = params.p_star, params.p_sharp
    m2 = (-math.expm1(ps * math.log(m1))) ** (1.0 / ps)
    if t1 == T:
        t2 = 0.0
    elif t1 == 0.0:
        t2 = T
    else:
        t2 = T * (-math.expm1(pz * math.log(t1 / T))) ** (1.0 / pz)
    return SplitSpec(T, m1, m2, t1, t2, params)


@dataclass(frozen=True)
class GapResult:
    spec: SplitSpec
    lhs: float
    rhs: float
    gap: float
    err_bound: float

    @property
    def certified(self) -> bool:
        return self.gap > self.err_bound

    def record(self) -> dict:
        s = self.spec
        return {"m1": s.m1, "t1": s.t1, "m2": s.m2, "t2": s.t2, "T1": s.T1, "T2": s.T2,
                "lhs": self.lhs, "rhs": self.rhs, "gap": self.gap, "errBound": self.err_bound}


class PhiTable:
    """Memoised Phi values with error bars; T = 0 maps to the Sobolev constant."""

    def __init__(self, params: Params, cfg: QuadratureConfig | None = None,
                 consts: FundamentalConstants | None = None):
        self.params = params
        self.cfg = cfg or QuadratureConfig()
        self.consts = consts or fundamental_constants(params, self.cfg, estimate_t_star=False)
        from .profiles import full_space_sobolev_ratio

        S, rel = full_space_sobolev_ratio(params, self.cfg)
        self._values = {0.0: (S, S * rel + 1e-15 * S)}
        self._S = S
        self._t_min = None

    def _tiny(self, T):
        """Below the invertible range Phi is pinned between Phi(T_min) and S by monotonicity."""
        if self._t_min is None:
            self._t_min = smallest_solvable_T(self.params, self.cfg)
            self._phi_min = _solve_grid([self._t_min * (1 + 1e-12)], self.params, self.cfg, self.consts,
                                        with_error=True)[0]
        lo = self._phi_min.phi - self._phi_min.phi_err
        hi = self._values[0.0][0] + self._values[0.0][1]
        return 0.5 * (lo + hi), 0.5 * (hi - lo)

    def fill(self, Tvalues, threads: int = 1, chunk: int = 64):
        todo = sorted({float(t) for t in Tvalues if float(t) not in self._values})
        if todo and todo[0] < 1e-3 * self.consts.T0:
            t_min = smallest_solvable_T(self.params, self.cfg)
            for t in [t for t in todo if 0 < t <= t_min]:
                self._values[t] = self._tiny(t)
            todo = [t for t in todo if t > t_min]
        if not todo:
            return
        chunks = [todo[i:i + chunk] for i in range(0, len(todo), chunk)]

        def work(ts):
            return _solve_grid(ts, self.params, self.cfg, self.consts, with_error=True)

        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, chunks))
        else:
            results = [work(c) for c in chunks]
        for ts, pts in zip(chunks, results):
            for t, pt in zip(ts, pts):
                self._values[t] = (pt.phi, pt.phi_err)

    def __call__(self, T: float):
        T = float(T)
        if T not in self._values:
            self.fill([T])
        return self._values[T]


def binding_gap(spec: SplitSpec, params: Params, cfg: QuadratureConfig | None = None,
                table: PhiTable | None = None) -> GapResult:
    """Gap of the strict binding inequality at one split, with a propagated error bound."""
    table = table or PhiTable(params, cfg)
    p = params.p
    phi, e = table(spec.T)
    phi1, e1 = table(spec.T1)
    phi2, e2 = table(spec.T2)
    lhs = phi**p
    a = spec.m1**p * phi1**p
    b = spec.m2**p * phi2**p
    rhs = a + b
    gap = rhs - lhs
    err = (p * phi ** (p - 1) * e + spec.m1**p * p * phi1 ** (p - 1) * e1
           + spec.m2**p * p * phi2 ** (p - 1) * e2)
    err += 4 * np.finfo(float).eps * max(lhs, rhs)
    return GapResult(spec, lhs, rhs, gap, float(err))


@dataclass
class BindingScan:
    T: float
    min_gap: float
    argmin: SplitSpec
    table: list
    uncertified: list

    @property
    def min_certified(self) -> bool:
        return not self.uncertified


def _grid_specs(T, grid_res, params, margin):
    specs = []
    for m1 in np.linspace(margin, 1.0 - margin, grid_res):
        for f in np.linspace(0.0, 1.0, grid_res):
            specs.append(split_complement(T, float(m1), float(T * f), params))
    return specs


def scan_binding_grid(T: float, grid_res: int, params: Params, cfg: QuadratureConfig | None = None,
                      margin: float = 0.05, threads: int = 1, table: PhiTable | None = None) -> BindingScan:
    """Gaps on a grid_res x grid_res grid of (m1, t1/T) in [margin, 1-margin] x [0, 1]."""
    if grid_res < 4:
        raise ValueError("grid_res must be >= 4")
    if not 0.0 < margin < 0.5:
        raise ValueError("margin must lie in (0, 0.5)")
    table = table or PhiTable(params, cfg)
    specs = _grid_specs(T, grid_res, params, margin)
    table.fill([T] + [s.T1 for s in specs] + [s.T2 for s in specs], threads=threads)
    results = [binding_gap(s, params, cfg, table) for s in specs]
    best = min(results, key=lambda g: (g.gap, g.spec.key()))
    bad = [g for g in results if not g.certified]
    return BindingScan(T, best.gap, best.spec, results, bad)


def corner_path(T: float, m2_values, params: Params, cfg: QuadratureConfig | None = None,
                table: PhiTable | None = None) -> list:
    """Gaps along m2 -> 0 with T2 = t2/m2 = T held fixed (the degenerate corner)."""
    table = table or PhiTable(params, cfg)
    ps = params.p_star
    out = []
    for m2 in m2_values:
        m1 = (-math.expm1(ps * math.log(m2))) ** (1.0 / ps)
        t2 = T * m2
        t1 = (T**params.p_sharp - t2**params.p_sharp) ** (1.0 / params.p_sharp)
        spec = SplitSpec(T, m1, m2, t1, t2, params)
        out.append(binding_gap(spec, params, cfg, table))
    return out


@dataclass(frozen=True)
class PartitionCheck:
    masses: tuple
    traces: tuple
    lhs: float
    total: float

    @property
    def holds(self) -> bool:
        return self.total >= self.lhs


def finite_partition_check(T: float, parts: int, params: Params, rng: np.random.Generator,
                           cfg: QuadratureConfig | None = None, table: PhiTable | None = None) -> PartitionCheck:
    """Sum of m_i^p Phi(t_i/m_i)^p against Phi(T)^p for a random partition."""
    if parts < 2:
        raise ValueError("need at least two parts")
    table = table or PhiTable(params, cfg)
    ps, pz, p = params.p_star, params.p_sharp, params.p
    mw = rng.dirichlet(np.ones(parts))
    tw = rng.dirichlet(np.ones(parts))
    masses = tuple(float(w ** (1.0 / ps)) for w in mw)
    traces = tuple(float((w * T**pz) ** (1.0 / pz)) for w in tw)
    total = math.fsum(m**p * table(t / m)[0] ** p for m, t in zip(masses, traces))
    return PartitionCheck(masses, traces, table(T)[0] ** p, total)


def proof_side_bound(spec: SplitSpec, params: Params, cfg: QuadratureConfig | None = None,
                     grid: int = 400) -> dict:
    """The explicit lower bound c_0 = a c^3 |U_{T1}|_inf^{-n/(n-p)} eps / 2 from the proof.

    ``c`` is scanned over powers of two and the best bound is kept.  The set
    where the smaller profile is large, steep and has a tangential slope of at
    least ``c`` is measured on a midpoint grid, so this is a report, not a
    certified quantity.
    """
    cfg = cfg or QuadratureConfig()
    if spec.m1 > spec.m2:
        spec = spec.swapped()
    if spec.t1 == 0.0:
        raise ValueError("the bound needs a profile with positive trace ratio")
    n, ps = params.n, params.p_star
    consts = fundamental_constants(params, cfg, estimate_t_star=False)
    ext1 = _solve_grid([spec.T1], params, cfg, consts)[0].extremal
    extT = _solve_grid([spec.T], params, cfg, consts)[0].extremal
    s1 = ext1.s
    sup = float(ext1.value_grad(max(s1, 0.0), 0.0)[0])
    L = 8.0 * max(max(s1, 0.0), _trace_half_radius(ext1, params, cfg))
    h = L / grid
    x1 = (np.arange(grid) + 0.5) * h
    rho = (np.arange(grid) + 0.5) * h
    X1, RHO = np.meshgrid(x1, rho, indexing="ij")
    v, g1, gr = ext1.value_grad(X1, RHO)
    gnorm = np.hypot(g1, gr)
    vol = sphere_area(n - 2) * RHO ** (n - 2) * h * h
    best = {"c_bar": None, "a_bar": 0.0, "eps": 0.0, "sup_norm": sup, "c0": 0.0}
    for c in 2.0 ** -np.arange(1, 16):
        ok = (v >= c * sup) & (gnorm >= c)
        # directions w in S^{n-2} with d_rho U * w_n >= c, d_rho U <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(gr < 0, c / -gr, np.inf)
        if n == 2:
            frac = np.where(k <= 1.0, 0.5, 0.0)
        else:
            from .kernel import cap_fraction_from_sagitta

            frac = np.where(k <= 1.0, cap_fraction_from_sagitta(n - 1, 0.5 * (1.0 - np.clip(k, -1, 1))), 0.0)
        a_bar = spec.m1**ps * float(np.sum(np.where(ok, v**ps * frac * vol, 0.0))) / 3.0
        if a_bar <= 0:
            continue
        eps = _excision_radius(extT, a_bar, params, cfg)
        c0 = 0.5 * a_bar * c**3 * sup ** (-n / (n - params.p)) * eps
        if c0 > best["c0"]:
            best = {"c_bar": float(c), "a_bar": a_bar, "eps": eps, "sup_norm": sup, "c0": float(c0)}
    return best


def _excision_radius(ext: NormalizedExtremal, a_bar: float, params: Params, cfg) -> float:
    """Radius eps with target mass a_bar in B(s e_1, eps); |s| itself when s < 0."""
    s = ext.s
    if s < 0:
        return abs(s)
    ps = params.p_star

    def mass(eps):
        def f(x1, rho):
            return ext.value_grad(x1, rho)[0] ** ps
        return axisym_quad(f, params.n, center=s, balls=[AxisBall(s, eps)], r_range=(0.0, eps),
                           cfg=cfg).value

    hi = 1.0
    while mass(hi) < a_bar:
        hi *= 2.0
    lo = 1e-3 * hi
    while mass(lo) > a_bar:
        lo *= 1e-3
    return find_root_bracketed(lambda e: mass(e) - a_bar, Bracket(lo, hi), tol=1e-10 * hi)


# ---------------------------------------------------------------------------
# explicit two-bump competitor


@dataclass(frozen=True)
class ConeSpec:
    """Flat double cone {|z_n| < slope |z'|}, z' the other n-1 coordinates."""

    slope: float
    axis: int = -1

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("cone slope must be positive")

    def contains(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        zn = Z[:, self.axis]
        rest = np.delete(Z, self.axis % Z.shape[1], axis=1)
        return np.abs(zn) < self.slope * np.linalg.norm(rest, axis=1)


def cone_for_split(R: float, sep: float, margin: float = 1e-9) -> ConeSpec:
    """Flattest cone whose reciprocal cone contains every difference B^+ - B^-."""
    c = 0.5 * sep
    if not c > R:
        raise ValueError("bump supports must be disjoint (sep > 2R)")
    return ConeSpec(R / math.sqrt(c * c - R * R) * (1.0 + margin))


@dataclass(frozen=True)
class BumpNorms:
    lp_star_mass: float
    trace_mass: float
    grad_energy: float


@dataclass(frozen=True)
class CorrectionBump:
    kind: str
    center: float
    radius: float
    amplitude: float
    mass_increment: float
    trace_increment: float
    energy_increment: float


@dataclass
class SplitConstruction:
    """Two cut-off extremals at +-(sep/2) e_n plus two correction bumps on the heavier one.

    Bump 1 (index 0) always carries the smaller mass and sits at +sep/2 e_n.
    """

    spec: SplitSpec
    R: float
    sep: float
    cutoff: str
    bump_norms: tuple
    correction_budget: tuple
    corrections: tuple
    w_energy: float
    rhs: float
    lhs: float
    constraint_residuals: tuple
    lower_mass: float
    extremals: tuple = field(repr=False)
    masses: tuple = field(repr=False)
    params: Params = field(repr=False)
    bump_energies: tuple = ()

    @property
    def excess(self) -> float:
        return self.w_energy - self.rhs

    def cone(self, margin: float = 1e-9) -> ConeSpec:
        return cone_for_split(self.R, self.sep, margin)

    def centers(self):
        n = self.params.n
        c = np.zeros((2, n))
        c[0, -1] = 0.5 * self.sep
        c[1, -1] = -0.5 * self.sep
        return c

    def value_grad(self, X):
        """w and its gradient at points X of shape (N, n) in the closed half-space."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self.params.n
        value = np.zeros(X.shape[0])
        grad = np.zeros_like(X)
        R = self.R
        for k, (ext, m, ctr) in enumerate(zip(self.extremals, self.masses, self.centers())):
            Y = X - ctr
            x1 = Y[:, 0]
            tang = Y[:, 1:]
            rho = np.linalg.norm(tang, axis=1)
            r = np.hypot(x1, rho)
            inside = r < R
            if not inside.any():
                continue
            v, g1, gr = ext.value_grad(x1[inside], rho[inside])
            eta, deta = radial_cutoff(r[inside], 0.5 * R, R)
            rr = np.where(r[inside] > 0, r[inside], 1.0)
            W = m * v * eta
            G1 = m * (g1 * eta + v * deta * x1[inside] / rr)
            GR = m * (gr * eta + v * deta * rho[inside] / rr)
            if k == 1 and self.corrections:
                c = np.zeros_like(W)
                c1 = np.zeros_like(W)
                cr = np.zeros_like(W)
                for cb in self.corrections:
                    dx = x1[inside] - cb.center
                    phi, dphi = compact_bump(dx * dx + rho[inside] ** 2, cb.radius)
                    c += cb.amplitude * phi
                    c1 += cb.amplitude * dphi * 2.0 * dx
                    cr += cb.amplitude * dphi * 2.0 * rho[inside]
                # bumps sit inside B_{R/2} where eta = 1
                G1 = G1 * (1.0 + c) + W * c1
                GR = GR * (1.0 + c) + W * cr
                W = W * (1.0 + c)
            value[inside] += W
            grad[inside, 0] += G1
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(rho[inside, None] > 0, tang[inside] / rho[inside, None], 0.0)
            grad[inside, 1:] += GR[:, None] * unit
        return value, grad

    def record(self) -> dict:
        return {
            "T": self.spec.T, "m1": self.spec.m1, "t1": self.spec.t1,
            "m2": self.spec.m2, "t2": self.spec.t2, "R": self.R, "sep": self.sep,
            "cutoff": self.cutoff,
            "bumpNorms": [[b.lp_star_mass, b.trace_mass, b.grad_energy] for b in self.bump_norms],
            "correctionBudget": list(self.correction_budget),
            "corrections": [[c.kind, c.center, c.radius, c.amplitude] for c in self.corrections],
            "wEnergy": self.w_energy, "rhs": self.rhs, "lhs": self.lhs,
            "constraintResiduals": list(self.constraint_residuals),
            "lowerMass": self.lower_mass,
        }


def _grad_p(g1, gr, p):
    return (g1 * g1 + gr * gr) ** (0.5 * p)


def _unit_bump_norms(ext: NormalizedExtremal, R: float, params: Params, cfg):
    """Norms of U eta(|x|/R) for a unit-mass extremal U; bulk by 2-D quadrature."""
    n, ps, pz, p = params.n, params.p_star, params.p_sharp, params.p
    tp = ext.base
    bps = bulk_breakpoints(tp)

    def core(x1, rho):
        v, g1, gr = ext.value_grad(x1, rho)
        return np.stack([v**ps, _grad_p(g1, gr, p)])

    def shell(x1, rho):
        v, g1, gr = ext.value_grad(x1, rho)
        r = np.hypot(x1, rho)
        eta, deta = radial_cutoff(r, 0.5 * R, R)
        rr = np.where(r > 0, r, 1.0)
        G1 = g1 * eta + v * deta * x1 / rr
        GR = gr * eta + v * deta * rho / rr
        return np.stack([(v * eta) ** ps, _grad_p(G1, GR, p)])

    a = axisym_quad(core, n, center=tp.s, balls=[AxisBall(0.0, 0.5 * R)], cfg=cfg, breakpoints=bps)
    b = axisym_quad(shell, n, center=tp.s, balls=[AxisBall(0.0, R), AxisBall(0.0, 0.5 * R, False)],
                    cfg=cfg, breakpoints=bps)
    area = sphere_area(n - 2)

    def tr(rho):
        v = ext.value_grad(np.zeros_like(rho), rho)[0]
        eta, _ = radial_cutoff(rho, 0.5 * R, R)
        return area * (v * eta) ** pz * rho ** (n - 2)

    tbps = [t for t in trace_breakpoints(tp) if t < R] + [0.5 * R]
    t = adaptive_quad(tr, 0.0, R, cfg, tbps)
    mass, energy = a.value + b.value
    return BumpNorms(float(mass), float(t.value), float(energy))


def _trace_half_radius(ext: NormalizedExtremal, params: Params, cfg) -> float:
    n, pz = params.n, params.p_sharp
    area = sphere_area(n - 2)
    tp = ext.base
    total = ext.T**pz

    def tr(rho):
        return area * ext.value_grad(np.zeros_like(rho), rho)[0] ** pz * rho ** (n - 2)

    bps = trace_breakpoints(tp)

    def part(u):
        ell = math.exp(u)
        return adaptive_quad(tr, 0.0, ell, cfg, [b for b in bps if b < ell]).value - 0.5 * total

    lo, hi = math.log(bps[0]) if bps else -5.0, 0.0
    while part(hi) < 0:
        hi += 1.0
    while part(lo) > 0:
        lo -= 2.0
    return math.exp(find_root_bracketed(part, Bracket(lo, hi), tol=1e-6))


def _pow_increment(base, add, k):
    """(base + add)^k - base^k without cancellation for small add/base."""
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = add / base
        out = base**k * np.expm1(k * np.log1p(rel))
    return np.where(base > 0, out, np.maximum(add, 0.0) ** k)


def _solve_monotone(fun, target, guess, lower=-math.inf):
    """Root of fun(x) = target for increasing fun with fun(0) = 0 and x > lower."""
    if target == 0:
        return 0.0
    if target > 0:
        hi = guess
        while fun(hi) < target:
            hi *= 4.0
            if hi > 1e12:
                raise RuntimeError("correction amplitude search diverged")
        return find_root_bracketed(lambda x: fun(x) - target, Bracket(0.0, hi), tol=1e-15 * hi)
    lo = -guess
    while fun(lo) > target:
        nxt = 4.0 * lo
        if nxt <= lower:
            nxt = 0.5 * (lo + lower)
            if nxt - lower < 1e-9 * abs(lower):
                raise RuntimeError("negative correction would make w negative")
        lo = nxt
    return find_root_bracketed(lambda x: fun(x) - target, Bracket(lo, 0.0), tol=1e-15 * abs(lo))


def _ball_breaks(center, ball_b, a, r0):
    dist = abs(center - ball_b)
    return [e - r0 for e in (dist - a, dist + a, a - dist) if e - r0 > 0]


def _corrections(ext, m, dm, dt, R, params, cfg):
    """Amplitudes (B, A) of w_2 = m U (1 + B phi_b + A phi_i).

    phi_b is centered on the boundary and phi_i strictly inside, so the trace
    equation involves B alone and the mass equation then fixes A: the 2-D
    system is triangular.  A may be negative (the boundary bump usually
    overshoots the mass budget); w stays positive as long as A > -1.
    """
    n, ps, pz, p = params.n, params.p_star, params.p_sharp, params.p
    area = sphere_area(n - 2)
    tp = ext.base
    s = tp.s
    ell = _trace_half_radius(ext, params, cfg)
    a_b = min(0.5 * ell, 0.1 * R)
    a_i = min(ell, 0.2 * R)
    h = max(s, 1.05 * a_i)
    reach = max(a_b, h + a_i)
    if reach >= 0.5 * R:
        raise ValueError("cutoff radius too small to host the correction bumps")
    r0 = -s if s < 0 else 0.0
    bps = sorted(set(bulk_breakpoints(tp) + _ball_breaks(s, 0.0, a_b, r0) + _ball_breaks(s, h, a_i, r0)))
    region = [AxisBall(0.0, reach)]

    def factors(x1, rho, B, A):
        pb, dpb = compact_bump(x1 * x1 + rho * rho, a_b)
        dx = x1 - h
        pi, dpi = compact_bump(dx * dx + rho * rho, a_i)
        c = B * pb + A * pi
        c1 = 2.0 * (B * dpb * x1 + A * dpi * dx)
        cr = 2.0 * rho * (B * dpb + A * dpi)
        return c, c1, cr

    def mass_inc(B, A):
        def f(x1, rho):
            v = ext.value_grad(x1, rho)[0]
            c, _, _ = factors(x1, rho, B, A)
            return (m * v) ** ps * np.expm1(ps * np.log1p(c))
        return axisym_quad(f, n, center=s, balls=region, cfg=cfg, breakpoints=bps).value

    def trace_inc(B):
        def f(rho):
            x1 = np.zeros_like(rho)
            v = ext.value_grad(x1, rho)[0]
            c, _, _ = factors(x1, rho, B, 0.0)
            return area * (m * v) ** pz * np.expm1(pz * np.log1p(c)) * rho ** (n - 2)
        return adaptive_quad(f, 0.0, a_b, cfg, [t for t in trace_breakpoints(tp) if t < a_b]).value

    def energy_inc(B, A):
        def f(x1, rho):
            v, g1, gr = ext.value_grad(x1, rho)
            c, c1, cr = factors(x1, rho, B, A)
            G1, GR = m * g1, m * gr
            D1 = m * (g1 * c + v * c1)
            DR = m * (gr * c + v * cr)
            g2 = G1 * G1 + GR * GR
            cross = 2.0 * (G1 * D1 + GR * DR) + D1 * D1 + DR * DR
            with np.errstate(divide="ignore", invalid="ignore"):
                small = g2 ** (0.5 * p) * np.expm1(0.5 * p * np.log1p(cross / g2))
            direct = (g2 + cross) ** (0.5 * p) - g2 ** (0.5 * p)
            return np.where((g2 > 1e-300) & (cross > -g2), small, direct)
        return axisym_quad(f, n, center=s, balls=region, cfg=cfg, breakpoints=bps).value

    B = _solve_monotone(trace_inc, dt, 1e-3, lower=0.0)
    dm_b = mass_inc(B, 0.0)
    A = _solve_monotone(lambda x: mass_inc(B, x) - dm_b, dm - dm_b, 1e-3, lower=-1.0)
    return (
        CorrectionBump("boundary", 0.0, a_b, B, dm_b, trace_inc(B), energy_inc(B, 0.0)),
        CorrectionBump("interior", h, a_i, A, mass_inc(B, A) - dm_b, 0.0,
                       energy_inc(B, A) - energy_inc(B, 0.0)),
    )


def build_split_function(spec: SplitSpec, R: float, sep: float | None, params: Params,
                         cfg: QuadratureConfig | None = None,
                         consts: FundamentalConstants | None = None) -> SplitConstruction:
    """Competitor w in the admissible class whose energy tends to the split right-hand side."""
    cfg = cfg or QuadratureConfig()
    if not R > 0:
        raise ValueError("R must be positive")
    sep = 3.0 * R if sep is None else float(sep)
    if not sep > 2.0 * R:
        raise ValueError("bump supports must be disjoint: sep > 2R")
    work = spec.swapped() if spec.m1 > spec.m2 else spec
    if work.t1 == 0.0 or work.t2 == 0.0:
        raise ValueError("each bump needs a positive trace part")
    consts = consts or fundamental_constants(params, cfg, estimate_t_star=False)
    n, ps, pz, p = params.n, params.p_star, params.p_sharp, params.p
    pts = [_solve_grid([Ti], params, cfg, consts)[0] for Ti in (work.T1, work.T2)]
    exts = tuple(pt.extremal for pt in pts)
    ms = (work.m1, work.m2)
    unit = [_unit_bump_norms(e, R, params, cfg) for e in exts]
    norms = tuple(BumpNorms(m**ps * u.lp_star_mass, m**pz * u.trace_mass, m**p * u.grad_energy)
                  for m, u in zip(ms, unit))
    for k, (nb, m) in enumerate(zip(norms, ms)):
        if nb.lp_star_mass < 0.9 * m**ps:
            raise ValueError(f"R too small: bump {k + 1} keeps under 90% of its mass")
    dm = 1.0 - (norms[0].lp_star_mass + norms[1].lp_star_mass)
    dt = spec.T**pz - (norms[0].trace_mass + norms[1].trace_mass)
    corr = _corrections(exts[1], ms[1], dm, dt, R, params, cfg)
    mass = norms[0].lp_star_mass + norms[1].lp_star_mass + sum(c.mass_increment for c in corr)
    trace = norms[0].trace_mass + norms[1].trace_mass + sum(c.trace_increment for c in corr)
    energy = norms[0].grad_energy + norms[1].grad_energy + sum(c.energy_increment for c in corr)
    residuals = (mass ** (1.0 / ps) - 1.0, trace ** (1.0 / pz) - spec.T)
    phiT = _solve_grid([spec.T], params, cfg, consts)[0].phi
    rhs = ms[0] ** p * pts[0].phi**p + ms[1] ** p * pts[1].phi**p
    lower = norms[1].lp_star_mass + sum(c.mass_increment for c in corr)
    return SplitConstruction(
        spec=spec, R=float(R), sep=sep, cutoff=CUTOFF_NAME, bump_norms=norms,
        correction_budget=(dm, dt), corrections=corr, w_energy=energy, rhs=rhs,
        lhs=phiT**p, constraint_residuals=residuals, lower_mass=lower,
        extremals=exts, masses=ms, params=params,
        bump_energies=(norms[0].grad_energy, norms[1].grad_energy),
    )


def split_energy_convergence(spec: SplitSpec, R_schedule, params: Params,
                             cfg: QuadratureConfig | None = None, sep_factor: float = 3.0) -> list:
    """Rows (R, wEnergy, wEnergy - rhs, wEnergy - Phi(T)^p, residuals) along R_schedule."""
    R_schedule = [float(r) for r in R_schedule]
    if any(b <= a for a, b in zip(R_schedule, R_schedule[1:])):
        raise ValueError("R schedule must be increasing")
    rows = []
    for R in R_schedule:
        sc = build_split_function(spec, R, sep_factor * R, params, cfg)
        rows.append({"R": R, "wEnergy": sc.w_energy, "excess": sc.excess,
                     "aboveInfimum": sc.w_energy - sc.lhs, "rhs": sc.rhs,
                     "residuals": sc.constraint_residuals, "construction": sc})
    return rows
