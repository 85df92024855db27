"""Command-line driver, result envelopes and table/plot-data emission.

Every subcommand builds a :class:`ResultEnvelope` holding flat records plus a
map of named boolean certificates.  The exit status is 0 when every
certificate passes, 2 when any fails, and 1 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .kernel import Params, QuadratureConfig

__all__ = [
    "UsageError",
    "RunConfig",
    "ResultEnvelope",
    "parse_grid",
    "parse_T",
    "dumps_json",
    "emit_table",
    "emit_plot_data",
    "build_envelope",
    "run_command",
    "main",
]

COMMANDS = ("curve", "constants", "identity", "binding", "split", "transport", "stability", "report")
IDENTITY_TOL = 1e-8


class UsageError(ValueError):
    """Bad flags or an invalid configuration; maps to exit status 1."""


# ---------------------------------------------------------------- serialization

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError("non-finite reals must be mapped to null before emission")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj):
    """Convert records to JSON-ready values: numpy scalars unwrapped, non-finite reals to None."""
    if hasattr(obj, "record") and callable(obj.record):
        obj = obj.record()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "value"):
        return _plain(obj.value)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        body = ",\n".join(pad + _encode(v, indent, level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{pad}{json.dumps(k, ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                          for k, v in obj.items())
        return "{\n" + body + "\n" + end + "}"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON text: insertion key order, reals with 17 significant digits."""
    return _encode(_plain(obj), indent, 0) + "\n"


def _csv_cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, (list, dict)):
        return _encode(v, 0, 0).replace("\n", "")
    return str(v)


def _write_text(text: str, out):
    if out is None:
        return text
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        out.write(text)
    return text


def emit_table(records, fmt: str = "csv", out=None, columns=None) -> str:
    """Write homogeneous records as CSV or JSON and return the text.

    Columns follow the key order of the first record (or ``columns`` when
    given, which also yields a header-only CSV for an empty list).  ``out`` is a
    path, a text stream, or None to only return the text.
    """
    rows = [_plain(r) for r in records]
    if rows and not all(isinstance(r, dict) for r in rows):
        raise ValueError("records must be mappings or expose record()")
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    for i, r in enumerate(rows):
        if list(r) != cols:
            raise ValueError(f"record {i} has columns {list(r)}, expected {cols}")
    if fmt == "json":
        text = dumps_json(rows)
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_csv_cell(r[c]) for c in cols])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    return _write_text(text, out)


def emit_plot_data(scan, out=None, params: Params | None = None, consts=None) -> str:
    """Labeled CSV columns for an external plotter.

    A curve scan (or a list of PhiPoint) gives T, phi and the three lower
    overlays (Escobar line E*T, Sobolev floor S/2^{1/n}, asymptote T^{p#}/p#);
    a list of stability rows gives (epsilon, delta, distance, ratio).
    """
    from .curve import PhiPoint
    from .stability import StabilityRow

    items = getattr(scan, "points", scan)
    items = list(items)
    if items and isinstance(items[0], StabilityRow):
        recs = [{"epsilon": r.epsilon, "delta": r.delta, "distance": r.distance, "ratio": r.ratio}
                for r in items]
        return emit_table(recs, "csv", out, columns=("epsilon", "delta", "distance", "ratio"))
    if items and not isinstance(items[0], PhiPoint):
        raise TypeError("plot data needs a curve scan or a stability scan")
    if params is None or consts is None:
        raise ValueError("curve plot data needs params and fundamental constants")
    pz = params.p_sharp
    recs = [{"T": pt.T, "phi": pt.phi, "escobarLine": consts.E * pt.T,
             "sobolevFloor": consts.sobolev_floor, "asymptote": pt.T**pz / pz} for pt in items]
    return emit_table(recs, "csv", out,
                      columns=("T", "phi", "escobarLine", "sobolevFloor", "asymptote"))


@dataclass
class ResultEnvelope:
    toolVersion: str
    configEcho: dict
    timestamp: str
    records: list = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.certificates.values())

    def to_json(self) -> str:
        return dumps_json({
            "toolVersion": self.toolVersion, "configEcho": self.configEcho,
            "timestamp": self.timestamp, "records": self.records,
            "certificates": self.certificates, "warnings": self.warnings,
        })

    @classmethod
    def from_json(cls, text: str) -> "ResultEnvelope":
        d = json.loads(text)
        keys = ("toolVersion", "configEcho", "timestamp", "records", "certificates", "warnings")
        missing = [k for k in keys if k not in d]
        if missing:
            raise ValueError(f"envelope is missing {missing}")
        return cls(**{k: d[k] for k in keys})


# ---------------------------------------------------------------- configuration

def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:count`` -> count evenly spaced values (count >= 1)."""
    m = re.fullmatch(r"\s*([^:]+):([^:]+):(\d+)\s*", text)
    if not m:
        raise UsageError(f"grid {text!r} is not of the form lo:hi:count")
    try:
        lo, hi = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise UsageError(f"grid {text!r} has non-numeric bounds") from None
    count = int(m.group(3))
    if count < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise UsageError(f"grid {text!r} needs finite bounds and count >= 1")
    if count > 1 and not hi > lo:
        raise UsageError(f"grid {text!r} needs hi > lo")
    return np.linspace(lo, hi, count) if count > 1 else np.array([lo])


def parse_T(text: str, consts) -> float:
    """A positive real, or a multiple of a named level: ``T0``, ``TE``, ``3TE``, ``0.5*T0``."""
    m = re.fullmatch(r"\s*([0-9.eE+-]*?)\s*\*?\s*(T0|TE)\s*", text)
    try:
        if m:
            k = float(m.group(1)) if m.group(1) else 1.0
            val = k * (consts.T0 if m.group(2) == "T0" else consts.TE)
        else:
            val = float(text)
    except ValueError:
        raise UsageError(f"cannot read T value {text!r}") from None
    if not (math.isfinite(val) and val > 0):
        raise UsageError(f"T must be a positive real, got {text!r}")
    return val


def _float_list(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot read list {text!r}") from None
    if not vals:
        raise UsageError("empty list")
    return vals


def _default_threads() -> int:
    raw = os.environ.get("TSL_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise UsageError(f"TSL_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise UsageError("TSL_THREADS must be >= 1")
    return k


def _timestamp(explicit: str | None) -> str:
    if explicit is not None:
        return explicit
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        try:
            t = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        except ValueError:
            raise UsageError("SOURCE_DATE_EPOCH must be an integer") from None
    else:
        t = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)
    return t.isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one subcommand.

    Defaults: seed 0, threads from TSL_THREADS (else 1), JSON envelope on
    stdout, quadrature rel_tol 1e-10.  ``options`` holds the command-specific
    flags exactly as parsed (after grid and T expansion they are echoed back).
    """

    command: str
    n: int
    p: float
    options: dict
    rel_tol: float = 1e-10
    output: str | None = None
    fmt: str = "json"
    seed: int = 0
    threads: int = 1
    timestamp: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        try:
            Params(self.n, self.p)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if not 0 < self.rel_tol < 1e-3:
            raise UsageError("--rel-tol must lie in (0, 1e-3)")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        if self.seed < 0:
            raise UsageError("--seed must be nonnegative")
        if self.fmt not in ("json", "csv"):
            raise UsageError("--format must be json or csv")

    @property
    def params(self) -> Params:
        return Params(self.n, self.p)

    @property
    def quad(self) -> QuadratureConfig:
        return QuadratureConfig(rel_tol=self.rel_tol)

    def echo(self) -> dict:
        opts = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in sorted(self.options.items())}
        return {"command": self.command, "n": self.n, "p": self.p, "relTol": self.rel_tol,
                "seed": self.seed, "threads": self.threads, "options": opts}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsl", description="Trace-Sobolev curve laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int, default=3, help="dimension (default 3)")
    common.add_argument("--p", type=float, default=2.0, help="exponent, 1 < p < n (default 2)")
    common.add_argument("--rel-tol", type=float, default=1e-10, help="quadrature relative tolerance")
    common.add_argument("--output", "-o", default=None, help="output path (default stdout)")
    common.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json",
                        help="json envelope (default) or csv of the records")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized fixtures")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default TSL_THREADS or 1)")
    common.add_argument("--timestamp", default=None,
                        help="timestamp to stamp into the envelope (default SOURCE_DATE_EPOCH, else now)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("constants", parents=[common], help="S, E, T_E, T_0 and the floor")

    p = sub.add_parser("curve", parents=[common], help="solve and certify Phi on a T grid")
    p.add_argument("--T-grid", default=None, help="lo:hi:count (default geometric T0/4 .. 10 TE, 40 points)")
    p.add_argument("--plot-data", default=None, help="also write the plot-data CSV here")

    p = sub.add_parser("identity", parents=[common], help="transport identity residuals")
    p.add_argument("--T-grid", default=None, help="lo:hi:count (default geometric T0/4 .. 10 TE, 20 points)")
    p.add_argument("--tol", type=float, default=IDENTITY_TOL, help="residual threshold (default 1e-8)")

    p = sub.add_parser("binding", parents=[common], help="strict binding gap over an (m1, t1) grid")
    p.add_argument("--T", default="T0", help="trace level: number, T0, TE or k*TE (default T0)")
    p.add_argument("--grid", type=int, default=32, help="grid resolution per axis (default 32)")
    p.add_argument("--margin", type=float, default=0.05, help="corner margin for m1 (default 0.05)")
    p.add_argument("--partitions", type=int, default=0, help="random finite partitions to check (default 0)")

    p = sub.add_parser("split", parents=[common], help="split competitor energy along R")
    p.add_argument("--T", default="T0")
    p.add_argument("--m1", type=float, default=None, help="first bulk part (default symmetric split)")
    p.add_argument("--t1", type=float, default=None, help="first trace part (default symmetric split)")
    p.add_argument("--R", default="4,8,16,32,64", help="comma-separated increasing radii")
    p.add_argument("--sep-factor", type=float, default=3.0, help="separation / R (default 3)")
    p.add_argument("--target", type=float, default=0.01, help="relative excess required at the last R")

    p = sub.add_parser("transport", parents=[common], help="discrete OT probe of the split (n = 2)")
    p.add_argument("--T", default="T0")
    p.add_argument("--R", type=float, default=8.0)
    p.add_argument("--sep", default="24,48,96", help="comma-separated separations")
    p.add_argument("--slack", type=float, default=0.02, help="discretization slack on mu(E) (default 0.02)")
    p.add_argument("--cycles", type=int, default=0, help="random longer cycles to test")

    p = sub.add_parser("stability", parents=[common], help="deficit / distance^2 along a perturbation family")
    p.add_argument("--T", default="T0")
    p.add_argument("--mode", choices=("dilationBlend", "profileBlend", "boundaryBump"), default="dilationBlend")
    p.add_argument("--eps-grid", default="0.02:0.2:6", help="lo:hi:count (default 0.02:0.2:6)")
    p.add_argument("--plot-data", default=None, help="also write (epsilon, delta, distance, ratio) CSV here")

    p = sub.add_parser("report", parents=[common], help="constants, special points and identity spot checks")
    p.add_argument("--T-grid", default=None, help="identity grid (default geometric T0/4 .. TE, 5 points)")
    return parser


def _config_from_args(ns: argparse.Namespace) -> RunConfig:
    base = {"command", "n", "p", "rel_tol", "output", "fmt", "seed", "threads", "timestamp"}
    opts = {k.replace("_", "-"): v for k, v in vars(ns).items() if k not in base}
    threads = ns.threads if ns.threads is not None else _default_threads()
    return RunConfig(command=ns.command, n=ns.n, p=ns.p, options=opts, rel_tol=ns.rel_tol,
                     output=ns.output, fmt=ns.fmt, seed=ns.seed, threads=threads,
                     timestamp=ns.timestamp)


# ---------------------------------------------------------------- commands

def _constants(cfg: RunConfig):
    from .curve import fundamental_constants
    return fundamental_constants(cfg.params, cfg.quad, estimate_t_star=False)


def _geom_grid(lo, hi, count):
    return np.geomspace(lo, hi, count)


def _cmd_constants(cfg, env):
    from .curve import fundamental_constants
    consts = fundamental_constants(cfg.params, cfg.quad, estimate_t_star=True)
    env.records.append(consts.record())


def _cmd_curve(cfg, env):
    from .curve import scan_curve
    consts = _constants(cfg)
    g = cfg.options.get("T-grid")
    grid = parse_grid(g) if g else _geom_grid(consts.T0 / 4, 10 * consts.TE, 40)
    scan = scan_curve(grid, cfg.params, cfg.quad, consts)
    env.records.extend(pt.record() for pt in scan.points)
    for name, bad in scan.failures.items():
        env.certificates[name] = not bad
        if bad:
            Tbad = ", ".join(f"{scan.points[i].T:.6g}" for i in bad[:8])
            env.warnings.append(f"{name} fails at T = {Tbad}{' ...' if len(bad) > 8 else ''}")
    unresolved = scan.shape_report.get("above_asymptote_unresolved") or []
    if unresolved:
        env.warnings.append(f"{len(unresolved)} asymptote comparisons are within error bars")
    if cfg.options.get("plot-data"):
        emit_plot_data(scan, cfg.options["plot-data"], cfg.params, consts)


def _cmd_identity(cfg, env, grid=None, tol=None):
    from .curve import identity_check
    consts = _constants(cfg)
    g = cfg.options.get("T-grid")
    if grid is None:
        grid = parse_grid(g) if g else _geom_grid(consts.T0 / 4, 10 * consts.TE, 20)
    tol = cfg.options.get("tol", IDENTITY_TOL) if tol is None else tol
    worst = 0.0
    for T in grid:
        if not T > 0:
            raise UsageError("T grid values must be positive")
        check = identity_check(float(T), cfg.params, cfg.quad, consts)
        # a residual only counts when the evaluation error is resolved below tol too
        res = max(check.residual, check.error)
        worst = max(worst, res)
        env.records.append({**check.record(), "passed": res < tol})
    env.certificates["identityResidual"] = worst < tol
    if worst >= tol:
        bad = [r["T"] for r in env.records if "residual" in r and not r["passed"]]
        env.warnings.append(f"identity residual >= {tol:g} at {len(bad)} points (worst {worst:.3g})")


def _cmd_binding(cfg, env):
    from .binding import PhiTable, corner_path, finite_partition_check, scan_binding_grid
    consts = _constants(cfg)
    T = parse_T(cfg.options["T"], consts)
    grid, margin = cfg.options["grid"], cfg.options["margin"]
    if grid < 4 or not 0 < margin < 0.5:
        raise UsageError("--grid must be >= 4 and --margin in (0, 0.5)")
    table = PhiTable(cfg.params, cfg.quad, consts)
    scan = scan_binding_grid(T, grid, cfg.params, cfg.quad, margin, cfg.threads, table)
    env.records.extend(g.record() for g in scan.table)
    # certified per cell: the smallest gap clears its own bound and no cell is uncertified
    at_min = min(scan.table, key=lambda g: (g.gap, g.spec.key()))
    env.certificates["minGapAboveErrBound"] = scan.min_gap > at_min.err_bound and not scan.uncertified
    if not env.certificates["minGapAboveErrBound"]:
        env.warnings.append(f"minGap {scan.min_gap:.3g} not above error bound ({len(scan.uncertified)} cells)")
    corner = corner_path(T, [0.2, 0.1, 0.05, 0.02, 0.01], cfg.params, cfg.quad, table)
    gaps = [c.gap for c in corner]
    env.certificates["cornerGapDecreasing"] = all(b < a for a, b in zip(gaps, gaps[1:]))
    if not env.certificates["cornerGapDecreasing"]:
        env.warnings.append("gap does not decrease along the corner path")
    parts = cfg.options.get("partitions", 0)
    if parts:
        rng = np.random.default_rng(cfg.seed)
        checks = [finite_partition_check(T, 3, cfg.params, rng, cfg.quad, table) for _ in range(parts)]
        env.certificates["finitePartitions"] = all(c.holds for c in checks)
        if not env.certificates["finitePartitions"]:
            env.warnings.append("a random finite partition violates the binding inequality")


def _symmetric_split(T, cfg, m1=None, t1=None):
    from .binding import split_complement
    P = cfg.params
    m1 = 2.0 ** (-1.0 / P.p_star) if m1 is None else m1
    t1 = T * 2.0 ** (-1.0 / P.p_sharp) if t1 is None else t1
    try:
        return split_complement(T, m1, t1, P)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_split(cfg, env):
    from .binding import split_energy_convergence
    consts = _constants(cfg)
    T = parse_T(cfg.options["T"], consts)
    spec = _symmetric_split(T, cfg, cfg.options.get("m1"), cfg.options.get("t1"))
    radii = _float_list(cfg.options["R"])
    try:
        rows = split_energy_convergence(spec, radii, cfg.params, cfg.quad, cfg.options["sep-factor"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for r in rows:
        rec = r["construction"].record()
        rec["excess"] = r["excess"]
        rec["relativeExcess"] = r["excess"] / r["rhs"]
        env.records.append(rec)
    ex = [r["excess"] for r in rows]
    env.certificates["excessDecreasing"] = all(b < a for a, b in zip(ex, ex[1:]))
    env.certificates["excessBelowTarget"] = rows[-1]["excess"] < cfg.options["target"] * rows[-1]["rhs"]
    env.certificates["aboveInfimum"] = all(r["aboveInfimum"] >= -1e-6 for r in rows)
    env.certificates["constraintResiduals"] = all(max(map(abs, r["residuals"])) <= 1e-10 for r in rows)
    for k, v in env.certificates.items():
        if not v:
            env.warnings.append(f"split certificate {k} fails "
                                f"(relative excess at R={rows[-1]['R']:g}: {rows[-1]['excess'] / rows[-1]['rhs']:.3g})")


def _cmd_transport(cfg, env):
    from .transport import (check_cyclical_monotonicity, cone_exclusion_stats,
                            solve_exact_plan, split_transport_instance)
    if cfg.n != 2:
        raise UsageError("transport probe needs --n 2")
    consts = _constants(cfg)
    T = parse_T(cfg.options["T"], consts)
    spec = _symmetric_split(T, cfg)
    R = cfg.options["R"]
    seps = _float_list(cfg.options["sep"])
    slack = cfg.options["slack"]
    muE = []
    for sep in seps:
        try:
            inst = split_transport_instance(spec, R, sep, cfg.params, cfg.quad)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        plan = solve_exact_plan(inst.mu, inst.nu)
        cert = check_cyclical_monotonicity(plan, inst.mu, inst.nu, cycles=cfg.options["cycles"], seed=cfg.seed)
        sc = inst.construction
        st = cone_exclusion_stats(plan, inst.mu, inst.nu, sc.centers(), R, sc.cone(), inst.s)
        rec = {"sep": sep, "R": R, "atomsSource": inst.mu.size, "atomsTarget": inst.nu.size,
               "cost": plan.cost, "minTwoCycle": cert.min_two_cycle_value, "monotone": cert.passes}
        rec.update(st.record())
        env.records.append(rec)
        muE.append(st.muE)
    env.certificates["cyclicalMonotonicity"] = all(r["monotone"] for r in env.records)
    env.certificates["muEBelowBound"] = all(r["muE"] <= r["bBar"] + slack for r in env.records)
    env.certificates["muENonIncreasing"] = all(b <= a + 1e-12 for a, b in zip(muE, muE[1:]))
    for k, v in env.certificates.items():
        if not v:
            env.warnings.append(f"transport certificate {k} fails")


def _cmd_stability(cfg, env):
    from .stability import PerturbationMode, slope_fit, stability_ratio_scan
    consts = _constants(cfg)
    T = parse_T(cfg.options["T"], consts)
    eps = parse_grid(cfg.options["eps-grid"])
    if np.any(eps < 0) or np.any(eps > 0.5):
        raise UsageError("epsilon values must lie in [0, 0.5]")
    rows = stability_ratio_scan(T, eps, PerturbationMode(cfg.options["mode"]), cfg.params, cfg.quad)
    env.records.extend(r.record() for r in rows)
    env.certificates["deficitNonnegative"] = not any("negative-deficit" in r.flags for r in rows)
    env.certificates["distanceSearchConverged"] = not any("search-at-bound" in r.flags for r in rows)
    good = [r for r in rows if r.epsilon > 0 and r.delta > 0 and r.distance > 0]
    if cfg.p == 2.0 and len(good) >= 2:
        slope = slope_fit([r.epsilon for r in good], [r.delta for r in good])
        env.certificates["quadraticSlope"] = abs(slope - 2.0) <= 0.2
        ratios = [r.ratio for r in good]
        env.certificates["ratioBounded"] = min(ratios) > 0 and max(ratios) / min(ratios) < 3.0
        env.records.append({"epsilon": None, "T": T, "delta": None, "distance": None,
                            "ratio": None, "flags": f"slope={slope:.6f}"})
    for k, v in env.certificates.items():
        if not v:
            env.warnings.append(f"stability certificate {k} fails")
    if cfg.options.get("plot-data"):
        emit_plot_data(rows, cfg.options["plot-data"])


def _cmd_report(cfg, env):
    from .curve import phi_of_T
    consts = _constants(cfg)
    rec = consts.record()
    rec["kind"] = "constants"
    env.records.append(rec)
    p0 = phi_of_T(consts.T0, cfg.params, cfg.quad, consts)
    pE = phi_of_T(consts.TE, cfg.params, cfg.quad, consts)
    r0 = abs(p0.phi - consts.sobolev_floor) / consts.sobolev_floor
    rE = abs(pE.phi - consts.E * consts.TE) / (consts.E * consts.TE)
    env.records.append({"kind": "specialPoints", "phiT0RelErr": r0, "phiTERelErr": rE})
    env.certificates["phiT0IsFloor"] = r0 < 1e-6
    env.certificates["phiTEOnEscobarLine"] = rE < 1e-6
    g = cfg.options.get("T-grid")
    grid = parse_grid(g) if g else _geom_grid(consts.T0 / 4, consts.TE, 5)
    sub = ResultEnvelope(env.toolVersion, {}, env.timestamp)
    _cmd_identity(cfg, sub, grid=grid, tol=IDENTITY_TOL)
    for r in sub.records:
        env.records.append({"kind": "identity", **r})
    env.certificates.update(sub.certificates)
    env.warnings.extend(sub.warnings)
    for k in ("phiT0IsFloor", "phiTEOnEscobarLine"):
        if not env.certificates[k]:
            env.warnings.append(f"special point certificate {k} fails")


_DISPATCH = {
    "constants": _cmd_constants, "curve": _cmd_curve, "identity": _cmd_identity,
    "binding": _cmd_binding, "split": _cmd_split, "transport": _cmd_transport,
    "stability": _cmd_stability, "report": _cmd_report,
}


def build_envelope(cfg: RunConfig) -> ResultEnvelope:
    """Run one validated configuration and collect its records and certificates."""
    env = ResultEnvelope(__version__, cfg.echo(), _timestamp(cfg.timestamp))
    _DISPATCH[cfg.command](cfg, env)
    if not env.passed and not env.warnings:
        env.warnings.append("a certificate failed")
    return env


def _render(env: ResultEnvelope, fmt: str) -> str:
    if fmt == "json":
        return env.to_json()
    if not env.records:
        return emit_table([], "csv")
    keys = list(_plain(env.records[0]))
    if all(list(_plain(r)) == keys for r in env.records):
        return emit_table(env.records, "csv")
    # mixed record shapes (report): union of keys in first-seen order
    cols = []
    for r in env.records:
        cols.extend(k for k in _plain(r) if k not in cols)
    rows = [{c: _plain(r).get(c) for c in cols} for r in env.records]
    return emit_table(rows, "csv", columns=cols)


def run_command(argv=None, stdout=None, stderr=None) -> int:
    """Parse argv, run the command and write its output; returns the exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _build_parser()
    try:
        try:
            ns = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        cfg = _config_from_args(ns)
        env = build_envelope(cfg)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return 1
    except OSError as exc:
        stderr.write(f"cannot write output: {exc}\n")
        return 1
    text = _render(env, cfg.fmt)
    try:
        if cfg.output:
            _write_text(text, cfg.output)
        else:
            stdout.write(text)
    except OSError as exc:
        stderr.write(f"cannot write output: {exc}\n")
        return 1
    for w in env.warnings:
        stderr.write(f"warning: {w}\n")
    return 0 if env.passed else 2


def main() -> None:
    sys.exit(run_command())
