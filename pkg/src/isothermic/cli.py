"""Config-driven experiment runner.

Usage::

    isothermic <command> --config <path.yaml> [--out <dir>]

Exit status: 0 success, 2 invalid configuration, 3 solver failure,
64 usage error (unknown command, bad arguments).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .asympt import geometric_s, grid_ladder, oracle_ladder, thm42_lhs, thm42_rhs, varadhan_extract
from .balance import IsometryDifference, balance_law_check, isometry_pair, mean_series
from .domain import dist_to_boundary, inradius, sample_boundary, standard_shapes
from .errors import (
    FitDiagnosticError,
    IsothermicError,
    OracleError,
    SolverError,
    StabilityError,
)
from .modelspace import ModelSpace, principal_curvatures
from .pde import assemble_L, build_grid, elliptic_residual, elliptic_solve, heat_solve, stable_wave_step, wave_solve
from .rigidity import Thresholds, run_rigidity

log = logging.getLogger("isothermic")

COMMANDS = (
    "solve-heat",
    "solve-elliptic",
    "varadhan",
    "balance-check",
    "curvature",
    "thm42",
    "rigidity",
    "wave-check",
)
EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_USAGE = 0, 2, 3, 64
# W(s, x) >= exp(-sqrt(s) d) must stay above the 1e-300 clamp floor.
CLAMP_LOG = -math.log(1e-300)
_SOLVER_ERRORS = (SolverError, OracleError, StabilityError, FitDiagnosticError)


@dataclass
class ExperimentConfig:
    """One experiment.  YAML layout::

        space: {k: 0, n: 2}
        domain: {name: geodesic-ball, params: {radius: 1.0}}
        surface: {fraction: 0.3}        # or {R: 0.3}; inner surface for rigidity
        grid: {h: 0.0078125}
        heat: {dt: 0.001, t_end: 1.0}
        ladder: {s0: 16, factor: 2, count: 4}
        probes: [[0.0, 0.0]]
        output: out
        options: {}                     # command-specific
    """

    k: float = 0.0
    n: int = 2
    domain: dict = field(default_factory=lambda: {"name": "geodesic-ball", "params": {"radius": 1.0}})
    surface: dict = field(default_factory=lambda: {"fraction": 0.3})
    h: float = 1 / 128
    dt: float = 1e-3
    t_end: float = 1.0
    ladder: dict = field(default_factory=lambda: {"s0": 16.0, "factor": 2.0, "count": 4})
    probes: list = field(default_factory=list)
    output: str = "out"
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> tuple["ExperimentConfig", list[str]]:
        """Build a config; unknown or malformed entries become findings."""
        findings = []
        cfg = cls()
        if not isinstance(d, dict):
            return cfg, ["config: top level must be a mapping"]
        known = {"space", "domain", "surface", "grid", "heat", "ladder", "probes", "output", "options"}
        for key in sorted(set(d) - known):
            findings.append(f"{key}: unknown top-level key")
        space = d.get("space", {}) or {}
        grid = d.get("grid", {}) or {}
        heat = d.get("heat", {}) or {}
        try:
            cfg.k = float(space.get("k", cfg.k))
            cfg.n = int(space.get("n", cfg.n))
            cfg.h = float(grid.get("h", cfg.h))
            cfg.dt = float(heat.get("dt", cfg.dt))
            cfg.t_end = float(heat.get("t_end", cfg.t_end))
        except (TypeError, ValueError, AttributeError) as exc:
            findings.append(f"config: non-numeric value ({exc})")
        for key in ("domain", "surface", "ladder", "options"):
            if key in d:
                if not isinstance(d[key], dict):
                    findings.append(f"{key}: must be a mapping")
                else:
                    setattr(cfg, key, dict(d[key]))
        if "probes" in d:
            cfg.probes = list(d["probes"] or [])
        if "output" in d:
            cfg.output = str(d["output"])
        return cfg, findings

    def to_dict(self) -> dict:
        return {
            "space": {"k": self.k, "n": self.n},
            "domain": self.domain,
            "surface": self.surface,
            "grid": {"h": self.h},
            "heat": {"dt": self.dt, "t_end": self.t_end},
            "ladder": self.ladder,
            "probes": self.probes,
            "output": self.output,
            "options": self.options,
        }

    def digest(self) -> str:
        """SHA-256 of the canonical config without the output directory."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def s_values(self) -> np.ndarray:
        lad = self.ladder
        if "s" in lad:
            return np.asarray(lad["s"], dtype=float)
        return geometric_s(float(lad.get("s0", 16.0)), int(lad.get("count", 4)), float(lad.get("factor", 2.0)))


def load_config(path) -> tuple[ExperimentConfig, list[str]]:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        return ExperimentConfig(), [f"config: cannot read {path} ({exc.strerror})"]
    except yaml.YAMLError as exc:
        return ExperimentConfig(), [f"config: YAML parse error ({exc})"]
    return ExperimentConfig.from_dict(raw or {})


# ------------------------------------------------------------- validation --


def _space_domain(cfg: ExperimentConfig):
    space = ModelSpace(cfg.k, cfg.n)
    dom = standard_shapes(space, cfg.domain.get("name", ""), cfg.domain.get("params", {}))
    return space, dom


def validate(cfg: ExperimentConfig, command: str | None = None) -> list[str]:
    """Findings that would stop ``run``; each names a field and a constraint."""
    findings = []
    if cfg.n not in (2, 3):
        findings.append(f"space.n: must be 2 or 3 (got {cfg.n})")
    if not math.isfinite(cfg.k):
        findings.append("space.k: must be finite")
    if not cfg.h > 0:
        findings.append(f"grid.h: must be > 0 (got {cfg.h})")
    if not cfg.dt > 0:
        findings.append(f"heat.dt: must be > 0 (got {cfg.dt})")
    if not cfg.t_end > 0:
        findings.append(f"heat.t_end: must be > 0 (got {cfg.t_end})")
    try:
        s = cfg.s_values()
        if np.any(s <= 0) or np.any(np.diff(s) <= 0):
            findings.append("ladder: s values must be positive and strictly increasing")
    except (TypeError, ValueError) as exc:
        s = None
        findings.append(f"ladder: malformed ({exc})")
    if command == "varadhan" and s is not None and len(s) < 3:
        findings.append(f"ladder.count: >= 3 ladder points required (got {len(s)})")
    for i, p in enumerate(cfg.probes):
        if np.asarray(p).shape != (cfg.n,):
            findings.append(f"probes[{i}]: must have {cfg.n} coordinates")
    if findings:
        return findings
    try:
        space, dom = _space_domain(cfg)
    except (IsothermicError, KeyError, TypeError) as exc:
        name = exc.args[0] if isinstance(exc, KeyError) else str(exc)
        return [f"domain: {name}"]
    rin = inradius(dom)
    if s is not None and math.sqrt(s.max()) * rin > CLAMP_LOG:
        findings.append(
            f"ladder: sqrt(s_max) * inradius = {math.sqrt(s.max()) * rin:.4g} exceeds {CLAMP_LOG:.4g}; "
            "W would fall below the 1e-300 clamp everywhere inside"
        )
    for i, p in enumerate(cfg.probes):
        if not float(dom(np.asarray(p, float))) < 0:
            findings.append(f"probes[{i}]: {list(p)} is not inside the domain")
    if cfg.h > 0.25 * float(np.min(dom.bbox[:, 1] - dom.bbox[:, 0])):
        findings.append(f"grid.h: {cfg.h} is too coarse for the domain (needs several nodes across it)")
    surf = cfg.surface
    if command == "rigidity":
        R = surf.get("R")
        frac = surf.get("fraction")
        if R is not None and not 0 < float(R) < rin:
            findings.append(f"surface.R: must lie in (0, inradius={rin:.6g})")
        if R is None and frac is not None and not 0 < float(frac) < 1:
            findings.append("surface.fraction: must lie in (0, 1)")
    if command == "wave-check":
        wdt = cfg.options.get("wave_dt")
        if wdt is not None:
            grid = build_grid(dom, cfg.h)
            bound = stable_wave_step(grid)
            if not float(wdt) > 0:
                findings.append("options.wave_dt: must be > 0")
            elif float(wdt) > bound:
                findings.append(
                    f"options.wave_dt: {wdt} violates the leapfrog stability bound dt <= {bound:.6g} "
                    "(0.9 * 2 / sqrt(max row sum of the discrete operator))"
                )
    return findings


# ----------------------------------------------------------------- output --


def _meta(cfg: ExperimentConfig, command: str, **extra) -> dict:
    m = {
        "command": command,
        "config_digest": cfg.digest(),
        "h": cfg.h,
        "ladder": [float(v) for v in cfg.s_values()],
        "version": __version__,
    }
    m.update(extra)
    return m


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path: Path, meta: dict, payload: dict) -> None:
    text = json.dumps(_jsonable({"metadata": meta, **payload}), indent=2, sort_keys=True)
    path.write_text(text + "\n")


def write_csv(path: Path, meta: dict, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(_jsonable(meta), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def _field_rows(field_):
    return (list(p) + [v] for p, v in zip(field_.grid.points, field_.values))


def _coord_header(n):
    return [f"x{i + 1}" for i in range(n)]


# --------------------------------------------------------------- commands --


def cmd_solve_heat(cfg, out):
    space, dom = _space_domain(cfg)
    grid = build_grid(dom, cfg.h)
    laplace_s = [float(s) for s in cfg.options.get("laplace_s", [])]
    probes = np.asarray(cfg.probes, float) if cfg.probes else None
    tr = heat_solve(grid, cfg.t_end, cfg.dt, save_every=None, probes=probes, laplace_s=laplace_s)
    meta = _meta(cfg, "solve-heat", dt=cfg.dt, t_end=float(tr.meta["t_end"]))
    final = tr.fields[-1]
    write_csv(out / "heat_final.csv", meta, _coord_header(cfg.n) + ["value"], _field_rows(final))
    if probes is not None:
        write_csv(out / "heat_probes.csv", meta, ["t"] + [f"p{i}" for i in range(len(probes))],
                  (np.concatenate([[t], v]) for t, v in zip(tr.probe_times, tr.probe_values)))
    for j, s in enumerate(laplace_s):
        write_csv(out / f"heat_transform_{j}.csv", {**meta, **tr.transforms[s].meta},
                  _coord_header(cfg.n) + ["value"], _field_rows(tr.transforms[s]))
    summary = {"min": float(final.values.min()), "max": float(final.values.max()), "nodes": grid.size}
    write_json(out / "heat.json", meta, summary)
    return summary


def cmd_solve_elliptic(cfg, out):
    space, dom = _space_domain(cfg)
    grid = build_grid(dom, cfg.h)
    op = assemble_L(grid)
    meta = _meta(cfg, "solve-elliptic")
    rows = []
    for j, s in enumerate(cfg.s_values()):
        f = elliptic_solve(grid, s, operator=op)
        write_csv(out / f"elliptic_{j}.csv", {**meta, "s": float(s)}, _coord_header(cfg.n) + ["value"], _field_rows(f))
        entry = {"s": float(s), "residual": elliptic_residual(f, s, op), "clamped": int(np.sum(f.meta["clamped"]))}
        if cfg.probes:
            entry["probe_values"] = f.interpolate(np.asarray(cfg.probes, float), log=False).tolist()
        rows.append(entry)
    write_json(out / "elliptic.json", meta, {"solves": rows})
    return {"solves": len(rows)}


def _ladder(cfg, space, dom, path):
    s = cfg.s_values()
    if path == "oracle":
        name, params = cfg.domain.get("name"), cfg.domain.get("params", {})
        if name != "geodesic-ball" or np.linalg.norm(params.get("center", [0.0] * cfg.n)) != 0:
            raise IsothermicError("oracle ladder requires a geodesic ball centred at the origin")
        return oracle_ladder(space, float(params["radius"]), s, dom)
    return grid_ladder(build_grid(dom, cfg.h), s)


def cmd_varadhan(cfg, out):
    space, dom = _space_domain(cfg)
    path = cfg.options.get("path", "grid")
    ladder = _ladder(cfg, space, dom, path)
    probes = cfg.probes or [dom.center.tolist()]
    fits = []
    for p in probes:
        fit = varadhan_extract(ladder, p, model=cfg.options.get("model", "richardson"),
                               n_fit=int(cfg.options.get("n_fit", 3)))
        d = json.loads(fit.to_json())
        d["distance"] = float(dist_to_boundary(dom, np.asarray(p, float)))
        fits.append(d)
    meta = _meta(cfg, "varadhan", path=path)
    write_json(out / "varadhan.json", meta, {"fits": fits})
    return {"extrapolated": [f["extrapolated"] for f in fits]}


def cmd_balance_check(cfg, out):
    space, dom = _space_domain(cfg)
    opt = cfg.options
    grid = build_grid(dom, cfg.h)
    save_every = int(opt.get("save_every", max(1, round(0.01 / cfg.dt))))
    tr = heat_solve(grid, cfg.t_end, cfg.dt, save_every=save_every)
    center = np.asarray(opt.get("center", dom.center), float)
    radius = float(opt.get("radius", 0.4 * inradius(dom)))
    phi1, phi2 = isometry_pair(space, center, radius, opt.get("direction"), opt.get("mode", "antipodal"))
    v = IsometryDifference(tr, phi1, phi2)
    origin = np.zeros(cfg.n)
    reach = v.reach(origin)
    radii = np.asarray(opt.get("radii", np.linspace(0.1, 0.8, 8) * reach), float)
    t_min = float(opt.get("t_min", 0.0))
    times = tr.times[tr.times >= t_min]
    series = mean_series(v, origin, radii, times)
    meta = _meta(cfg, "balance-check", dt=cfg.dt, t_end=cfg.t_end, mode=opt.get("mode", "antipodal"))
    series.meta.update(meta)
    series.to_csv(out / "means.csv")
    reports = {}
    for direction in ("center->means", "means->center"):
        for moment in (False, True):
            r = balance_law_check(v, origin, radii, times, direction=direction, moment=moment,
                                  tol_c=float(opt.get("tol_c", 5e-3)), tol_m=float(opt.get("tol_m", 5e-3)))
            reports[f"{direction}{' (moment)' if moment else ''}"] = asdict(r)
    write_json(out / "balance.json", meta, {"reports": reports})
    return {key: r["status"] for key, r in reports.items()}


def cmd_curvature(cfg, out):
    space, dom = _space_domain(cfg)
    m = int(cfg.options.get("m", 64))
    method = cfg.options.get("method", "auto")
    sample = sample_boundary(dom, m)
    rows = []
    for p in sample.points:
        lam = principal_curvatures(space, dom, p, method=method).values
        rows.append(list(p) + list(lam))
    meta = _meta(cfg, "curvature", method=method, m=m)
    write_csv(out / "curvature.csv", meta, _coord_header(cfg.n) + [f"lambda_{j + 1}" for j in range(cfg.n - 1)], rows)
    lam = np.array([r[cfg.n:] for r in rows])
    return {"min": float(lam.min()), "max": float(lam.max())}


def cmd_thm42(cfg, out):
    space, dom = _space_domain(cfg)
    opt = cfg.options
    center = np.asarray(opt["center"], float)
    R = float(opt["R"])
    phi = float(opt.get("phi", 1.0))
    contacts = []
    for p in opt["contacts"]:
        p = np.asarray(p, float)
        contacts.append((p, principal_curvatures(space, dom, p).values))
    rhs = thm42_rhs(space, R, contacts, phi)
    ladder = grid_ladder(build_grid(dom, cfg.h), cfg.s_values())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        series = thm42_lhs(ladder, phi, center, R, m=int(opt.get("m", 4096)),
                           resolution=float(opt.get("resolution", 0.5)))
    ratio = series.ratio(rhs)
    meta = _meta(cfg, "thm42", R=R, center=center.tolist())
    payload = {"s": series.s, "lhs": series.values, "rhs": rhs, "ratio": ratio.tolist(),
               "excluded": series.excluded,
               "contacts": [{"point": p.tolist(), "curvatures": np.asarray(c).tolist()} for p, c in contacts]}
    write_json(out / "thm42.json", meta, payload)
    return {"rhs": rhs, "last_ratio": float(ratio[-1]) if len(ratio) else None}


def cmd_rigidity(cfg, out):
    space, dom = _space_domain(cfg)
    surf = cfg.surface
    R = surf.get("R")
    if R is None:
        R = float(surf.get("fraction", 0.3)) * inradius(dom)
    th = Thresholds(**cfg.options.get("thresholds", {}))
    s_values = cfg.s_values() if cfg.options.get("use_config_ladder", False) else None
    report = run_rigidity(space, dom, h=cfg.h, R=float(R), dt=cfg.dt, t_end=cfg.t_end, s_values=s_values,
                          m_surface=int(cfg.options.get("m_surface", 64)),
                          m_boundary=int(cfg.options.get("m_boundary", 128)), thresholds=th)
    meta = _meta(cfg, "rigidity", dt=cfg.dt, t_end=cfg.t_end, R=float(R))
    write_json(out / "rigidity.json", meta, {"report": json.loads(report.to_json())})
    return {"verdict": report.verdict, **report.checks}


def cmd_wave_check(cfg, out):
    space, dom = _space_domain(cfg)
    opt = cfg.options
    grid = build_grid(dom, cfg.h)
    op = assemble_L(grid)
    s = float(opt.get("s", 4.0))
    t_end = float(opt.get("wave_t_end", 12.0))
    wdt = opt.get("wave_dt")
    tr = wave_solve(grid, t_end, None if wdt is None else float(wdt), laplace_s=[s], operator=op)
    V = tr.transforms[s]
    residual = elliptic_residual(V, s, op)
    meta = _meta(cfg, "wave-check", dt=float(tr.meta["dt"]), t_end=float(tr.meta["t_end"]), s=s)
    payload = {"residual": residual, "dt_max": tr.meta["dt_max"], "peak": tr.meta["peak"],
               "warning": V.meta.get("warning")}
    write_json(out / "wave.json", meta, payload)
    return {"residual": residual}


_HANDLERS = {
    "solve-heat": cmd_solve_heat,
    "solve-elliptic": cmd_solve_elliptic,
    "varadhan": cmd_varadhan,
    "balance-check": cmd_balance_check,
    "curvature": cmd_curvature,
    "thm42": cmd_thm42,
    "rigidity": cmd_rigidity,
    "wave-check": cmd_wave_check,
}


def run(command: str, cfg: ExperimentConfig, out: str | Path | None = None) -> int:
    """Validate and execute one command; returns the exit status."""
    if command not in _HANDLERS:
        log.error("unknown command %r; expected one of %s", command, ", ".join(COMMANDS))
        return EXIT_USAGE
    findings = validate(cfg, command)
    if findings:
        for f in findings:
            print(f"invalid config: {f}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(cfg.output if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary = _HANDLERS[command](cfg, out)
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (IsothermicError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def main(argv=None) -> int:
    parser = _Parser(prog="isothermic", description="Run an experiment from a YAML config.")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--config", required=True, help="path to the YAML config")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command not in COMMANDS:
        parser.print_usage(sys.stderr)
        print(f"unknown command {args.command!r}; expected one of: {', '.join(COMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    cfg, findings = load_config(args.config)
    if findings:
        for f in findings:
            print(f"invalid config: {f}", file=sys.stderr)
        return EXIT_INVALID
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
