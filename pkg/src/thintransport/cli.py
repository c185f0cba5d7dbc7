"""Command-line entry point.

Every subcommand reads a run config (``--config``)::

    schema_version = 1
    [run]
    command = "holonomy"                 # optional; must match the subcommand
    connection = "../sphere.toml"
    path = "../paths/sphere_lat_pi3.toml"
    steps = 4096

Flags override entries of ``[run]``, which override the defaults table
(:mod:`thintransport.defaults`).  Reports are JSON (CSV for ``sweep``) and end
with a reproducibility block; the only run-dependent content is the
timestamp, which sits on a line of its own.

Exit codes: 0 ok, 1 error, 2 ok with a warning (accuracy warnings, failed
checks, refused certificates).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path as FsPath
from typing import Optional

import numpy as np
import scipy

from . import defaults, liegroup
from .cocycle import HOMOMORPHISMS, check_cocycle, hol_gamma, induced_functor
from .config import (SCHEMA_VERSION, ConfigError, Section, load_connection, load_family,
                     load_homotopy, load_morphism, load_path, open_section)
from .geometry import is_flat, validate_descent
from .pathalg import certify_thin, random_straight_paths
from .reconstruct import audit_extraction, extract_cocycle, roundtrip_check, tp
from .transport import check_naturality, family_transport, holonomy, transport

OK, ERROR, WARNING = 0, 1, 2

COMMANDS = ("transport", "holonomy", "sweep", "reconstruct", "extract-cocycle",
            "cocycle-check", "thin-check", "validate")


@dataclass
class RunConfig:
    command: str
    config: FsPath
    run: Section
    steps: int
    h: float
    samples: int
    seed: int
    tol: Optional[float]
    out: Optional[FsPath]
    parameters: dict = field(default_factory=dict)

    def connection(self, key="connection"):
        return load_connection(self.run.file(key))

    def note(self, **kw):
        self.parameters.update(kw)


def _pick(flag, run: Section, key, kind, default):
    if flag is not None:
        return flag
    if run.has(key):
        return kind(run.number(key)) if kind in (int, float) else run.get(key)
    return default


def build_run(args) -> RunConfig:
    path = FsPath(args.config)
    root = open_section(path)
    run = root.section("run")
    declared = run.get("command", str, args.command)
    if declared != args.command:
        run.fail("command", f"config is for {declared!r}, not {args.command!r}")
    step_default = defaults.get("holonomy_steps" if args.command == "holonomy" else "steps")
    if args.command == "reconstruct":
        step_default = defaults.get("oracle_steps")
        sample_default = defaults.get("reconstruct_samples")
    else:
        sample_default = defaults.get("samples")
    cfg = RunConfig(
        command=args.command,
        config=path,
        run=run,
        steps=int(_pick(args.steps, run, "steps", int, step_default)),
        h=float(_pick(args.h, run, "h", float, defaults.get("h"))),
        samples=int(_pick(args.samples, run, "samples", int, sample_default)),
        seed=int(_pick(args.seed, run, "seed", int, defaults.get("seed"))),
        tol=_pick(args.tol, run, "tol", float, None),
        out=FsPath(args.out) if args.out else None,
    )
    if cfg.steps < defaults.get("min_steps"):
        raise ConfigError(f"steps must be >= {defaults.get('min_steps')}, got {cfg.steps}")
    if cfg.h <= 0 or (cfg.tol is not None and cfg.tol <= 0):
        raise ConfigError("tolerances and difference scales must be positive")
    if cfg.samples < 1:
        raise ConfigError("samples must be >= 1")
    return cfg


# ---- output -----------------------------------------------------------------------

def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, FsPath):
        return x.as_posix()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def reproducibility(cfg: RunConfig) -> dict:
    digest = hashlib.sha256(cfg.config.read_bytes()).hexdigest()
    params = {"steps": cfg.steps, "h": cfg.h, "samples": cfg.samples, "tol": cfg.tol}
    params.update(cfg.parameters)
    return {
        "versions": {"thintransport": _version(), "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "seed": cfg.seed,
        "config": cfg.config.name,
        "config_sha256": digest,
        "parameters": params,
    }


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def render_json(cfg: RunConfig, result: dict, warnings: list) -> str:
    payload = {"schema_version": SCHEMA_VERSION, "command": cfg.command, "result": result,
               "warnings": warnings, "reproducibility": reproducibility(cfg),
               "timestamp": _timestamp()}
    return json.dumps(payload, sort_keys=True, indent=2, default=_plain) + "\n"


def render_csv(cfg: RunConfig, header: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# timestamp: {_timestamp()}\n")
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write("# reproducibility: " + json.dumps(reproducibility(cfg), sort_keys=True, default=_plain) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


# ---- subcommands ------------------------------------------------------------------

def cmd_transport(cfg: RunConfig):
    conn = cfg.connection()
    gamma = load_path(cfg.run.file("path"), conn.atlas)
    t = transport(conn, gamma, cfg.steps)
    return t.as_record(), [t.warning] if t.warning else []


def cmd_holonomy(cfg: RunConfig):
    conn = cfg.connection()
    loop = load_path(cfg.run.file("path"), conn.atlas)
    t = holonomy(conn, loop, cfg.steps)
    return t.as_record(), [t.warning] if t.warning else []


def cmd_sweep(cfg: RunConfig):
    conn = cfg.connection()
    fam = load_family(cfg.run.file("family"), conn.atlas)
    grid = int(_pick(None, cfg.run, "grid", int, defaults.get("grid")))
    cfg.note(grid=grid)
    table = family_transport(conn, fam, grid, cfg.steps)
    header = [f"u{i}" for i in range(fam.k)] + [f"log{i}" for i in range(table.coordinates.shape[1])]
    if table.angles is not None:
        header.append("angle")
    header.append("error_estimate")
    rows = []
    for i, u in enumerate(table.params):
        row = list(u) + list(table.coordinates[i])
        if table.angles is not None:
            row.append(table.angles[i])
        rows.append(row + [table.estimates[i]])
    warnings = []
    if np.max(table.estimates, initial=0.0) > defaults.get("warn_estimate"):
        warnings.append("accuracy warning: some slices exceed the step-halving threshold")
    return (header, rows), warnings


def cmd_reconstruct(cfg: RunConfig):
    conn = cfg.connection()
    hs = tuple(_pick(None, cfg.run, "hs", list, list(defaults.get("hs"))))
    cfg.note(hs=list(hs))
    rep = roundtrip_check(conn, h=cfg.h, samples=cfg.samples, hs=hs, seed=cfg.seed, steps=cfg.steps)
    lo, hi = defaults.get("ratio_band")
    warnings = []
    for chart, data in rep.charts.items():
        bad = [r for r in data["richardson_ratios"] if r is not None and not lo <= r <= hi]
        if bad:
            warnings.append(f"chart {chart}: Richardson ratios {bad} outside [{lo}, {hi}]")
    return rep.as_dict(), warnings


def cmd_extract(cfg: RunConfig):
    conn = cfg.connection()
    base = cfg.run.section("basepoint")
    chart = base.get("chart", str)
    point = base.vector("point", conn.atlas.dim)
    access_sec = cfg.run.section("access")
    access = {c: load_path(access_sec.file(c), conn.atlas) for c in access_sec.data}
    spot = int(_pick(None, cfg.run, "spot_checks", int, defaults.get("spot_checks")))
    table_n = int(_pick(None, cfg.run, "table_samples", int, defaults.get("table_samples")))
    cfg.note(spot_checks=spot, table_samples=table_n)
    ex = extract_cocycle(tp(conn, cfg.steps), conn.atlas, (chart, point), access)
    rep = audit_extraction(ex, samples=max(1, cfg.samples // 4), spot_checks=spot, seed=cfg.seed,
                           conn=conn, compare_samples=cfg.samples)
    result = rep.as_dict()
    result["table"] = ex.sample_table(table_n)
    warnings = ["oracle flagged: extraction residuals exceed the audit threshold"] if rep.flagged else []
    return result, warnings


def cmd_cocycle(cfg: RunConfig):
    conn = cfg.connection()
    tol = cfg.tol if cfg.tol is not None else defaults.get("cocycle_tol")
    objects = [("connection", conn)]
    if _pick(None, cfg.run, "transport", bool, True):
        objects.append(("transport", hol_gamma(conn, cfg.steps)))
    hom = cfg.run.get("homomorphism", str, "")
    if hom:
        if hom not in HOMOMORPHISMS:
            cfg.run.fail("homomorphism", f"unknown homomorphism {hom!r}; known: {sorted(HOMOMORPHISMS)}")
        rho = HOMOMORPHISMS[hom]()
        objects += [(f"{hom}({n})", induced_functor(rho, o)) for n, o in objects]
    cfg.note(homomorphism=hom, cocycle_tol=tol)
    result, warnings = {}, []
    for name, obj in objects:
        rep = check_cocycle(obj, samples=cfg.samples, seed=cfg.seed)
        d = rep.as_dict()
        d["passed"] = rep.passes(tol)
        result[name] = d
        if not d["passed"]:
            warnings.append(f"{name}: residual {rep.worst:.3g} exceeds {tol:g}")
    return result, warnings


def cmd_thin(cfg: RunConfig):
    conn = cfg.connection()
    H = load_homotopy(cfg.run.file("homotopy"), conn.atlas)
    grid = int(_pick(None, cfg.run, "grid", int, defaults.get("thin_grid")))
    cfg.note(grid=grid)
    res = certify_thin(H, grid=grid, tol=cfg.tol)
    result = res.as_dict()
    t0, t1 = transport(conn, H.gamma0, cfg.steps), transport(conn, H.gamma1, cfg.steps)
    result["boundary_transport_distance"] = liegroup.dist(t0.element, t1.element)
    warnings = [w for w in (t0.warning, t1.warning) if w]
    if not res.thin:
        warnings.append(f"not certified thin: sigma2 = {res.sigma2:.3g} at (s, t) = {list(res.worst_point)}")
    return result, warnings


def cmd_validate(cfg: RunConfig):
    conn = cfg.connection()
    nsamples = int(_pick(None, cfg.run, "validation_samples", int, defaults.get("validation_samples")))
    descent = validate_descent(conn, nsamples)
    flat, curv = is_flat(conn, nsamples, defaults.get("flat_tol"))
    tol = cfg.tol if cfg.tol is not None else defaults.get("naturality_tol")
    cfg.note(validation_samples=nsamples, naturality_tol=tol)
    warnings = []
    dres = max(descent.cocycle_residual, descent.compatibility_residual)
    if dres > defaults.get("cocycle_tol"):
        warnings.append(f"descent residual {dres:.3g}")
    rng = np.random.default_rng(cfg.seed)
    morphisms = {}
    for ref in cfg.run.get("morphisms", list, []):
        m = load_morphism(cfg.config.parent / ref)
        paths = m.paths + random_straight_paths(m.source.atlas, m.random_paths, rng)
        worst = 0.0
        for p in paths:
            worst = max(worst, check_naturality(m.morphism, m.source, m.target, p, cfg.steps).residual)
        passed = worst <= tol
        ok = passed == (m.expect == "pass")
        morphisms[m.name] = {"residual": worst, "paths": len(paths), "expect": m.expect,
                             "passed": passed, "as_expected": ok}
        if not ok:
            warnings.append(f"morphism {m.name}: residual {worst:.3g} (expected {m.expect})")
    result = {"descent": descent.as_dict(), "flat": flat, "max_curvature": curv,
              "morphisms": morphisms}
    return result, warnings


HANDLERS = {
    "transport": cmd_transport,
    "holonomy": cmd_holonomy,
    "sweep": cmd_sweep,
    "reconstruct": cmd_reconstruct,
    "extract-cocycle": cmd_extract,
    "cocycle-check": cmd_cocycle,
    "thin-check": cmd_thin,
    "validate": cmd_validate,
}


# ---- driver -------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thintransport",
                                     description="Parallel transport along thin paths.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--steps", type=int, metavar="N")
        p.add_argument("--h", type=float, metavar="REAL")
        p.add_argument("--samples", type=int, metavar="N")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--tol", type=float, metavar="REAL")
    sub.add_parser("defaults", help="print the defaults table")
    return parser


def run(args) -> tuple:
    """(exit code, report text) for parsed arguments; raises on errors."""
    cfg = build_run(args)
    result, warnings = HANDLERS[cfg.command](cfg)
    if cfg.command == "sweep":
        text = render_csv(cfg, *result)
    else:
        text = render_json(cfg, result, warnings)
    return (WARNING if warnings else OK), text, warnings


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "defaults":
        print(defaults.render())
        return OK
    try:
        code, text, warnings = run(args)
    except (ConfigError, ValueError, ArithmeticError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    if args.out:
        FsPath(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return code


def run_file(config, out=None, **flags) -> int:
    """Run a config whose [run] table names its command (used by the example suite)."""
    root = open_section(FsPath(config))
    command = root.section("run").get("command", str)
    argv = [command, "--config", str(config)]
    if out is not None:
        argv += ["--out", str(out)]
    for k, v in flags.items():
        argv += [f"--{k}", str(v)]
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
