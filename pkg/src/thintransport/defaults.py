"""Every numeric default used by the command line, in one table.

The values are pulled from the modules that own them, so this table is the
single place to audit tolerances.  ``python -m thintransport defaults``
prints it.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import cocycle, geometry, liegroup, pathalg, reconstruct, transport


@dataclass(frozen=True)
class Default:
    value: object
    doc: str


TABLE = {
    # integration
    "steps": Default(1024, "RKMK4 steps per path segment (transport, sweep, thin-check)"),
    "holonomy_steps": Default(4096, "RKMK4 steps per segment for the holonomy subcommand"),
    "min_steps": Default(transport.MIN_STEPS, "smallest accepted step count"),
    "warn_estimate": Default(transport.WARN_ESTIMATE, "step-halving estimate that triggers a warning (exit 2)"),
    "fail_estimate": Default(transport.FAIL_ESTIMATE, "step-halving estimate that aborts (exit 1)"),
    # paths
    "sitting": Default(pathalg.DEFAULT_SITTING, "width of the sitting collars of a path"),
    "continuity_tol": Default(pathalg.CONTINUITY_TOL, "allowed jump at segment breakpoints"),
    "sitting_tol": Default(pathalg.SITTING_TOL, "allowed speed inside a sitting collar"),
    "thin_grid": Default(64, "lattice size for thin certificates"),
    "thin_tol": Default(None, "thin tolerance; None means 1e-8 (1 + max |dH|)"),
    # groups and geometry
    "project_tol": Default(liegroup.PROJECT_TOL, "group residual above which results are re-projected"),
    "membership_tol": Default(liegroup.MEMBERSHIP_TOL, "group residual accepted on construction"),
    "validation_samples": Default(geometry.DEFAULT_SAMPLES, "Halton samples per region for validation"),
    "flat_tol": Default(1e-9, "curvature norm below which a connection counts as flat"),
    # reconstruction
    "h": Default(1e-3, "difference scale for reconstruction"),
    "hs": Default(reconstruct.DEFAULT_HS, "refinement ladder for Richardson ratios"),
    "reconstruct_samples": Default(100, "(point, direction) samples per chart"),
    "oracle_steps": Default(reconstruct.ORACLE_STEPS, "steps used by transport oracles"),
    "noise_floor": Default(reconstruct.NOISE_FLOOR, "relative error treated as exact"),
    "ratio_band": Default((0.2, 0.3), "accepted Richardson ratios for a second-order rule"),
    "functoriality_tol": Default(reconstruct.FUNCTORIALITY_TOL, "oracle audit threshold"),
    "spot_checks": Default(8, "composable pairs in an oracle functoriality audit"),
    # cocycles
    "samples": Default(cocycle.DEFAULT_SAMPLES, "overlap samples for cocycle checks and extraction"),
    "table_samples": Default(4, "overlap samples written to an extracted cocycle table"),
    "cocycle_tol": Default(cocycle.COCYCLE_TOL, "cocycle and naturality threshold"),
    "equivalence_tol": Default(cocycle.EQUIVALENCE_TOL, "threshold for equivalent_objects"),
    "naturality_tol": Default(1e-7, "bundle morphism naturality threshold"),
    "random_paths": Default(4, "random straight paths per morphism check"),
    # sweeps and runs
    "grid": Default(17, "grid points per family parameter"),
    "seed": Default(0, "seed for every sampled sequence"),
}


def get(name: str):
    return TABLE[name].value


def render() -> str:
    width = max(len(k) for k in TABLE)
    lines = []
    for k, d in TABLE.items():
        lines.append(f"{k:<{width}}  {d.value!r:<24} {d.doc}")
    return "\n".join(lines)
