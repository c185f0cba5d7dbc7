"""Parallel transport by Lie group integration of the horizontal lift.

Conventions (see also :mod:`thintransport.geometry`):

* In a chart, the transport along gamma solves ``g'(t) = -A(gamma'(t)) g(t)``
  with ``g(0) = I``; ``g(1)`` maps fibre coordinates at the start to fibre
  coordinates at the end by left multiplication.
* Where a path moves from chart a to chart b (at a sitting point x) the
  running element is handed over as ``g -> g_ab(x)^-1 g``.
* Consequently ``T(concat(gamma, tau)) = T(gamma) T(tau)`` and
  ``T(reverse(gamma)) = T(gamma)^-1``.

The integrator is RKMK4 (Runge-Kutta-Munthe-Kaas, classical RK4 tableau with
the dexp^-1 series truncated after the double bracket).  Because the
velocity field ``xi(t) = -A(gamma(t))(gamma'(t))`` does not depend on g,
all stages are computed at once and the step exponentials are multiplied in a
balanced tree.  Every run is repeated with twice the steps; the distance
between the two results is the reported error estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import liegroup
from .exprdsl import ExprFn, compose, constant, diff, parse_expr
from .exprdsl.calculus import add, mul, num
from .exprdsl.nodes import Call
from .geometry import Atlas, ConnectionData, OutOfChart
from .liegroup import GroupElement
from .pathalg import Path, Segment

MIN_STEPS = 16
WARN_ESTIMATE = 1e-8
FAIL_ESTIMATE = 1e-4


class StepTooCoarse(ArithmeticError):
    pass


class NotALoop(ValueError):
    pass


class AtlasMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Transport from ``source`` to ``target``, each a (chart, point) pair."""

    conn: ConnectionData
    source: tuple
    target: tuple
    element: GroupElement
    error_estimate: float = 0.0
    steps: int = 0
    warning: Optional[str] = None

    def in_charts(self, start_chart: str, end_chart: str) -> "TransportMap":
        """Re-express in other trivializations: T' = g_{c,c'}(y)^-1 T g_{a,a'}(x)."""
        (a, x), (c, y) = self.source, self.target
        ga = self.conn.transition(a, start_chart, x)
        gc = self.conn.transition(c, end_chart, y)
        element = liegroup.mul(liegroup.mul(gc.inverse(), self.element), ga)
        atlas = self.conn.atlas
        new_source = (start_chart, atlas.change_chart(np.asarray(x), a, start_chart))
        new_target = (end_chart, atlas.change_chart(np.asarray(y), c, end_chart))
        return TransportMap(self.conn, new_source, new_target, element,
                            self.error_estimate, self.steps, self.warning)

    def as_record(self) -> dict:
        rec = {
            "group": self.element.group.name,
            "source": {"chart": self.source[0], "point": np.asarray(self.source[1]).tolist()},
            "target": {"chart": self.target[0], "point": np.asarray(self.target[1]).tolist()},
            "chart": self.source[0],
            "matrix": _matrix_json(self.element.matrix),
            "error_estimate": self.error_estimate,
            "steps": self.steps,
            "warning": self.warning,
        }
        if self.element.group.kind == "SO2":
            rec["rotation_angle"] = liegroup.rotation_angle(self.element)
        return rec


def _matrix_json(m):
    m = np.asarray(m)
    if np.iscomplexobj(m):
        return {"real": m.real.tolist(), "imag": m.imag.tolist()}
    return m.tolist()


# ---- integrator ---------------------------------------------------------------

def _dexpinv(u, v):
    """dexp_u^-1(v) truncated after the double bracket (enough for order 4)."""
    uv = u @ v - v @ u
    return v - 0.5 * uv + (u @ uv - uv @ u) / 12.0


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """M_{N-1} ... M_1 M_0 by pairwise reduction."""
    eye = np.eye(mats.shape[-1], dtype=mats.dtype)
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, eye[None]])
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def _rkmk4(spec, xi: np.ndarray, h: float) -> np.ndarray:
    """One segment: ``xi`` sampled at t_0, t_0 + h/2, ..., t_N (2N+1 points)."""
    x0, xm, x1 = xi[0:-1:2], xi[1::2], xi[2::2]
    k1 = h * x0
    k2 = h * _dexpinv(k1 / 2, xm)
    k3 = h * _dexpinv(k2 / 2, xm)
    k4 = h * _dexpinv(k3, x1)
    omega = (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return _ordered_product(liegroup.exp_matrices(spec, omega))


def _segment_field(conn: ConnectionData, seg: Segment, samples: int) -> np.ndarray:
    ts = np.linspace(seg.start, seg.end, samples)
    pts = seg.values(ts)
    inside = conn.atlas.chart(seg.chart).contains(pts)
    if not inside.all():
        k = int(np.flatnonzero(~inside)[0])
        raise OutOfChart(f"path leaves chart {seg.chart} at t={ts[k]:.6g}: {pts[k].tolist()}")
    vel = seg.velocities(ts)
    return -conn.contract(seg.chart, pts, vel)


def _check_atlas(conn: ConnectionData, path: Path):
    if path.atlas is not conn.atlas and path.atlas != conn.atlas:
        raise AtlasMismatch("path and connection use different atlases")


def _integrate(conn: ConnectionData, path: Path, steps: int):
    spec = conn.group
    n = spec.dim_matrix
    coarse = np.eye(n, dtype=spec.dtype)
    fine = coarse.copy()
    segs = path.segments
    for i, seg in enumerate(segs):
        xi = _segment_field(conn, seg, 4 * steps + 1)
        h = (seg.end - seg.start) / steps
        coarse = _rkmk4(spec, xi[::2], h) @ coarse
        fine = _rkmk4(spec, xi, h / 2) @ fine
        if i + 1 < len(segs) and segs[i + 1].chart != seg.chart:
            x = seg.values([seg.end])[0]
            handoff = conn.transition(seg.chart, segs[i + 1].chart, x).inverse().matrix
            coarse = handoff @ coarse
            fine = handoff @ fine
    return coarse, fine


def transport(conn: ConnectionData, gamma: Path, steps: int = 1024) -> TransportMap:
    """Parallel transport along ``gamma`` with ``steps`` RKMK4 steps per segment."""
    if steps < MIN_STEPS:
        raise ValueError(f"steps must be >= {MIN_STEPS}, got {steps}")
    _check_atlas(conn, gamma)
    coarse, fine = _integrate(conn, gamma, steps)
    spec = conn.group
    if liegroup.group_residual(spec, fine) > liegroup.PROJECT_TOL:
        fine = liegroup.project(spec, fine)
    g_coarse = GroupElement(spec, coarse)
    g_fine = GroupElement(spec, fine)
    estimate = liegroup.dist(g_coarse, g_fine)
    if not np.isfinite(estimate) or estimate > FAIL_ESTIMATE:
        raise StepTooCoarse(f"step-halving estimate {estimate:.3g} exceeds {FAIL_ESTIMATE:g} "
                            f"at {steps} steps")
    warning = None
    if estimate > WARN_ESTIMATE:
        warning = (f"accuracy warning: step-halving estimate {estimate:.3g} exceeds "
                   f"{WARN_ESTIMATE:g}; increase steps")
    return TransportMap(conn, (gamma.start_chart, gamma.start), (gamma.end_chart, gamma.end),
                        g_fine, float(estimate), steps, warning)


def holonomy(conn: ConnectionData, loop: Path, steps: int = 1024) -> TransportMap:
    """Transport around a loop, expressed in the start chart at both ends."""
    _check_atlas(conn, loop)
    if not loop.is_loop():
        raise NotALoop(f"path starts at {loop.start_chart}:{loop.start.tolist()} but ends at "
                       f"{loop.end_chart}:{loop.end.tolist()}")
    t = transport(conn, loop, steps)
    if loop.end_chart != loop.start_chart:
        t = t.in_charts(loop.start_chart, loop.start_chart)
    return t


def holonomy_error_curve(conn, loop, steps_list) -> list:
    """Step-halving estimates for a list of step counts (convergence probe)."""
    return [transport(conn, loop, s).error_estimate for s in steps_list]


# ---- families -----------------------------------------------------------------

@dataclass
class FamilyTable:
    params: np.ndarray
    elements: np.ndarray
    coordinates: np.ndarray
    estimates: np.ndarray
    smoothness_constant: float
    spacing: np.ndarray
    angles: Optional[np.ndarray] = None

    def rows(self):
        for i, u in enumerate(self.params):
            row = {"u": u.tolist(), "log": self.coordinates[i].tolist(),
                   "error_estimate": float(self.estimates[i])}
            if self.angles is not None:
                row["angle"] = float(self.angles[i])
            yield row


def family_transport(conn: ConnectionData, fam, grid: int = 17, steps: int = 1024) -> FamilyTable:
    """Transport each slice of a path family over a regular parameter grid.

    The smoothness probe reports C = max |second difference| / h^2 of the
    algebra coordinates of log T along each parameter axis.
    """
    params = fam.grid(grid)
    spec = conn.group
    mats, ests = [], []
    for u in params:
        t = transport(conn, fam.slice(u), steps)
        mats.append(t.element.matrix)
        ests.append(t.error_estimate)
    mats = np.array(mats)
    angles = None
    if spec.kind == "SO2":
        shape = (grid,) * fam.k
        raw = np.arctan2(mats[:, 1, 0], mats[:, 0, 0]).reshape(shape)
        for ax in range(fam.k):
            raw = np.unwrap(raw, axis=ax)
        angles = raw.reshape(-1)
        coords = angles[:, None].copy()
    else:
        coords = []
        for m in mats:
            try:
                coords.append(liegroup.algebra_coordinates(spec, liegroup.log_matrix(spec, m)))
            except liegroup.CutLocus:
                coords.append(np.full(spec.dim_algebra, np.nan))
        coords = np.array(coords)
    spacing = (fam.upper - fam.lower) / max(grid - 1, 1)
    c = 0.0
    if grid >= 3:
        cube = coords.reshape((grid,) * fam.k + (coords.shape[-1],))
        for ax in range(fam.k):
            d2 = np.diff(cube, n=2, axis=ax)
            if spacing[ax] > 0 and np.isfinite(d2).any():
                c = max(c, float(np.nanmax(np.abs(d2))) / spacing[ax] ** 2)
    return FamilyTable(params, mats, coords, np.array(ests), c, spacing, angles)


# ---- smooth maps, pullbacks and naturality --------------------------------------

@dataclass(frozen=True, eq=False)
class SmoothMap:
    """Chart-wise smooth map: ``maps[c] = (target chart, ExprFn)``."""

    source: Atlas
    target: Atlas
    maps: dict

    def __post_init__(self):
        for c in self.source.chart_names:
            if c not in self.maps:
                raise ValueError(f"smooth map has no formula on chart {c}")
            tc, fn = self.maps[c]
            self.target.chart(tc)
            if fn.arity != self.source.dim or fn.shape != (self.target.dim,):
                raise ValueError(f"map on chart {c} has the wrong shape")

    def apply_path(self, gamma: Path) -> Path:
        segs = []
        for seg in gamma.segments:
            tc, fn = self.maps[seg.chart]
            segs.append(Segment(tc, compose(fn, seg.map, 1), seg.start, seg.end))
        return Path(self.target, tuple(segs), gamma.sitting)

    def point(self, chart: str, x) -> tuple:
        tc, fn = self.maps[chart]
        return tc, fn(x)


def identity_map(atlas: Atlas) -> SmoothMap:
    d = atlas.dim
    fn = parse_expr("[" + ", ".join(f"x{i}" for i in range(d)) + "]", d, (d,))
    return SmoothMap(atlas, atlas, {c: (c, fn) for c in atlas.chart_names})


def compose_maps(m: SmoothMap, n: SmoothMap) -> SmoothMap:
    """m o n."""
    if n.target is not m.source and n.target != m.source:
        raise AtlasMismatch("maps are not composable")
    out = {}
    for c, (tc, fn) in n.maps.items():
        tc2, fm = m.maps[tc]
        out[c] = (tc2, compose(fm, fn, n.source.dim))
    return SmoothMap(n.source, m.target, out)


def pullback_transport(m: SmoothMap, conn: ConnectionData, gamma: Path,
                       steps: int = 1024) -> TransportMap:
    """(m^* T)(gamma) = T(m o gamma)."""
    if m.target is not conn.atlas and m.target != conn.atlas:
        raise AtlasMismatch("map target is not the connection's atlas")
    return transport(conn, m.apply_path(gamma), steps)


def pullback_connection(m: SmoothMap, conn: ConnectionData) -> ConnectionData:
    """m^*A chart-wise; transitions pulled back where the source atlas has overlaps."""
    d = m.source.dim
    forms = {}
    for c, (tc, fn) in m.maps.items():
        jac = [diff(fn, i) for i in range(d)]
        moved = [compose(a, fn, d) for a in conn.forms[tc]]
        comps = []
        for i in range(d):
            node = None
            for k, a in enumerate(moved):
                term = mul(a.node, Call("entry", (jac[i].node, num(k))))
                node = term if node is None else add(node, term)
            comps.append(ExprFn(node, d, a.shape))
        forms[c] = tuple(comps)
    transitions = {}
    for ov in m.source.overlaps:
        ta, tb = m.maps[ov.source][0], m.maps[ov.target][0]
        if ta == tb:
            transitions[ov.id] = constant(np.eye(conn.group.dim_matrix), d)
            continue
        arrows = conn.atlas.arrows_between(ta, tb)
        if len(arrows) != 1 or arrows[0].reversed_from is not None:
            raise NotImplementedError("pullback needs a unique declared overlap between image charts")
        transitions[ov.id] = compose(conn.transitions[arrows[0].id], m.maps[ov.source][1], d)
    return ConnectionData(m.source, conn.group, forms, transitions)


@dataclass(frozen=True, eq=False)
class BundleMorphism:
    """f(x, g) = (base(x), h(x) g) chart-wise; ``base`` None means identity."""

    gauges: dict = field(default_factory=dict)
    base: Optional[SmoothMap] = None

    def gauge_at(self, spec, chart: str, x) -> np.ndarray:
        h = self.gauges.get(chart)
        if h is None:
            return np.eye(spec.dim_matrix, dtype=spec.dtype)
        return np.asarray(h(x), dtype=spec.dtype)


@dataclass
class NaturalityResult:
    residual: float
    lhs: GroupElement
    rhs: GroupElement
    error_estimate: float

    def as_dict(self):
        return {"residual": self.residual, "lhs": _matrix_json(self.lhs.matrix),
                "rhs": _matrix_json(self.rhs.matrix), "error_estimate": self.error_estimate}


def check_naturality(f: BundleMorphism, conn: ConnectionData, conn2: ConnectionData,
                     gamma: Path, steps: int = 1024) -> NaturalityResult:
    """dist(h(y) T_A(gamma), T_A'(base o gamma) h(x)).

    ``conn`` lives on the source of f and ``conn2`` on its target; f
    intertwines exactly when A = Ad(h^-1) base^*A' + h^-1 dh.
    """
    t1 = transport(conn, gamma, steps)
    if f.base is None:
        image = Path(conn2.atlas, gamma.segments, gamma.sitting, check=False)
    else:
        image = f.base.apply_path(gamma)
    t2 = transport(conn2, image, steps)
    spec = conn.group
    hx = GroupElement(spec, f.gauge_at(spec, gamma.start_chart, gamma.start))
    hy = GroupElement(spec, f.gauge_at(spec, gamma.end_chart, gamma.end))
    lhs = liegroup.mul(hy, t1.element)
    rhs = liegroup.mul(t2.element, hx)
    return NaturalityResult(liegroup.dist(lhs, rhs), lhs, rhs,
                            max(t1.error_estimate, t2.error_estimate))
