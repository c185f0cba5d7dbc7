"""Chart-presented manifolds and connections given by descent data.

Conventions (right principal action, local sections ``s_a``):

* ``s_b = s_a . g_ab`` on the overlap of charts a and b, so the transition
  functions satisfy ``g_ab g_bc = g_ac``;
* the local connection forms obey
  ``A_b = Ad(g_ab^-1) A_a + g_ab^-1 d g_ab`` (``A_b`` pulled back through the
  coordinate change);
* a point with fibre coordinate ``h_a`` in chart a has coordinate
  ``h_b = g_ab^-1 h_a`` in chart b.

Transition functions are ExprFns in the *source* chart's coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.stats import qmc

from . import liegroup
from .exprdsl import ExprFn, ShapeError, compose, diff
from .exprdsl.calculus import call, mul, sub

BOX_TOL = 1e-12
DEFAULT_SAMPLES = 256


class OutOfChart(ValueError):
    pass


class MissingTransition(ValueError):
    pass


def halton(lower, upper, n: int) -> np.ndarray:
    """Deterministic Halton points in a box (unscrambled, origin skipped)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    sampler = qmc.Halton(d=len(lower), scramble=False)
    sampler.fast_forward(1)
    return qmc.scale(sampler.random(n), lower, upper)


def in_box(points, lower, upper, tol=BOX_TOL) -> np.ndarray:
    points = np.atleast_2d(points)
    return np.all((points >= np.asarray(lower) - tol) & (points <= np.asarray(upper) + tol), axis=1)


@dataclass(frozen=True)
class Chart:
    name: str
    lower: tuple
    upper: tuple

    def contains(self, points, tol=BOX_TOL) -> np.ndarray:
        return in_box(points, self.lower, self.upper, tol)


@dataclass(frozen=True)
class Overlap:
    """Coordinate change from ``source`` to ``target`` on part of their overlap.

    A point x (source coordinates) belongs to the overlap when it lies in
    ``box`` (default: the source chart), ``forward(x)`` is defined and lies in
    the target chart and in ``target_box`` when that is given.
    """

    id: str
    source: str
    target: str
    forward: ExprFn
    backward: ExprFn
    box: Optional[tuple] = None
    target_box: Optional[tuple] = None
    reversed_from: Optional[str] = None

    def reversed(self) -> "Overlap":
        return Overlap(self.id + "~", self.target, self.source, self.backward,
                       self.forward, box=None, target_box=self.box,
                       reversed_from=self.id)

    @property
    def declared_id(self) -> str:
        return self.reversed_from or self.id


@dataclass(frozen=True)
class Atlas:
    dim: int
    charts: tuple
    overlaps: tuple = ()

    def __post_init__(self):
        names = [c.name for c in self.charts]
        if len(set(names)) != len(names):
            raise ValueError("duplicate chart names")
        for ov in self.overlaps:
            if ov.source not in names or ov.target not in names:
                raise ValueError(f"overlap {ov.id} refers to an unknown chart")

    @cached_property
    def _by_name(self):
        return {c.name: c for c in self.charts}

    def chart(self, name: str) -> Chart:
        try:
            return self._by_name[name]
        except KeyError:
            raise OutOfChart(f"no chart named {name!r}") from None

    @property
    def chart_names(self):
        return [c.name for c in self.charts]

    @cached_property
    def arrows(self) -> tuple:
        """Declared overlaps together with their reverses."""
        out = []
        for ov in self.overlaps:
            out.append(ov)
            out.append(ov.reversed())
        return tuple(out)

    def arrows_between(self, a: str, b: str):
        return [ov for ov in self.arrows if ov.source == a and ov.target == b]

    def overlap_mask(self, arrow: Overlap, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mask = self.chart(arrow.source).contains(points)
        if arrow.box is not None:
            mask &= in_box(points, *arrow.box)
        if not mask.any():
            return mask
        images = np.full_like(points, np.nan)
        images[mask] = arrow.forward.eval_batch(points[mask], strict=False)
        ok = np.all(np.isfinite(images), axis=1)
        mask &= ok
        safe = np.where(ok[:, None], images, 0.0)
        mask &= self.chart(arrow.target).contains(safe)
        if arrow.target_box is not None:
            mask &= in_box(safe, *arrow.target_box)
        return mask

    def find_arrow(self, a: str, b: str, point) -> Overlap:
        """An oriented overlap from chart a to chart b containing ``point``."""
        for arrow in self.arrows_between(a, b):
            if self.overlap_mask(arrow, point)[0]:
                return arrow
        raise MissingTransition(f"no overlap {a} -> {b} contains {np.asarray(point).tolist()}")

    def change_chart(self, point, a: str, b: str) -> np.ndarray:
        if a == b:
            return np.asarray(point, dtype=float)
        return self.find_arrow(a, b, point).forward(point)

    def sample_region(self, arrow: Overlap, n: int) -> np.ndarray:
        """Halton points (source coordinates) that lie in the overlap."""
        chart = self.chart(arrow.source)
        lower, upper = (arrow.box if arrow.box is not None else (chart.lower, chart.upper))
        pts = halton(lower, upper, n)
        return pts[self.overlap_mask(arrow, pts)]

    def restrict(self, name: str) -> "Atlas":
        return Atlas(self.dim, (self.chart(name),), ())


@dataclass(frozen=True, eq=False)
class ConnectionData:
    """Local Lie-algebra valued 1-forms per chart plus transition functions.

    ``forms[chart]`` holds one matrix ExprFn per coordinate direction (the
    coefficients ``A_i`` of ``A = sum A_i dx^i``); ``transitions[overlap_id]``
    is ``g_{source,target}`` as a function of source coordinates.
    """

    atlas: Atlas
    group: liegroup.LieGroupSpec
    forms: dict
    transitions: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.group.dim_matrix
        for name in self.atlas.chart_names:
            comps = self.forms.get(name)
            if comps is None or len(comps) != self.atlas.dim:
                raise ShapeError(f"chart {name}: need {self.atlas.dim} form components")
            for f in comps:
                if f.arity != self.atlas.dim or f.shape != (n, n):
                    raise ShapeError(f"chart {name}: form component must be {n}x{n} in {self.atlas.dim} inputs")
        for ov in self.atlas.overlaps:
            g = self.transitions.get(ov.id)
            if g is None:
                raise MissingTransition(f"no transition function for overlap {ov.id}")
            if g.arity != self.atlas.dim or g.shape != (n, n):
                raise ShapeError(f"overlap {ov.id}: transition must be {n}x{n}")

    @cached_property
    def _form_derivatives(self):
        return {name: [[diff(f, i) for i in range(self.atlas.dim)] for f in comps]
                for name, comps in self.forms.items()}

    def form_matrices(self, chart: str, points) -> np.ndarray:
        """Coefficients ``A_i`` at each point, shape (N, dim, n, n)."""
        points = np.atleast_2d(points)
        return np.stack([f.eval_batch(points) for f in self.forms[chart]], axis=1)

    def contract(self, chart: str, points, velocities) -> np.ndarray:
        """``A(v) = sum_i A_i v^i`` at each point, shape (N, n, n)."""
        a = self.form_matrices(chart, points)
        return np.einsum("nkij,nk->nij", a, np.atleast_2d(velocities))

    def transition_matrices(self, arrow: Overlap, points) -> np.ndarray:
        """g_{source,target} along an oriented overlap at source points."""
        points = np.atleast_2d(points)
        if arrow.reversed_from is None:
            return self.transitions[arrow.id].eval_batch(points)
        # g_ba(y) = g_ab(x)^-1 with x = backward(y)
        original = self.transitions[arrow.reversed_from]
        xs = arrow.forward.eval_batch(points)
        return _invert(self.group, original.eval_batch(xs))

    def transition(self, a: str, b: str, point) -> liegroup.GroupElement:
        if a == b:
            return self.group.identity()
        arrow = self.atlas.find_arrow(a, b, point)
        return liegroup.GroupElement(self.group, self.transition_matrices(arrow, point)[0])

    def restrict(self, chart: str) -> "ConnectionData":
        return ConnectionData(self.atlas.restrict(chart), self.group, {chart: self.forms[chart]}, {})


def _invert(spec, mats):
    if spec.kind == "GL":
        return np.linalg.inv(mats)
    return np.conj(np.swapaxes(mats, -1, -2))


@dataclass(frozen=True, eq=False)
class CurvatureSample:
    chart: str
    point: np.ndarray
    value: np.ndarray  # (dim, dim, n, n), antisymmetric in the first two axes

    def norm(self) -> float:
        return float(np.max(np.linalg.norm(self.value, axis=(-2, -1)), initial=0.0))


def curvature_batch(conn: ConnectionData, chart: str, points) -> np.ndarray:
    """F_ij = d_i A_j - d_j A_i + [A_i, A_j], shape (N, dim, dim, n, n)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not conn.atlas.chart(chart).contains(points).all():
        raise OutOfChart(f"point outside chart {chart}")
    d = conn.atlas.dim
    a = conn.form_matrices(chart, points)
    derivs = conn._form_derivatives[chart]
    n = conn.group.dim_matrix
    out = np.zeros((len(points), d, d, n, n), dtype=a.dtype)
    for i in range(d):
        for j in range(i + 1, d):
            f = (derivs[j][i].eval_batch(points) - derivs[i][j].eval_batch(points)
                 + a[:, i] @ a[:, j] - a[:, j] @ a[:, i])
            out[:, i, j] = f
            out[:, j, i] = -f
    return out


def curvature_at(conn: ConnectionData, chart: str, point) -> CurvatureSample:
    point = np.asarray(point, dtype=float)
    return CurvatureSample(chart, point, curvature_batch(conn, chart, point)[0])


def is_flat(conn: ConnectionData, samples: int = DEFAULT_SAMPLES, tol: float = 1e-9):
    """(flat?, worst curvature norm) over Halton samples of every chart."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    worst = 0.0
    for chart in conn.atlas.charts:
        pts = halton(chart.lower, chart.upper, samples)
        f = curvature_batch(conn, chart.name, pts)
        worst = max(worst, float(np.max(np.linalg.norm(f, axis=(-2, -1)), initial=0.0)))
    return worst <= tol, worst


@dataclass
class DescentReport:
    cocycle_residual: float
    cocycle_location: Optional[dict]
    compatibility_residual: float
    compatibility_location: Optional[dict]
    triple_count: int
    simplicial_residual: float = 0.0

    @property
    def vacuous(self) -> bool:
        return self.triple_count == 0

    def as_dict(self):
        return {
            "cocycle_residual": self.cocycle_residual,
            "cocycle_location": self.cocycle_location,
            "compatibility_residual": self.compatibility_residual,
            "compatibility_location": self.compatibility_location,
            "triple_count": self.triple_count,
            "triple_law_vacuous": self.vacuous,
            "simplicial_residual": self.simplicial_residual,
        }


def triple_samples(atlas: Atlas, samples: int):
    """Yield (a1, a2, a3, x) for composable arrows a1: i->j, a2: j->k, a3: i->k.

    Charts i, j, k are distinct; ``x`` are source points lying in all three.
    """
    arrows = atlas.arrows
    for a1 in arrows:
        for a2 in arrows:
            if a2.source != a1.target or a2.target == a1.source:
                continue
            for a3 in atlas.arrows_between(a1.source, a2.target):
                pts = atlas.sample_region(a1, samples)
                if len(pts) == 0:
                    continue
                mask = atlas.overlap_mask(a3, pts)
                if not mask.any():
                    continue
                pts = pts[mask]
                ys = a1.forward.eval_batch(pts)
                mask = atlas.overlap_mask(a2, ys)
                if mask.any():
                    yield a1, a2, a3, pts[mask]


def cocycle_residuals(atlas: Atlas, samples: int, transition_fn):
    """Worst ||g_ij g_jk - g_ik|| over triple overlaps.

    ``transition_fn(arrow, points)`` returns the group matrices along an arrow.
    Returns (residual, location, triple count, simplicial residual).
    """
    worst, where, count, simplicial = 0.0, None, 0, 0.0
    for a1, a2, a3, pts in triple_samples(atlas, samples):
        ys = a1.forward.eval_batch(pts)
        g12 = transition_fn(a1, pts)
        g23 = transition_fn(a2, ys)
        g13 = transition_fn(a3, pts)
        r = np.linalg.norm(g12 @ g23 - g13, axis=(-2, -1))
        count += len(pts)
        simplicial = max(simplicial, float(np.max(
            np.linalg.norm(a2.forward.eval_batch(ys) - a3.forward.eval_batch(pts), axis=1))))
        k = int(np.argmax(r))
        if where is None or r[k] > worst:
            worst = float(r[k])
            where = {"charts": [a1.source, a1.target, a2.target],
                     "overlaps": [a1.declared_id, a2.declared_id, a3.declared_id],
                     "point": pts[k].tolist()}
    return worst, where, count, simplicial


def compatibility_residual(conn: ConnectionData, arrow: Overlap, points) -> np.ndarray:
    """Per-point worst ||pullback(A_b)_l - (Ad(g^-1) A_a + g^-1 dg)_l||."""
    points = np.atleast_2d(points)
    d = conn.atlas.dim
    ys = arrow.forward.eval_batch(points)
    jac = np.stack([diff(arrow.forward, l).eval_batch(points) for l in range(d)], axis=-1)
    a_src = conn.form_matrices(arrow.source, points)
    a_tgt = conn.form_matrices(arrow.target, ys)
    pulled = np.einsum("nkij,nkl->nlij", a_tgt, jac)
    if arrow.reversed_from is None:
        g_expr = conn.transitions[arrow.id]
        g = g_expr.eval_batch(points)
        dg = np.stack([diff(g_expr, l).eval_batch(points) for l in range(d)], axis=1)
    else:
        g = conn.transition_matrices(arrow, points)
        dg = _numeric_jacobian(lambda p: conn.transition_matrices(arrow, p), points)
    ginv = _invert(conn.group, g)
    expected = (ginv[:, None] @ a_src @ g[:, None]) + ginv[:, None] @ dg
    return np.max(np.linalg.norm(pulled - expected, axis=(-2, -1)), axis=1)


def _numeric_jacobian(fn, points, h=1e-6):
    d = points.shape[1]
    out = []
    for l in range(d):
        e = np.zeros(d)
        e[l] = h
        out.append((fn(points + e) - fn(points - e)) / (2 * h))
    return np.stack(out, axis=1)


def validate_descent(conn: ConnectionData, samples: int = DEFAULT_SAMPLES) -> DescentReport:
    worst_c, where_c, count, simplicial = cocycle_residuals(
        conn.atlas, samples, conn.transition_matrices)
    worst_a, where_a = 0.0, None
    for ov in conn.atlas.overlaps:
        pts = conn.atlas.sample_region(ov, samples)
        if len(pts) == 0:
            continue
        r = compatibility_residual(conn, ov, pts)
        k = int(np.argmax(r))
        if where_a is None or r[k] > worst_a:
            worst_a = float(r[k])
            where_a = {"overlap": ov.id, "point": pts[k].tolist()}
    return DescentReport(worst_c, where_c, worst_a, where_a, count, simplicial)


def gauge_transform(conn: ConnectionData, gauges: dict) -> ConnectionData:
    """Connection seen through new sections ``s'_a = s_a . h_a^-1``.

    ``gauges[chart]`` is a group-valued ExprFn.  The result has forms
    ``A'_a = Ad(h_a) A_a - dh_a h_a^-1`` and transitions
    ``g'_ab = h_a g_ab h_b^-1``, so transports satisfy
    ``T' = h(end) T h(start)^-1``.
    """
    d = conn.atlas.dim
    forms = {}
    for name, comps in conn.forms.items():
        h = gauges.get(name)
        if h is None:
            forms[name] = comps
            continue
        hinv = call("inv", h.node)
        new = []
        for i, a in enumerate(comps):
            node = sub(mul(mul(h.node, a.node), hinv), mul(diff(h, i).node, hinv))
            new.append(ExprFn(node, d, a.shape))
        forms[name] = tuple(new)
    transitions = {}
    for ov in conn.atlas.overlaps:
        g = conn.transitions[ov.id]
        node = g.node
        ha, hb = gauges.get(ov.source), gauges.get(ov.target)
        if ha is not None:
            node = mul(ha.node, node)
        if hb is not None:
            hb_moved = compose(hb, ov.forward, d)
            node = mul(node, call("inv", hb_moved.node))
        transitions[ov.id] = ExprFn(node, d, g.shape)
    return ConnectionData(conn.atlas, conn.group, forms, transitions)


def gauge_matrix(gauges: dict, chart: str, point, spec) -> np.ndarray:
    h = gauges.get(chart)
    if h is None:
        return np.eye(spec.dim_matrix, dtype=spec.dtype)
    return np.asarray(h(point), dtype=spec.dtype)
