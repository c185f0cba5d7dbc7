"""Paths with sitting instances, their algebra, and thin homotopies.

A :class:`Path` is a list of segments.  Each segment lives in one chart and
is an ExprFn of the *global* parameter ``t`` (input ``x0``) restricted to a
sub-interval of ``[0, 1]``.  Charts change only at segment boundaries, where
the path is required to sit still.

Concatenation follows the groupoid convention of the transport functor:
``concat(gamma, tau)`` runs ``tau`` on ``[0, 1/2]`` at double speed and then
``gamma`` on ``[1/2, 1]``, so that ``T(concat(gamma, tau)) = T(gamma) T(tau)``.

For homotopies ``H(s, t)`` the first argument ``s`` is the path parameter and
``t`` the homotopy parameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from . import cutoff
from .exprdsl import ExprFn, compose, constant, parse_expr
from .exprdsl.calculus import add, call, mul, num
from .exprdsl.nodes import Var, VectorLit
from .geometry import Atlas, OutOfChart

CONTINUITY_TOL = 1e-9
SITTING_TOL = 1e-12
DEFAULT_SITTING = cutoff.LOW
CHECK_SAMPLES = 64
SIT_SAMPLES = 8


class OutOfRange(ValueError):
    pass


class PathError(ValueError):
    pass


class EndpointMismatch(PathError):
    pass


class SegmentLeavesChart(OutOfChart):
    pass


class BoundaryMismatch(ValueError):
    pass


def beta(t: float) -> float:
    """The fixed cutoff: 0 on [0, 0.1], 1 on [0.9, 1], smooth and monotone."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"beta is defined on [0, 1], got {t}")
    return float(cutoff.beta_values(np.array(t)))


def beta_expr() -> ExprFn:
    return parse_expr("beta(x0)", 1)


_T = Var(0)


def _affine(scale: float, shift: float) -> ExprFn:
    """``scale * x0 + shift`` as an arity-1 ExprFn."""
    return ExprFn(add(mul(num(scale), _T), num(shift)), 1)


@dataclass(frozen=True)
class Segment:
    chart: str
    map: ExprFn
    start: float
    end: float

    def __post_init__(self):
        if self.map.arity != 1 or len(self.map.shape) != 1:
            raise PathError("segment maps must be vector-valued functions of one input")
        if not 0.0 <= self.start < self.end <= 1.0:
            raise PathError(f"bad segment interval [{self.start}, {self.end}]")

    def values(self, ts) -> np.ndarray:
        return self.map.eval_batch(np.asarray(ts, dtype=float).reshape(-1, 1))

    def velocities(self, ts) -> np.ndarray:
        return self.map.diff(0).eval_batch(np.asarray(ts, dtype=float).reshape(-1, 1))


@dataclass(frozen=True, eq=False)
class Path:
    """A sitting-instance path, piecewise over charts of ``atlas``."""

    atlas: Atlas
    segments: tuple
    sitting: float = DEFAULT_SITTING
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.check:
            self.validate()

    # ---- structure -------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.atlas.dim

    @property
    def start_chart(self) -> str:
        return self.segments[0].chart

    @property
    def end_chart(self) -> str:
        return self.segments[-1].chart

    @property
    def start(self) -> np.ndarray:
        return self.segments[0].values([0.0])[0]

    @property
    def end(self) -> np.ndarray:
        return self.segments[-1].values([1.0])[0]

    @property
    def breakpoints(self) -> list:
        return [seg.end for seg in self.segments[:-1]]

    def segment_index(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        idx = np.searchsorted(np.array(self.breakpoints), ts, side="right")
        return np.minimum(idx, len(self.segments) - 1)

    def locate(self, t: float):
        """(chart, coordinates) of the point at parameter ``t``."""
        seg = self.segments[int(self.segment_index(t))]
        return seg.chart, seg.values([t])[0]

    def __call__(self, t: float) -> np.ndarray:
        return self.locate(t)[1]

    def evaluate_in(self, ts, chart: Optional[str] = None) -> np.ndarray:
        """Points at ``ts`` expressed in ``chart`` (default: start chart)."""
        chart = chart or self.start_chart
        ts = np.asarray(ts, dtype=float).reshape(-1)
        idx = self.segment_index(ts)
        out = np.empty((len(ts), self.dim))
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if not mask.any():
                continue
            vals = seg.values(ts[mask])
            if seg.chart != chart:
                vals = np.array([self.atlas.change_chart(v, seg.chart, chart) for v in vals])
            out[mask] = vals
        return out

    def is_loop(self, tol=CONTINUITY_TOL) -> bool:
        try:
            end = self.atlas.change_chart(self.end, self.end_chart, self.start_chart)
        except Exception:
            return False
        return bool(np.linalg.norm(end - self.start) <= tol)

    # ---- invariants ------------------------------------------------------
    def validate(self):
        segs = self.segments
        if not segs:
            raise PathError("a path needs at least one segment")
        if segs[0].start != 0.0 or segs[-1].end != 1.0:
            raise PathError("segments must cover [0, 1]")
        for a, b in zip(segs, segs[1:]):
            if a.end != b.start:
                raise PathError(f"segments leave a gap at {a.end} / {b.start}")
        if not 0.0 < self.sitting < 0.5:
            raise PathError("sitting radius must lie in (0, 1/2)")
        for seg in segs:
            if len(seg.map.shape) != 1 or seg.map.shape[0] != self.dim:
                raise PathError(f"segment in chart {seg.chart} has the wrong dimension")
            chart = self.atlas.chart(seg.chart)
            ts = np.linspace(seg.start, seg.end, CHECK_SAMPLES)
            pts = seg.values(ts)
            bad = ~chart.contains(pts)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise OutOfChart(f"segment leaves chart {seg.chart} at t={ts[k]:.6g}, "
                                 f"point {pts[k].tolist()}")
        for a, b in zip(segs, segs[1:]):
            pa = a.values([a.end])[0]
            pb = b.values([b.start])[0]
            moved = self.atlas.change_chart(pa, a.chart, b.chart)
            if np.linalg.norm(moved - pb) > CONTINUITY_TOL:
                raise PathError(f"path jumps at t={a.end}: {moved.tolist()} vs {pb.tolist()}")
            for seg, t in ((a, a.end), (b, b.start)):
                v = np.linalg.norm(seg.velocities([t])[0])
                if v > CONTINUITY_TOL:
                    raise PathError(f"path does not sit at the chart change t={t} (speed {v:.3g})")
        eps = self.sitting
        head = segs[0].velocities(np.linspace(0.0, min(eps, segs[0].end), SIT_SAMPLES))
        tail = segs[-1].velocities(np.linspace(max(1.0 - eps, segs[-1].start), 1.0, SIT_SAMPLES))
        worst = float(max(np.max(np.abs(head)), np.max(np.abs(tail))))
        if worst > SITTING_TOL:
            raise PathError(f"path is not constant on its sitting collars (speed {worst:.3g})")
        return self


def constant_path(atlas: Atlas, chart: str, point, sitting=DEFAULT_SITTING) -> Path:
    point = np.asarray(point, dtype=float)
    if not atlas.chart(chart).contains(point)[0]:
        raise OutOfChart(f"{point.tolist()} is outside chart {chart}")
    return Path(atlas, (Segment(chart, constant(point, 1), 0.0, 1.0),), sitting)


def straight_line(atlas: Atlas, chart: str, x, y) -> Path:
    """sigma(x, y)(t) = x + beta(t) (y - x), inside one chart."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    box = atlas.chart(chart)
    # boxes are convex, so checking the endpoints suffices
    if not (box.contains(x)[0] and box.contains(y)[0]):
        raise SegmentLeavesChart(f"segment {x.tolist()} -> {y.tolist()} leaves chart {chart}")
    b = call("beta", _T)
    items = tuple(add(num(xi), mul(b, num(di))) for xi, di in zip(x, y - x))
    fn = ExprFn(VectorLit(items), 1, (len(x),))
    return Path(atlas, (Segment(chart, fn, 0.0, 1.0),), DEFAULT_SITTING, check=False)


def _same_atlas(a: Path, b: Path):
    if a.atlas is not b.atlas and a.atlas != b.atlas:
        raise PathError("paths live on different atlases")


def concat(gamma: Path, tau: Path) -> Path:
    """``tau`` first on [0, 1/2], then ``gamma`` on [1/2, 1]."""
    _same_atlas(gamma, tau)
    try:
        joined = gamma.atlas.change_chart(tau.end, tau.end_chart, gamma.start_chart)
    except Exception as exc:
        raise EndpointMismatch(f"tau ends at {tau.end.tolist()} in chart {tau.end_chart}, "
                               f"which is not in chart {gamma.start_chart}") from exc
    if np.linalg.norm(joined - gamma.start) > CONTINUITY_TOL:
        raise EndpointMismatch(f"tau(1) = {joined.tolist()} but gamma(0) = {gamma.start.tolist()}")
    first, second = _affine(2.0, 0.0), _affine(2.0, -1.0)
    segs = [Segment(s.chart, compose(s.map, [first], 1), s.start / 2, s.end / 2)
            for s in tau.segments]
    segs += [Segment(s.chart, compose(s.map, [second], 1), (s.start + 1) / 2, (s.end + 1) / 2)
             for s in gamma.segments]
    return Path(gamma.atlas, tuple(segs), min(gamma.sitting, tau.sitting) / 2, check=False)


def reverse(gamma: Path) -> Path:
    flip = _affine(-1.0, 1.0)
    segs = [Segment(s.chart, compose(s.map, [flip], 1), 1.0 - s.end, 1.0 - s.start)
            for s in reversed(gamma.segments)]
    return Path(gamma.atlas, tuple(segs), gamma.sitting, check=False)


def _preimage(phi: ExprFn, level: float) -> float:
    f = lambda s: phi((s,)) - level
    lo, hi = f(0.0), f(1.0)
    if lo >= 0:
        return 0.0
    if hi <= 0:
        return 1.0
    return brentq(f, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def reparameterize(gamma: Path, phi: ExprFn) -> Path:
    """``gamma o phi`` for a non-decreasing ``phi`` with phi(0)=0, phi(1)=1."""
    if phi.arity != 1 or phi.shape != ():
        raise PathError("reparameterization must be a scalar function of one input")
    if abs(phi((0.0,))) > 1e-12 or abs(phi((1.0,)) - 1.0) > 1e-12:
        raise PathError("reparameterization must fix 0 and 1")
    ss = np.linspace(0.0, 1.0, 1025)
    if np.any(np.diff(phi.eval_batch(ss.reshape(-1, 1))) < -1e-12):
        raise PathError("reparameterization must be non-decreasing")
    cuts = [0.0] + [_preimage(phi, b) for b in gamma.breakpoints] + [1.0]
    segs = []
    for seg, a, b in zip(gamma.segments, cuts, cuts[1:]):
        if b > a:
            segs.append(Segment(seg.chart, compose(seg.map, [phi], 1), a, b))
    lo = _preimage(phi, gamma.sitting)
    hi = 1.0 - _preimage(phi, 1.0 - gamma.sitting)
    sitting = min(lo, hi, 0.49)
    return Path(gamma.atlas, tuple(segs), sitting)


def path_distance(p: Path, q: Path, samples: int = CHECK_SAMPLES) -> float:
    """Max pointwise distance, compared in p's start chart where possible."""
    ts = np.linspace(0.0, 1.0, samples)
    worst = 0.0
    for t in ts:
        cp, xp = p.locate(t)
        cq, xq = q.locate(t)
        if cp != cq:
            xq = p.atlas.change_chart(xq, cq, cp)
        worst = max(worst, float(np.linalg.norm(xp - xq)))
    return worst


class Upsilon:
    """s -> (t -> germ(s * beta(t))) for a germ given in one chart."""

    def __init__(self, atlas: Atlas, chart: str, germ: ExprFn):
        if germ.arity != 1 or germ.shape != (atlas.dim,):
            raise PathError("germ must map one input to chart coordinates")
        self.atlas, self.chart, self.germ = atlas, chart, germ

    def __call__(self, s: float) -> Path:
        inner = ExprFn(mul(num(s), call("beta", _T)), 1)
        fn = compose(self.germ, [inner], 1)
        return Path(self.atlas, (Segment(self.chart, fn, 0.0, 1.0),), DEFAULT_SITTING)


def upsilon(atlas: Atlas, chart: str, germ: ExprFn) -> Upsilon:
    return Upsilon(atlas, chart, germ)


# ---- homotopies ------------------------------------------------------------

class Homotopy:
    """Interface: values and Jacobians of H on [0,1]^2 plus boundary paths."""

    atlas: Atlas
    gamma0: Path
    gamma1: Path
    collar: float

    def values(self, s, t) -> tuple:
        """(charts, points) at the pairs (s_i, t_i)."""
        raise NotImplementedError

    def jacobian(self, s, t) -> np.ndarray:
        """dH at (s_i, t_i), shape (N, dim, 2) with columns d/ds, d/dt."""
        raise NotImplementedError


@dataclass(eq=False)
class ExprHomotopy(Homotopy):
    """H given by one ExprFn of (s, t) in a single chart."""

    atlas: Atlas
    chart: str
    map: ExprFn
    collar: float = DEFAULT_SITTING
    gamma0: Optional[Path] = None
    gamma1: Optional[Path] = None

    def __post_init__(self):
        if self.map.arity != 2 or self.map.shape != (self.atlas.dim,):
            raise PathError("homotopy map must send (s, t) to chart coordinates")
        if self.gamma0 is None:
            self.gamma0 = self._edge(0.0)
        if self.gamma1 is None:
            self.gamma1 = self._edge(1.0)

    def _edge(self, t: float) -> Path:
        fn = compose(self.map, [ExprFn(_T, 1), constant(t, 1)], 1)
        return Path(self.atlas, (Segment(self.chart, fn, 0.0, 1.0),), self.collar)

    def values(self, s, t):
        pts = self.map.eval_batch(np.column_stack([s, t]))
        return [self.chart] * len(pts), pts

    def jacobian(self, s, t):
        st = np.column_stack([s, t])
        return np.stack([g.eval_batch(st) for g in self.map.gradient], axis=-1)


@dataclass(eq=False)
class ReparameterizationHomotopy(Homotopy):
    """H(s, t) = path(u(s, t)) for a scalar ExprFn u of (s, t)."""

    path: Path
    u: ExprFn
    collar: float = DEFAULT_SITTING
    gamma0: Optional[Path] = None
    gamma1: Optional[Path] = None

    def __post_init__(self):
        if self.u.arity != 2 or self.u.shape != ():
            raise PathError("u must be a scalar function of (s, t)")
        self.atlas = self.path.atlas
        for name, t in (("gamma0", 0.0), ("gamma1", 1.0)):
            if getattr(self, name) is None:
                edge = compose(self.u, [ExprFn(_T, 1), constant(t, 1)], 1)
                setattr(self, name, reparameterize(self.path, edge))

    def _params(self, s, t):
        u = self.u.eval_batch(np.column_stack([s, t]))
        return np.clip(u, 0.0, 1.0)

    def values(self, s, t):
        u = self._params(s, t)
        idx = self.path.segment_index(u)
        pts = np.empty((len(u), self.atlas.dim))
        charts = [None] * len(u)
        for k, seg in enumerate(self.path.segments):
            mask = idx == k
            if mask.any():
                pts[mask] = seg.values(u[mask])
                for i in np.flatnonzero(mask):
                    charts[i] = seg.chart
        return charts, pts

    def jacobian(self, s, t):
        st = np.column_stack([s, t])
        u = self._params(s, t)
        idx = self.path.segment_index(u)
        vel = np.empty((len(u), self.atlas.dim))
        for k, seg in enumerate(self.path.segments):
            mask = idx == k
            if mask.any():
                vel[mask] = seg.velocities(u[mask])
        grad = np.stack([g.eval_batch(st) for g in self.u.gradient], axis=-1)
        return vel[:, :, None] * grad[:, None, :]


def reparameterization_homotopy(path: Path, phi: ExprFn) -> ReparameterizationHomotopy:
    """Thin homotopy from ``path o phi`` to ``path``.

    Uses u(s, t) = (1 - beta(t)) phi(s) + beta(t) s, which is constant in t
    near t = 0 and t = 1.
    """
    src = f"(1 - beta(x1)) * ({phi.source}) + beta(x1) * x0"
    u = parse_expr(src, 2)
    collar = min(DEFAULT_SITTING, reparameterize(path, phi).sitting, path.sitting)
    return ReparameterizationHomotopy(path, u, collar=collar / 2)


def associator(gamma: Path, tau: Path, rho: Path) -> ReparameterizationHomotopy:
    """Thin homotopy from concat(gamma, concat(tau, rho)) to concat(concat(gamma, tau), rho)."""
    left = concat(concat(gamma, tau), rho)
    right = concat(gamma, concat(tau, rho))
    eps = min(gamma.sitting, tau.sitting, rho.sitting)
    d = eps / 16
    w1 = f"beta((x0 - {0.25 - d!r}) / {2 * d!r})"
    w2 = f"beta((x0 - {0.5 - d!r}) / {2 * d!r})"
    psi = f"(2 * x0 + {w1} * (0.25 - x0) + {w2} * (0.25 - x0 / 2))"
    u = parse_expr(f"(1 - beta(x1)) * {psi} + beta(x1) * x0", 2)
    return ReparameterizationHomotopy(left, u, collar=eps / 8, gamma0=right, gamma1=left)


def _edge_distance(H: Homotopy, path: Path, t: float, samples: int) -> float:
    s = np.linspace(0.0, 1.0, samples)
    charts, pts = H.values(s, np.full(samples, t))
    worst = 0.0
    for si, c, x in zip(s, charts, pts):
        cp, xp = path.locate(si)
        if cp != c:
            x = H.atlas.change_chart(x, c, cp)
        worst = max(worst, float(np.linalg.norm(x - xp)))
    return worst


def check_homotopy(H: Homotopy, samples: int = CHECK_SAMPLES, tol: float = CONTINUITY_TOL):
    """Raise BoundaryMismatch unless H has the boundary and collar behaviour of a homotopy."""
    for name, path, t in (("gamma0", H.gamma0, 0.0), ("gamma1", H.gamma1, 1.0)):
        err = _edge_distance(H, path, t, samples)
        if err > tol:
            raise BoundaryMismatch(f"H(., {t:g}) differs from {name} by {err:.3g}")
    ts = np.linspace(0.0, 1.0, samples)
    for s, label in ((0.0, "start"), (1.0, "end")):
        charts, pts = H.values(np.full(samples, s), ts)
        ref_chart, ref = charts[0], pts[0]
        for c, x in zip(charts, pts):
            if c != ref_chart:
                x = H.atlas.change_chart(x, c, ref_chart)
            if np.linalg.norm(x - ref) > tol:
                raise BoundaryMismatch(f"homotopy moves the {label} point")
    c = H.collar
    grid = np.linspace(0.0, c, SIT_SAMPLES)
    near = np.concatenate([grid, 1.0 - grid])
    ss, tt = np.meshgrid(near, np.linspace(0.0, 1.0, SIT_SAMPLES))
    jac = H.jacobian(ss.ravel(), tt.ravel())
    ds = float(np.max(np.abs(jac[:, :, 0])))
    jac = H.jacobian(tt.ravel(), ss.ravel())
    dt = float(np.max(np.abs(jac[:, :, 1])))
    if max(ds, dt) > tol:
        raise BoundaryMismatch(f"homotopy does not sit on its collars (|dH| = {max(ds, dt):.3g})")


@dataclass(frozen=True)
class Certificate:
    grid: int
    tol: float
    max_sigma2: float
    max_dh: float

    thin = True

    def as_dict(self):
        return {"result": "certificate", "grid": self.grid, "tol": self.tol,
                "max_sigma2": self.max_sigma2, "max_dH": self.max_dh}


@dataclass(frozen=True)
class Refusal:
    grid: int
    tol: float
    worst_point: tuple
    sigma2: float
    max_dh: float

    thin = False

    def as_dict(self):
        return {"result": "refusal", "grid": self.grid, "tol": self.tol,
                "worst_point": list(self.worst_point), "sigma2": self.sigma2,
                "max_dH": self.max_dh}


def certify_thin(H: Homotopy, grid: int = 64, tol: Optional[float] = None,
                 check: bool = True) -> Union[Certificate, Refusal]:
    """Second singular value of dH on a grid x grid lattice of [0,1]^2.

    The default tolerance is 1e-8 * (1 + max ||dH||).  A certificate only
    says the rank bound held at the lattice points.
    """
    if check:
        check_homotopy(H)
    axis = np.linspace(0.0, 1.0, grid)
    ss, tt = np.meshgrid(axis, axis, indexing="ij")
    s, t = ss.ravel(), tt.ravel()
    jac = H.jacobian(s, t)
    max_dh = float(np.max(np.linalg.norm(jac, axis=(1, 2))))
    if tol is None:
        tol = 1e-8 * (1.0 + max_dh)
    if jac.shape[1] < 2:
        sigma2 = np.zeros(len(s))
    else:
        sigma2 = np.linalg.svd(jac, compute_uv=False)[:, 1]
    k = int(np.argmax(sigma2))
    if sigma2[k] <= tol:
        return Certificate(grid, float(tol), float(sigma2[k]), max_dh)
    return Refusal(grid, float(tol), (float(s[k]), float(t[k])), float(sigma2[k]), max_dh)


@dataclass(frozen=True, eq=False)
class ThinClass:
    """A thin homotopy class, held through a chosen representative."""

    representative: Path


def class_of(gamma: Path) -> ThinClass:
    return ThinClass(gamma)


def witness_equal(c1: ThinClass, c2: ThinClass, H: Homotopy, grid: int = 64,
                  tol: Optional[float] = None) -> bool:
    """True iff H joins the two representatives and is certified thin."""
    for name, path, rep in (("gamma0", H.gamma0, c1.representative),
                            ("gamma1", H.gamma1, c2.representative)):
        err = path_distance(path, rep)
        if err > CONTINUITY_TOL:
            raise BoundaryMismatch(f"{name} of the witness differs from the representative by {err:.3g}")
    return isinstance(certify_thin(H, grid, tol), Certificate)


def random_straight_paths(atlas: Atlas, count: int, rng, scale: float = 0.8) -> list:
    """Straight segments with endpoints drawn uniformly from the inner part of random charts."""
    out = []
    for _ in range(count):
        c = atlas.charts[int(rng.integers(len(atlas.charts)))]
        lo, hi = np.array(c.lower), np.array(c.upper)
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        x, y = mid + scale * half * rng.uniform(-1, 1, size=(2, atlas.dim))
        out.append(straight_line(atlas, c.name, x, y))
    return out
