"""Cocycle categories over the cover groupoid of a finite atlas.

The cover groupoid has the charts as objects and the oriented overlaps as
arrows, with face maps ``d0(a -> b) = b`` and ``d1(a -> b) = a``.  A
composable triple of overlaps (a -> b, b -> c, a -> c) has faces
``d0 = (b, c)``, ``d1 = (a, c)`` and ``d2 = (a, b)``, and the cocycle law
``d2* phi . d0* phi = d1* phi`` reads ``phi_ab phi_bc = phi_ac``.

Objects come in two flavours:

* connection objects: :class:`~thintransport.geometry.ConnectionData`;
* transport objects (:class:`TransCocycleObject`): one transport oracle per
  chart plus ``phi`` on overlaps, natural in the sense
  ``T_b(tau o gamma) = phi(y)^-1 T_a(gamma) phi(x)``.

A morphism (chart-wise ``alpha``) between transport objects satisfies
``phi'_ab(x) = alpha_a(x) phi_ab(x) alpha_b(y)^-1`` and
``T'_a(gamma) = alpha_a(end) T_a(gamma) alpha_a(start)^-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import liegroup
from .exprdsl import ExprFn, compose, parse_expr
from .exprdsl.calculus import call, num
from .geometry import Atlas, ConnectionData, Overlap, cocycle_residuals, triple_samples
from .liegroup import GroupElement, LieGroupSpec
from .pathalg import Path, Segment, straight_line
from .reconstruct import TransportOracle, tp

COCYCLE_TOL = 1e-7
EQUIVALENCE_TOL = 1e-6
HOMOMORPHISM_TOL = 1e-9
DEFAULT_SAMPLES = 64


class ShapeMismatch(ValueError):
    pass


class NotAHomomorphism(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CoverGroupoid:
    atlas: Atlas

    @property
    def objects(self) -> list:
        return self.atlas.chart_names

    @property
    def arrows(self) -> tuple:
        return self.atlas.arrows

    @staticmethod
    def d0(arrow: Overlap) -> str:
        return arrow.target

    @staticmethod
    def d1(arrow: Overlap) -> str:
        return arrow.source

    @staticmethod
    def faces(a1: Overlap, a2: Overlap, a3: Overlap) -> dict:
        """Faces of the composable triple (a1: a->b, a2: b->c, a3: a->c)."""
        return {"d0": a2, "d1": a3, "d2": a1}

    def triples(self, samples: int = DEFAULT_SAMPLES):
        return triple_samples(self.atlas, samples)

    def simplicial_residual(self, samples: int = DEFAULT_SAMPLES) -> float:
        """max |a2(a1(x)) - a3(x)| over sampled triple overlaps."""
        ident = lambda arrow, pts: np.broadcast_to(np.eye(1), (len(pts), 1, 1))
        return cocycle_residuals(self.atlas, samples, ident)[3]


PhiFn = Callable[[Overlap, np.ndarray], np.ndarray]


@dataclass(eq=False)
class TransCocycleObject:
    """Chart-wise transport oracles glued by ``phi`` on overlaps."""

    atlas: Atlas
    group: LieGroupSpec
    oracles: dict
    phi: PhiFn

    def phi_at(self, arrow: Overlap, x) -> GroupElement:
        return GroupElement(self.group, self.phi(arrow, np.atleast_2d(x))[0])

    def chart_atlas(self, chart: str) -> Atlas:
        return self.oracles[chart].atlas


ConnCocycleObject = ConnectionData


@dataclass
class CocycleReport:
    cocycle_residual: float
    location: Optional[dict]
    triple_count: int
    inverse_residual: float
    simplicial_residual: float
    naturality_residual: Optional[float] = None
    naturality_location: Optional[dict] = None

    @property
    def vacuous(self) -> bool:
        return self.triple_count == 0

    @property
    def worst(self) -> float:
        return max(self.cocycle_residual, self.inverse_residual, self.naturality_residual or 0.0)

    def passes(self, tol: float = COCYCLE_TOL) -> bool:
        return self.worst <= tol

    def as_dict(self):
        return {
            "cocycle_residual": self.cocycle_residual,
            "location": self.location,
            "triple_count": self.triple_count,
            "triple_law_vacuous": self.vacuous,
            "inverse_residual": self.inverse_residual,
            "simplicial_residual": self.simplicial_residual,
            "naturality_residual": self.naturality_residual,
            "naturality_location": self.naturality_location,
        }


def _same_group(a: LieGroupSpec, b: LieGroupSpec) -> bool:
    # U1 and SO2 share a realization
    return a.kind == b.kind and a.dim_matrix == b.dim_matrix


def _conn_phi(conn: ConnectionData) -> PhiFn:
    return lambda arrow, pts: conn.transition_matrices(arrow, pts)


def _inverse_residual(atlas: Atlas, phi: PhiFn, samples: int) -> float:
    """max |phi_ab(x) phi_ba(y) - I| on declared overlaps (degenerate triples)."""
    worst = 0.0
    arrows = atlas.arrows
    for ov in atlas.overlaps:
        back = [a for a in arrows if a.source == ov.target and a.target == ov.source]
        pts = atlas.sample_region(ov, samples)
        if len(pts) == 0:
            continue
        ys = ov.forward.eval_batch(pts)
        g = phi(ov, pts)
        for b in back:
            mask = atlas.overlap_mask(b, ys)
            if not mask.any():
                continue
            back_pts = b.forward.eval_batch(ys[mask])
            if np.max(np.abs(back_pts - pts[mask])) > 1e-9:
                continue
            prod = g[mask] @ phi(b, ys[mask])
            eye = np.eye(prod.shape[-1])
            worst = max(worst, float(np.max(np.linalg.norm(prod - eye, axis=(1, 2)))))
    return worst


def overlap_test_paths(atlas: Atlas, arrow: Overlap, count: int, rng, scale: float = 0.05):
    """Short straight segments (source coordinates) lying inside an overlap."""
    chart = atlas.chart(arrow.source)
    width = np.array(chart.upper) - np.array(chart.lower)
    pts = atlas.sample_region(arrow, 4 * count)
    out = []
    ts = np.linspace(0.0, 1.0, 16)[:, None]
    for x in pts:
        y = x + scale * width * rng.uniform(-1, 1, atlas.dim)
        line = x + ts * (y - x)
        if atlas.overlap_mask(arrow, line).all():
            out.append((x, y))
        if len(out) == count:
            break
    return out


def _naturality(obj: TransCocycleObject, samples: int, count: int, seed: int):
    """max dist(T_b(tau o gamma), phi(y)^-1 T_a(gamma) phi(x)) over sampled overlap paths."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, None
    for arrow in obj.atlas.overlaps:
        for x, y in overlap_test_paths(obj.atlas, arrow, count, rng):
            a, b = arrow.source, arrow.target
            gamma = straight_line(obj.chart_atlas(a), a, x, y)
            seg = gamma.segments[0]
            image = Path(obj.chart_atlas(b),
                         (Segment(b, compose(arrow.forward, seg.map, 1), 0.0, 1.0),), gamma.sitting)
            ta = obj.oracles[a](gamma)
            tb = obj.oracles[b](image)
            expected = obj.phi_at(arrow, y).inverse().matrix @ ta.matrix @ obj.phi_at(arrow, x).matrix
            r = float(np.linalg.norm(tb.matrix - expected))
            if where is None or r > worst:
                worst, where = r, {"overlap": arrow.id, "from": x.tolist(), "to": y.tolist()}
    return worst, where


def check_cocycle(obj: Union[ConnectionData, TransCocycleObject], samples: int = DEFAULT_SAMPLES,
                  paths: int = 4, seed: int = 0) -> CocycleReport:
    """Residuals of the cocycle law (and naturality for transport objects)."""
    phi = _conn_phi(obj) if isinstance(obj, ConnectionData) else obj.phi
    atlas = obj.atlas
    worst, where, count, simplicial = cocycle_residuals(atlas, samples, phi)
    inv = _inverse_residual(atlas, phi, samples)
    report = CocycleReport(worst, where, count, inv, simplicial)
    if isinstance(obj, TransCocycleObject):
        report.naturality_residual, report.naturality_location = _naturality(obj, samples, paths, seed)
    return report


def hol_gamma(conn: ConnectionData, steps: int = 256) -> TransCocycleObject:
    """Chart-wise transport oracles, glued by the transition functions."""
    oracles = {c: tp(conn.restrict(c), steps) for c in conn.atlas.chart_names}
    return TransCocycleObject(conn.atlas, conn.group, oracles, _conn_phi(conn))


# ---- homomorphisms and induced functors -------------------------------------------

@dataclass(frozen=True, eq=False)
class GroupHomomorphism:
    """rho: G -> G' as DSL maps of the matrix entries (row-major inputs x0..)."""

    source: LieGroupSpec
    target: LieGroupSpec
    map: ExprFn
    differential: ExprFn
    name: str = "rho"

    def __post_init__(self):
        n, m = self.source.dim_matrix, self.target.dim_matrix
        if self.source.is_complex or self.target.is_complex:
            raise NotImplementedError("homomorphisms are supported between real matrix groups")
        for f in (self.map, self.differential):
            if f.arity != n * n or f.shape != (m, m):
                raise ShapeMismatch(f"{self.name}: expected a {m}x{m} function of {n * n} entries")

    def apply(self, mats: np.ndarray) -> np.ndarray:
        mats = np.asarray(mats)
        return self.map.eval_batch(np.real(mats).reshape(len(mats), -1))

    def apply_algebra(self, mats: np.ndarray) -> np.ndarray:
        mats = np.asarray(mats)
        return self.differential.eval_batch(np.real(mats).reshape(len(mats), -1))

    def _entries(self, fn: ExprFn) -> list:
        n = self.source.dim_matrix
        return [call("entry", fn.node, num(i), num(j)) for i in range(n) for j in range(n)]

    def apply_expr(self, fn: ExprFn) -> ExprFn:
        return compose(self.map, self._entries(fn), fn.arity)

    def apply_algebra_expr(self, fn: ExprFn) -> ExprFn:
        return compose(self.differential, self._entries(fn), fn.arity)

    def verify(self, samples: int = 16, seed: int = 0, tol: float = HOMOMORPHISM_TOL):
        """Raise NotAHomomorphism unless products, identity and the differential are respected."""
        rng = np.random.default_rng(seed)
        spec = self.source
        a = np.array([liegroup.random_element(spec, rng).matrix for _ in range(samples)])
        b = np.array([liegroup.random_element(spec, rng).matrix for _ in range(samples)])
        worst = float(np.max(np.linalg.norm(self.apply(a @ b) - self.apply(a) @ self.apply(b), axis=(1, 2))))
        ident = self.apply(np.eye(spec.dim_matrix)[None])[0]
        worst = max(worst, float(np.linalg.norm(ident - np.eye(self.target.dim_matrix))))
        if worst > tol:
            raise NotAHomomorphism(f"{self.name} fails to be multiplicative (residual {worst:.3g})")
        x = np.array([liegroup.random_algebra(spec, rng).matrix for _ in range(samples)])
        t = 1e-5
        fd = (self.apply(liegroup.exp_matrices(spec, t * x))
              - self.apply(liegroup.exp_matrices(spec, -t * x))) / (2 * t)
        dres = float(np.max(np.linalg.norm(fd - self.apply_algebra(x), axis=(1, 2))))
        if dres > 1e-6 * (1 + float(np.max(np.abs(fd)))):
            raise NotAHomomorphism(f"{self.name}: differential disagrees with the map ({dres:.3g})")
        return worst


def _hom(src, tgt, fmap, fdiff, name):
    s, t = liegroup.group(src), liegroup.group(tgt)
    n, m = s.dim_matrix, t.dim_matrix
    return GroupHomomorphism(s, t, parse_expr(fmap, n * n, (m, m)), parse_expr(fdiff, n * n, (m, m)), name)


def so2_to_so3() -> GroupHomomorphism:
    """Rotations of the plane as rotations about the third axis."""
    return _hom("SO2", "SO3", "[[x0, x1, 0], [x2, x3, 0], [0, 0, 1]]",
                "[[x0, x1, 0], [x2, x3, 0], [0, 0, 0]]", "SO2->SO3")


def u1_to_gl2() -> GroupHomomorphism:
    return _hom("U1", "GL2", "[[x0, x1], [x2, x3]]", "[[x0, x1], [x2, x3]]", "U1->GL2")


def det_rotation() -> GroupHomomorphism:
    """GL2+ -> U1, g -> R(log det g); its differential is X -> tr(X) e."""
    t = "log(x0*x3 - x1*x2)"
    return _hom("GL2", "U1", f"[[cos({t}), -sin({t})], [sin({t}), cos({t})]]",
                "[[0, -(x0 + x3)], [x0 + x3, 0]]", "det")


def identity_hom(spec: LieGroupSpec) -> GroupHomomorphism:
    n = spec.dim_matrix
    entries = [[f"x{i * n + j}" for j in range(n)] for i in range(n)]
    src = "[" + ", ".join("[" + ", ".join(r) + "]" for r in entries) + "]"
    return GroupHomomorphism(spec, spec, parse_expr(src, n * n, (n, n)),
                             parse_expr(src, n * n, (n, n)), "id")


HOMOMORPHISMS = {"SO2->SO3": so2_to_so3, "U1->GL2": u1_to_gl2, "det": det_rotation}


def induced_functor(rho: GroupHomomorphism, obj, verify: bool = True):
    """Apply rho chart-wise and overlap-wise (d_i^* rho(x) = rho(d_i^* x))."""
    if verify:
        rho.verify()
    if isinstance(obj, ConnectionData):
        if not _same_group(obj.group, rho.source):
            raise ShapeMismatch(f"object has group {obj.group.name}, rho starts at {rho.source.name}")
        forms = {c: tuple(rho.apply_algebra_expr(a) for a in comps) for c, comps in obj.forms.items()}
        trans = {k: rho.apply_expr(g) for k, g in obj.transitions.items()}
        return ConnectionData(obj.atlas, rho.target, forms, trans)
    if not _same_group(obj.group, rho.source):
        raise ShapeMismatch(f"object has group {obj.group.name}, rho starts at {rho.source.name}")
    oracles = {}
    for c, orc in obj.oracles.items():
        oracles[c] = TransportOracle(orc.atlas, rho.target,
                                     _mapped_query(rho, orc), f"{rho.name}({orc.label})")
    phi = obj.phi
    return TransCocycleObject(obj.atlas, rho.target, oracles,
                              lambda arrow, pts: rho.apply(phi(arrow, pts)))


def _mapped_query(rho, orc):
    return lambda p: GroupElement(rho.target, rho.apply(orc(p).matrix[None])[0])


# ---- morphisms ----------------------------------------------------------------------

@dataclass(eq=False)
class CocycleMorphism:
    """Chart-wise group-valued functions alpha_a (ExprFns in chart coordinates)."""

    gauges: dict = field(default_factory=dict)

    def at(self, spec: LieGroupSpec, chart: str, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        h = self.gauges.get(chart)
        if h is None:
            return np.broadcast_to(np.eye(spec.dim_matrix, dtype=spec.dtype), (len(pts),) + (spec.dim_matrix,) * 2)
        return np.asarray(h.eval_batch(pts), dtype=spec.dtype)


@dataclass
class EquivalenceResult:
    equivalent: bool
    residual: float
    square_residual: float
    naturality_residual: float

    def __bool__(self):
        return self.equivalent

    def as_dict(self):
        return {"equivalent": self.equivalent, "residual": self.residual,
                "square_residual": self.square_residual,
                "naturality_residual": self.naturality_residual}


def equivalent_objects(a: TransCocycleObject, b: TransCocycleObject, candidate: CocycleMorphism,
                       samples: int = 32, paths: int = 4, seed: int = 0,
                       tol: float = EQUIVALENCE_TOL) -> EquivalenceResult:
    """Check that ``candidate`` is a morphism a -> b of transport cocycle objects."""
    if not _same_group(a.group, b.group):
        raise ShapeMismatch(f"groups differ: {a.group.name} vs {b.group.name}")
    if a.atlas.chart_names != b.atlas.chart_names or a.atlas.dim != b.atlas.dim:
        raise ShapeMismatch("objects live over different covers")
    spec = a.group
    square = 0.0
    for ov in a.atlas.overlaps:
        pts = a.atlas.sample_region(ov, samples)
        if len(pts) == 0:
            continue
        ys = ov.forward.eval_batch(pts)
        ha = candidate.at(spec, ov.source, pts)
        hb = candidate.at(spec, ov.target, ys)
        expected = ha @ a.phi(ov, pts) @ np.linalg.inv(hb)
        square = max(square, float(np.max(np.linalg.norm(b.phi(ov, pts) - expected, axis=(1, 2)))))
    rng = np.random.default_rng(seed)
    nat = 0.0
    for chart in a.atlas.chart_names:
        c = a.atlas.chart(chart)
        lo, hi = np.array(c.lower), np.array(c.upper)
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        for _ in range(paths):
            x, y = mid + 0.8 * half * rng.uniform(-1, 1, (2, a.atlas.dim))
            ta = a.oracles[chart](straight_line(a.chart_atlas(chart), chart, x, y)).matrix
            tb = b.oracles[chart](straight_line(b.chart_atlas(chart), chart, x, y)).matrix
            hx = candidate.at(spec, chart, x)[0]
            hy = candidate.at(spec, chart, y)[0]
            nat = max(nat, float(np.linalg.norm(tb - hy @ ta @ np.linalg.inv(hx))))
    residual = max(square, nat)
    return EquivalenceResult(residual <= tol, residual, square, nat)


def cocycle_to_dict(obj: TransCocycleObject, samples: int = 16) -> dict:
    """Atlas block (geometry schema) plus a sampled phi table per overlap."""
    from .config import SCHEMA_VERSION, atlas_to_dict
    table = {}
    for ov in obj.atlas.overlaps:
        pts = obj.atlas.sample_region(ov, samples)
        mats = obj.phi(ov, pts) if len(pts) else np.zeros((0,))
        table[ov.id] = {"points": pts.tolist(), "matrices": np.real(mats).tolist()}
    return {"schema_version": SCHEMA_VERSION, "atlas": atlas_to_dict(obj.atlas),
            "group": obj.group.name, "phi": table}
