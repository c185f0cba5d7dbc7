"""Recovering connections and transition data from transport alone.

A :class:`TransportOracle` answers path queries with group elements and is
treated as a black box.  From it we rebuild

* the local connection form, by a central difference of transports along
  short straight lines:  ``A(v) = -(log T(sigma(x, x+hv)) - log T(sigma(x, x-hv))) / 2h``;
* Cech transition data, by transporting around loops
  ``basepoint -> anchor_b -> x -> anchor_a -> basepoint``.

With access curves ``c_a(x) = concat(sigma_a(anchor_a, x), p_a)`` the
extracted cocycle is ``e_ab(x) = oracle(concat(reverse(c_a), c_b))``, which
for an oracle backed by a genuine connection equals
``T(c_a)^-1 g_ab(x) T(c_b)``: cohomologous to the true transitions via
``h_a(x) = T(c_a(x))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import liegroup
from .exprdsl import ExprFn, parse_expr
from .geometry import Atlas, ConnectionData, OutOfChart, halton
from .liegroup import AlgebraElement, GroupElement
from .pathalg import Path, Segment, concat, constant_path, reverse, straight_line, upsilon
from .transport import transport

ORACLE_STEPS = 128
DEFAULT_HS = (1e-2, 5e-3, 2.5e-3)
NOISE_FLOOR = 1e-11
FUNCTORIALITY_TOL = 1e-7


class MissingAccessPath(KeyError):
    pass


@dataclass(eq=False)
class TransportOracle:
    atlas: Atlas
    group: liegroup.LieGroupSpec
    query: Callable[[Path], GroupElement]
    label: str = "oracle"

    def __call__(self, path: Path) -> GroupElement:
        return self.query(path)


def tp(conn: ConnectionData, steps: int = ORACLE_STEPS) -> TransportOracle:
    """The transport oracle of a connection."""
    return TransportOracle(conn.atlas, conn.group,
                           lambda p: transport(conn, p, steps).element, "tp")


def perturbed_oracle(oracle: TransportOracle, generator: np.ndarray,
                     strength: float = 0.05) -> TransportOracle:
    """A non-functorial fake: right-multiplies by exp(strength * #segments * X)."""
    spec = oracle.group

    def query(p: Path) -> GroupElement:
        twist = liegroup.exp_matrices(spec, strength * len(p.segments) * np.asarray(generator))
        return GroupElement(spec, oracle(p).matrix @ twist)

    return TransportOracle(oracle.atlas, spec, query, "perturbed")


def functoriality_residual(oracle: TransportOracle, pairs) -> float:
    """max dist(oracle(concat(g, t)), oracle(g) oracle(t)) and constant-path defects."""
    worst = 0.0
    for g, t in pairs:
        lhs = oracle(concat(g, t))
        rhs = liegroup.mul(oracle(g), oracle(t))
        worst = max(worst, liegroup.dist(lhs, rhs))
        const = constant_path(oracle.atlas, t.start_chart, t.start)
        worst = max(worst, liegroup.dist(oracle(const), oracle.group.identity()))
    return worst


def spot_check_pairs(atlas: Atlas, chart: str, count: int, rng, scale: float = 0.5):
    """Composable straight-line pairs inside one chart."""
    c = atlas.chart(chart)
    lo, hi = np.array(c.lower), np.array(c.upper)
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    pairs = []
    for _ in range(count):
        pts = mid + half * scale * rng.uniform(-1, 1, size=(3, atlas.dim))
        tau = straight_line(atlas, chart, pts[0], pts[1])
        gamma = straight_line(atlas, chart, pts[1], pts[2])
        pairs.append((gamma, tau))
    return pairs


def section_family(oracle: TransportOracle, chart: str, z: GroupElement, basepoint, y) -> GroupElement:
    """F(y, z) = oracle(sigma(basepoint, y)) z."""
    path = straight_line(oracle.atlas, chart, basepoint, y)
    return liegroup.mul(oracle(path), z)


@dataclass(eq=False)
class ReconstructedConnection:
    oracle: TransportOracle
    chart: str
    h: float

    def __post_init__(self):
        if not 1e-6 < self.h < 1e-1:
            raise ValueError(f"h must lie in (1e-6, 1e-1), got {self.h}")

    def sampler(self, point, direction) -> AlgebraElement:
        return AlgebraElement(self.oracle.group, self.value(point, direction, self.h))

    __call__ = sampler

    def value(self, point, direction, h: float) -> np.ndarray:
        spec = self.oracle.group
        x = np.asarray(point, dtype=float)
        v = np.asarray(direction, dtype=float)
        ident = spec.identity()
        fwd = section_family(self.oracle, self.chart, ident, x, x + h * v)
        bwd = section_family(self.oracle, self.chart, ident, x, x - h * v)
        lf = liegroup.log_matrix(spec, fwd.matrix)
        lb = liegroup.log_matrix(spec, bwd.matrix)
        return -(lf - lb) / (2 * h)

    def matrices(self, point) -> np.ndarray:
        """Reconstructed coefficients A_i, shape (dim, n, n)."""
        d = self.oracle.atlas.dim
        return np.array([self.value(point, e, self.h) for e in np.eye(d)])


def reconstruct_connection(oracle: TransportOracle, chart: str, h: float = 1e-3) -> ReconstructedConnection:
    oracle.atlas.chart(chart)
    return ReconstructedConnection(oracle, chart, h)


def _sample_pairs(conn: ConnectionData, chart: str, samples: int, margin: float, rng):
    c = conn.atlas.chart(chart)
    lo = np.array(c.lower) + margin
    hi = np.array(c.upper) - margin
    pts = halton(lo, hi, samples)
    dirs = rng.standard_normal((samples, conn.atlas.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return pts, dirs


@dataclass
class RoundtripReport:
    h: float
    charts: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max((c["max_error"] for c in self.charts.values()), default=0.0)

    def ratios(self, chart: str) -> list:
        return self.charts[chart]["richardson_ratios"]

    def as_dict(self):
        return {"h": self.h, "max_error": self.max_error, "charts": self.charts}


def roundtrip_check(conn: ConnectionData, h: float = 1e-3, samples: int = 100,
                    hs=DEFAULT_HS, seed: int = 0, steps: int = ORACLE_STEPS,
                    oracle: Optional[TransportOracle] = None) -> RoundtripReport:
    """tp followed by reconstruction, compared with the true local forms.

    For each chart: the worst error at ``h`` over (point, direction) samples and
    a refinement table over ``hs`` with ratios error(h/2) / error(h).  Ratios
    are reported as None when both errors sit at the round-off floor (the
    difference quotient is then exact, e.g. for constant forms).
    """
    oracle = oracle or tp(conn, steps)
    rng = np.random.default_rng(seed)
    report = RoundtripReport(h)
    margin = 2 * max(max(hs), h)
    for chart in conn.atlas.chart_names:
        pts, dirs = _sample_pairs(conn, chart, samples, margin, rng)
        true = conn.contract(chart, pts, dirs)
        rec = ReconstructedConnection(oracle, chart, h)
        scale = 1.0 + float(np.max(np.linalg.norm(true, axis=(1, 2))))

        def worst(step):
            errs = [np.linalg.norm(rec.value(p, v, step) - a) for p, v, a in zip(pts, dirs, true)]
            return float(max(errs))

        table = [{"h": float(s), "max_error": worst(s)} for s in hs]
        ratios = []
        for a, b in zip(table, table[1:]):
            if a["max_error"] <= NOISE_FLOOR * scale:
                ratios.append(None)
            else:
                ratios.append(b["max_error"] / a["max_error"])
        err_h = worst(h)
        floor = all(row["max_error"] <= NOISE_FLOOR * scale for row in table)
        report.charts[chart] = {
            "samples": int(len(pts)),
            "max_error": err_h,
            "table": table,
            "richardson_ratios": ratios,
            "exact": floor,
        }
    return report


# ---- loops shrinking to a point ---------------------------------------------------

def loop_family(atlas: Atlas, chart: str, center, radius: float = 0.5):
    """s -> loop through ``center`` of radius s * radius (a circle in x0, x1)."""
    c = [float(v) for v in center]

    def make(s: float) -> Path:
        r = float(s * radius)
        items = [f"{c[0]!r} + {r!r} * (cos(2*pi*beta(x0)) - 1)",
                 f"{c[1]!r} + {r!r} * sin(2*pi*beta(x0))"]
        items += [f"{v!r}" for v in c[2:]]
        fn = parse_expr("[" + ", ".join(items) + "]", 1, (atlas.dim,))
        return Path(atlas, (Segment(chart, fn, 0.0, 1.0),))

    return make


def derivative_at_zero(oracle: TransportOracle, family, h: float = 1e-4) -> np.ndarray:
    """Central difference d/ds|_0 of s -> oracle(family(s))."""
    return (oracle(family(h)).matrix - oracle(family(-h)).matrix) / (2 * h)


def shrinking_loop_derivative(oracle: TransportOracle, family, h: float = 1e-4) -> float:
    return float(np.linalg.norm(derivative_at_zero(oracle, family, h)))


def upsilon_sigma_pair(atlas: Atlas, chart: str, germ: ExprFn):
    """Two families with equal endpoints: Upsilon(s) and sigma(germ(0), germ(s))."""
    ups = upsilon(atlas, chart, germ)
    x0 = germ((0.0,))

    def sigma(s):
        return straight_line(atlas, chart, x0, germ((s,)))

    return ups, sigma


# ---- cocycle extraction ------------------------------------------------------------

@dataclass(eq=False)
class ExtractedCocycle:
    oracle: TransportOracle
    atlas: Atlas
    basepoint: tuple
    access_paths: dict

    def __post_init__(self):
        for name in self.atlas.chart_names:
            p = self.access_paths.get(name)
            if p is None:
                raise MissingAccessPath(f"no access path for chart {name}")
            if p.end_chart != name:
                raise MissingAccessPath(f"access path for {name} ends in chart {p.end_chart}")
            chart, point = self.basepoint
            start = self.atlas.change_chart(p.start, p.start_chart, chart)
            if np.linalg.norm(start - np.asarray(point)) > 1e-9:
                raise MissingAccessPath(f"access path for {name} does not start at the basepoint")

    def anchor(self, chart: str) -> np.ndarray:
        return self.access_paths[chart].end

    def access_curve(self, chart: str, x) -> Path:
        """basepoint -> anchor -> x (the last leg straight inside ``chart``)."""
        leg = straight_line(self.atlas, chart, self.anchor(chart), x)
        return concat(leg, self.access_paths[chart])

    def value(self, a: str, b: str, x_a) -> GroupElement:
        """e_ab at the point with coordinates x_a in chart a."""
        x_a = np.asarray(x_a, dtype=float)
        x_b = self.atlas.change_chart(x_a, a, b)
        loop = concat(reverse(self.access_curve(a, x_a)), self.access_curve(b, x_b))
        return self.oracle(loop)

    def gauge(self, chart: str, x) -> GroupElement:
        """h_a(x) = oracle(c_a(x)), the coboundary relating e to the true cocycle."""
        return self.oracle(self.access_curve(chart, x))

    def sample_table(self, samples: int = 64) -> list:
        rows = []
        for ov in self.atlas.overlaps:
            for x in self.atlas.sample_region(ov, samples):
                e = self.value(ov.source, ov.target, x)
                rows.append({"overlap": ov.id, "point": x.tolist(), "matrix": e.matrix.tolist()})
        return rows

    def charts_at(self, chart: str, x) -> dict:
        """Coordinates of the point in every chart that contains it."""
        out = {chart: np.asarray(x, dtype=float)}
        for ov in self.atlas.arrows:
            if ov.source == chart and ov.target not in out and self.atlas.overlap_mask(ov, x)[0]:
                out[ov.target] = ov.forward(x)
        return out

    def cocycle_residual(self, samples: int = 16) -> tuple:
        """Worst ||e_ij e_jk - e_ik|| over all ordered chart triples (repeats allowed)."""
        worst, where = 0.0, None
        for ov in self.atlas.overlaps:
            for x in self.atlas.sample_region(ov, samples):
                coords = self.charts_at(ov.source, x)
                names = sorted(coords)
                cache = {}

                def e(i, j):
                    if (i, j) not in cache:
                        cache[(i, j)] = self.value(i, j, coords[i]).matrix
                    return cache[(i, j)]

                for i in names:
                    for j in names:
                        for k in names:
                            r = float(np.linalg.norm(e(i, j) @ e(j, k) - e(i, k)))
                            if where is None or r > worst:
                                worst = r
                                where = {"charts": [i, j, k], "point": x.tolist(),
                                         "chart": ov.source}
        return worst, where

    def compare(self, conn: ConnectionData, samples: int = 64) -> float:
        """max || h_a^-1 g_ab h_b - e_ab || over declared overlap samples."""
        worst = 0.0
        for ov in self.atlas.overlaps:
            for x in self.atlas.sample_region(ov, samples):
                y = ov.forward(x)
                g = conn.transition(ov.source, ov.target, x)
                ha = self.gauge(ov.source, x)
                hb = self.gauge(ov.target, y)
                expected = ha.inverse().matrix @ g.matrix @ hb.matrix
                worst = max(worst, float(np.linalg.norm(expected - self.value(ov.source, ov.target, x).matrix)))
        return worst


def extract_cocycle(oracle: TransportOracle, atlas: Atlas, basepoint: tuple,
                    access_paths: dict) -> ExtractedCocycle:
    """Transition data seen by an oracle, anchored at ``basepoint``."""
    chart, point = basepoint
    if not atlas.chart(chart).contains(np.asarray(point))[0]:
        raise OutOfChart(f"basepoint {list(point)} is outside chart {chart}")
    return ExtractedCocycle(oracle, atlas, (chart, np.asarray(point, dtype=float)), dict(access_paths))


@dataclass
class ExtractionReport:
    cocycle_residual: float
    location: Optional[dict]
    functoriality_residual: float
    flagged: bool
    comparison: Optional[float] = None

    def as_dict(self):
        return {"cocycle_residual": self.cocycle_residual, "location": self.location,
                "functoriality_residual": self.functoriality_residual,
                "flagged": self.flagged, "comparison_residual": self.comparison}


def audit_extraction(ex: ExtractedCocycle, samples: int = 16, spot_checks: int = 8, seed: int = 0,
                     conn: Optional[ConnectionData] = None, compare_samples: int = 64) -> ExtractionReport:
    """Cocycle residual plus a functoriality spot check; flags suspicious oracles."""
    rng = np.random.default_rng(seed)
    pairs = spot_check_pairs(ex.atlas, ex.basepoint[0], spot_checks, rng)
    func = functoriality_residual(ex.oracle, pairs)
    res, where = ex.cocycle_residual(samples)
    flagged = res > FUNCTORIALITY_TOL or func > FUNCTORIALITY_TOL
    comp = ex.compare(conn, compare_samples) if conn is not None else None
    return ExtractionReport(res, where, func, flagged, comp)
