"""TOML configuration files for atlases, connections, paths and runs.

Every loader reports problems as :class:`ConfigError` whose message starts
with the dotted location of the offending entry, e.g.
``sphere.toml: connection.forms.N[1]: unknown function foo()``.

File references inside a config are resolved relative to that file.
"""
from __future__ import annotations

from pathlib import Path as FsPath
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import tomli
import tomli_w

from . import liegroup
from .exprdsl import ExprError, ExprFn, parse_expr
from .exprdsl.nodes import VectorLit
from .geometry import Atlas, Chart, ConnectionData, Overlap, gauge_transform
from .pathalg import (Path, PathError, Segment, associator, reparameterization_homotopy,
                      ExprHomotopy, ReparameterizationHomotopy, straight_line)
from .transport import BundleMorphism, SmoothMap, pullback_connection

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class Section:
    """A dict with a dotted location, for path-qualified error messages."""

    def __init__(self, data: dict, where: str, base: FsPath):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a table")
        self.data, self.where, self.base = data, where, base

    def _loc(self, key) -> str:
        return f"{self.where}.{key}" if self.where else str(key)

    def fail(self, key, msg):
        raise ConfigError(f"{self._loc(key)}: {msg}")

    def has(self, key) -> bool:
        return key in self.data

    def get(self, key, kind=None, default=...):
        if key not in self.data:
            if default is ...:
                self.fail(key, "missing required entry")
            return default
        value = self.data[key]
        if kind is not None and not isinstance(value, kind):
            names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            self.fail(key, f"expected {names}, got {type(value).__name__}")
        return value

    def number(self, key, default=...) -> float:
        v = self.get(key, (int, float), default)
        return v if v is None else float(v)

    def vector(self, key, length=None, default=...):
        v = self.get(key, list, default)
        if v is None:
            return None
        if not all(isinstance(x, (int, float)) for x in v):
            self.fail(key, "expected a list of numbers")
        if length is not None and len(v) != length:
            self.fail(key, f"expected {length} numbers, got {len(v)}")
        return np.array(v, dtype=float)

    def section(self, key, default=...) -> Optional["Section"]:
        v = self.get(key, dict, default)
        return None if v is None else Section(v, self._loc(key), self.base)

    def sections(self, key, default=...) -> list:
        v = self.get(key, list, default)
        if v is None:
            return []
        return [Section(item, f"{self._loc(key)}[{i}]", self.base) for i, item in enumerate(v)]

    def file(self, key, default=...) -> Optional[FsPath]:
        v = self.get(key, str, default)
        return None if v is None else (self.base / v)

    def expr(self, key, arity, shape=(), value=None) -> ExprFn:
        src = self.get(key) if value is None else value
        return parse_at(src, arity, shape, self._loc(key))


def parse_at(src, arity, shape, where) -> ExprFn:
    """Parse a DSL entry: a string, or a list of scalar strings for a vector."""
    try:
        if isinstance(src, list):
            if not all(isinstance(s, str) for s in src):
                raise ConfigError(f"{where}: expected a list of expression strings")
            parts = [parse_expr(s, arity).node for s in src]
            fn = ExprFn(VectorLit(tuple(parts)), arity, (len(parts),))
            if shape and tuple(shape) != fn.shape:
                raise ConfigError(f"{where}: expected {shape[0]} components, got {len(parts)}")
            return fn
        if not isinstance(src, str):
            raise ConfigError(f"{where}: expected an expression string")
        return parse_expr(src, arity, shape)
    except ExprError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def read_toml(path) -> dict:
    path = FsPath(path)
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def open_section(path) -> Section:
    path = FsPath(path)
    data = read_toml(path)
    root = Section(data, "", path.parent)
    version = root.get("schema_version", int, SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        root.fail("schema_version", f"unsupported version {version}")
    return root


def _prefix(path, fn, *args):
    try:
        return fn(*args)
    except ConfigError as exc:
        raise ConfigError(f"{FsPath(path).name}: {exc}") from None
    except (PathError, ValueError) as exc:
        raise ConfigError(f"{FsPath(path).name}: {exc}") from None


# ---- atlas and connection ---------------------------------------------------

def atlas_from(sec: Section) -> Atlas:
    dim = sec.get("dim", int)
    if dim < 1:
        sec.fail("dim", "must be positive")
    charts = []
    for c in sec.sections("charts"):
        lower, upper = c.vector("lower", dim), c.vector("upper", dim)
        if np.any(lower >= upper):
            c.fail("upper", "must exceed lower componentwise")
        charts.append(Chart(c.get("name", str), tuple(lower), tuple(upper)))
    overlaps = []
    for o in sec.sections("overlaps", default=None):
        box = None
        if o.has("box"):
            b = o.section("box")
            box = (tuple(b.vector("lower", dim)), tuple(b.vector("upper", dim)))
        tbox = None
        if o.has("target_box"):
            b = o.section("target_box")
            tbox = (tuple(b.vector("lower", dim)), tuple(b.vector("upper", dim)))
        overlaps.append(Overlap(o.get("id", str), o.get("source", str), o.get("target", str),
                                o.expr("forward", dim, (dim,)), o.expr("backward", dim, (dim,)),
                                box, tbox))
    try:
        return Atlas(dim, tuple(charts), tuple(overlaps))
    except ValueError as exc:
        raise ConfigError(f"{sec.where or 'atlas'}: {exc}") from None


def connection_from(root: Section) -> ConnectionData:
    atlas = atlas_from(root.section("atlas"))
    sec = root.section("connection")
    try:
        group = liegroup.group(sec.get("group", str))
    except ValueError as exc:
        sec.fail("group", str(exc))
    n, d = group.dim_matrix, atlas.dim
    forms_sec = sec.section("forms")
    forms = {}
    for name in atlas.chart_names:
        comps = forms_sec.get(name, list)
        if len(comps) != d:
            forms_sec.fail(name, f"expected {d} form components, got {len(comps)}")
        forms[name] = tuple(parse_at(src, d, (n, n), f"{forms_sec._loc(name)}[{i}]")
                            for i, src in enumerate(comps))
    trans_sec = sec.section("transitions", default=None)
    transitions = {}
    for ov in atlas.overlaps:
        if trans_sec is None or not trans_sec.has(ov.id):
            (trans_sec or sec).fail(ov.id, "missing transition function")
        transitions[ov.id] = trans_sec.expr(ov.id, d, (n, n))
    try:
        return ConnectionData(atlas, group, forms, transitions)
    except ValueError as exc:
        raise ConfigError(f"connection: {exc}") from None


def load_connection(path) -> ConnectionData:
    return _prefix(path, lambda: connection_from(open_section(path)))


def load_atlas(path) -> Atlas:
    return _prefix(path, lambda: atlas_from(open_section(path).section("atlas")))


# ---- paths, families, homotopies --------------------------------------------

def path_from(sec: Section, atlas: Atlas) -> Path:
    d = atlas.dim
    if sec.has("straight"):
        s = sec.section("straight")
        return straight_line(atlas, s.get("chart", str), s.vector("from", d), s.vector("to", d))
    segs = []
    for s in sec.sections("segments"):
        interval = s.vector("interval", 2, default=np.array([0.0, 1.0]))
        chart = s.get("chart", str)
        if chart not in atlas.chart_names:
            s.fail("chart", f"unknown chart {chart!r}")
        segs.append(Segment(chart, s.expr("map", 1, (d,)), float(interval[0]), float(interval[1])))
    return Path(atlas, tuple(segs), sec.number("sitting", 0.1))


def load_path(path, atlas: Atlas) -> Path:
    return _prefix(path, lambda: path_from(open_section(path).section("path"), atlas))


class PathFamily:
    """Paths F(u, .) for u in a box; F is an ExprFn of (u_0 .. u_{k-1}, t)."""

    def __init__(self, atlas: Atlas, chart: str, lower, upper, map: ExprFn):
        self.atlas, self.chart = atlas, chart
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.k = len(self.lower)
        if map.arity != self.k + 1 or map.shape != (atlas.dim,):
            raise PathError("family map must take the parameters plus t and return chart coordinates")
        self.map = map

    def slice(self, u) -> Path:
        from .exprdsl import compose, constant
        u = np.atleast_1d(np.asarray(u, dtype=float))
        inner = [constant(v, 1) for v in u] + [parse_expr("x0", 1)]
        fn = compose(self.map, inner, 1)
        return Path(self.atlas, (Segment(self.chart, fn, 0.0, 1.0),))

    def grid(self, n: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, n) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def family_from(sec: Section, atlas: Atlas) -> PathFamily:
    lower = sec.vector("lower")
    upper = sec.vector("upper", len(lower))
    k = len(lower)
    return PathFamily(atlas, sec.get("chart", str), lower, upper,
                      sec.expr("map", k + 1, (atlas.dim,)))


def load_family(path, atlas: Atlas) -> PathFamily:
    return _prefix(path, lambda: family_from(open_section(path).section("family"), atlas))


def _path_ref(sec: Section, key: str, atlas: Atlas) -> Path:
    value = sec.get(key)
    if isinstance(value, str):
        return load_path(sec.base / value, atlas)
    return path_from(sec.section(key), atlas)


def homotopy_from(sec: Section, atlas: Atlas):
    kind = sec.get("kind", str)
    if kind == "expr":
        return ExprHomotopy(atlas, sec.get("chart", str), sec.expr("map", 2, (atlas.dim,)),
                            collar=sec.number("collar", 0.1))
    if kind == "reparameterization":
        base = _path_ref(sec, "path", atlas)
        if sec.has("u"):
            return ReparameterizationHomotopy(base, sec.expr("u", 2), collar=sec.number("collar", 0.05))
        return reparameterization_homotopy(base, sec.expr("phi", 1))
    if kind == "associator":
        refs = sec.get("paths", list)
        if len(refs) != 3:
            sec.fail("paths", "associator needs exactly three paths")
        paths = [load_path(sec.base / r, atlas) for r in refs]
        return associator(*paths)
    sec.fail("kind", f"unknown homotopy kind {kind!r}")


def load_homotopy(path, atlas: Atlas):
    return _prefix(path, lambda: homotopy_from(open_section(path).section("homotopy"), atlas))


# ---- bundle morphisms ----------------------------------------------------------

@dataclass(eq=False)
class MorphismConfig:
    """A bundle morphism between two connections plus the paths to test it on."""

    morphism: BundleMorphism
    source: ConnectionData
    target: ConnectionData
    paths: list
    random_paths: int = 4
    expect: str = "pass"
    name: str = ""


def _base_map(sec: Section, source: Atlas, target: Atlas) -> SmoothMap:
    maps = {}
    for c in source.chart_names:
        m = sec.section(c)
        tc = m.get("target", str)
        if tc not in target.chart_names:
            m.fail("target", f"unknown chart {tc!r}")
        maps[c] = (tc, m.expr("map", source.dim, (target.dim,)))
    return SmoothMap(source, target, maps)


def morphism_from(root: Section, name: str = "") -> MorphismConfig:
    sec = root.section("morphism")
    source = load_connection(sec.file("source"))
    derive = sec.get("derive", str, "")
    if derive not in ("", "gauge", "pullback"):
        sec.fail("derive", f"unknown derivation {derive!r}")
    n = source.group.dim_matrix
    gauges = {}
    g = sec.section("gauges", default=None)
    if g is not None:
        for c in g.data:
            if c not in source.atlas.chart_names:
                g.fail(c, f"unknown chart {c!r}")
            gauges[c] = g.expr(c, source.atlas.dim, (n, n))
    base = None
    if derive == "gauge":
        target = gauge_transform(source, gauges)
    else:
        target = load_connection(sec.file("target"))
    b = sec.section("base", default=None)
    if b is not None:
        base = _base_map(b, source.atlas, target.atlas)
    if derive == "pullback":
        if base is None or gauges:
            sec.fail("derive", "pullback needs a base map and no gauges")
        source = pullback_connection(base, target)
    paths = [load_path(sec.base / r, source.atlas) for r in sec.get("paths", list, [])]
    expect = sec.get("expect", str, "pass")
    if expect not in ("pass", "fail"):
        sec.fail("expect", "expected 'pass' or 'fail'")
    random_paths = int(sec.number("random_paths", 4))
    return MorphismConfig(BundleMorphism(gauges, base), source, target, paths,
                          random_paths, expect, name)


def load_morphism(path) -> MorphismConfig:
    return _prefix(path, lambda: morphism_from(open_section(path), FsPath(path).stem))


# ---- serialization ------------------------------------------------------------

def atlas_to_dict(atlas: Atlas) -> dict:
    out = {"dim": atlas.dim,
           "charts": [{"name": c.name, "lower": list(c.lower), "upper": list(c.upper)}
                      for c in atlas.charts]}
    ovs = []
    for ov in atlas.overlaps:
        entry = {"id": ov.id, "source": ov.source, "target": ov.target,
                 "forward": [_src(c) for c in ov.forward.components()],
                 "backward": [_src(c) for c in ov.backward.components()]}
        if ov.box is not None:
            entry["box"] = {"lower": list(ov.box[0]), "upper": list(ov.box[1])}
        if ov.target_box is not None:
            entry["target_box"] = {"lower": list(ov.target_box[0]), "upper": list(ov.target_box[1])}
        ovs.append(entry)
    if ovs:
        out["overlaps"] = ovs
    return out


def _src(node) -> str:
    from .exprdsl import to_source
    return to_source(node)


def connection_to_dict(conn: ConnectionData) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "atlas": atlas_to_dict(conn.atlas),
        "connection": {
            "group": conn.group.name,
            "forms": {name: [f.source for f in comps] for name, comps in conn.forms.items()},
            "transitions": {k: v.source for k, v in conn.transitions.items()},
        },
    }


def dump_toml(data: dict) -> str:
    return tomli_w.dumps(data)


def write_toml(path, data: dict):
    FsPath(path).write_text(dump_toml(data))


def resolve(base: FsPath, value: Any) -> FsPath:
    return FsPath(base) / value
