"""G-torsors modelled as labelled copies of G with right multiplication.

Points of a torsor are group elements; a morphism is left multiplication by
a fixed group element, so equivariance ``f(x g) = f(x) g`` holds identically.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import liegroup
from .liegroup import GroupElement, LieGroupSpec


class TorsorMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Torsor:
    group: LieGroupSpec
    label: str


@dataclass(frozen=True, eq=False)
class TorsorPoint:
    torsor: Torsor
    value: GroupElement

    def act(self, g: GroupElement) -> "TorsorPoint":
        """Right action x . g."""
        return TorsorPoint(self.torsor, liegroup.mul(self.value, g))


@dataclass(frozen=True, eq=False)
class TorsorMorphism:
    source: Torsor
    target: Torsor
    value: GroupElement

    def __post_init__(self):
        if self.source.group != self.target.group or self.value.group != self.source.group:
            raise TorsorMismatch("torsor morphism mixes structure groups")

    def __call__(self, x: TorsorPoint) -> TorsorPoint:
        if x.torsor != self.source:
            raise TorsorMismatch(f"point of {x.torsor.label} given to a morphism from {self.source.label}")
        return TorsorPoint(self.target, liegroup.mul(self.value, x.value))

    def inverse(self) -> "TorsorMorphism":
        return TorsorMorphism(self.target, self.source, self.value.inverse())


def identity(x: Torsor) -> TorsorMorphism:
    return TorsorMorphism(x, x, x.group.identity())


def d_map(x: TorsorPoint, y: TorsorPoint) -> GroupElement:
    """The unique d with x . d = y."""
    if x.torsor != y.torsor:
        raise TorsorMismatch(f"{x.torsor.label} vs {y.torsor.label}")
    return liegroup.mul(x.value.inverse(), y.value)


def psi(x: TorsorPoint, f: TorsorMorphism) -> GroupElement:
    """psi_x(f) = d(x, f(x)); multiplicative: psi_x(f o h) = psi_x(f) psi_x(h).

    In this model psi_x(f) = x^-1 F x for f = left multiplication by F, so
    psi_{x b}(f) = b^-1 psi_x(f) b.
    """
    if f.source != f.target:
        raise TorsorMismatch("psi is defined on automorphisms")
    if x.torsor != f.source:
        raise TorsorMismatch(f"{x.torsor.label} vs {f.source.label}")
    return d_map(x, f(x))


def compose(f: TorsorMorphism, h: TorsorMorphism) -> TorsorMorphism:
    """f o h (h first)."""
    if h.target != f.source:
        raise TorsorMismatch(f"cannot compose: {h.target.label} is not {f.source.label}")
    return TorsorMorphism(h.source, f.target, liegroup.mul(f.value, h.value))


def fibre(label: str, group: LieGroupSpec) -> Torsor:
    return Torsor(group, label)


def from_transport(t) -> TorsorMorphism:
    """A TransportMap as a morphism between the fibre torsors at its endpoints."""
    spec = t.element.group
    src = Torsor(spec, _fibre_label(t.source))
    tgt = Torsor(spec, _fibre_label(t.target))
    return TorsorMorphism(src, tgt, t.element)


def _fibre_label(end) -> str:
    chart, point = end
    coords = ",".join(f"{float(v):.12g}" for v in point)
    return f"P[{chart}:({coords})]"
