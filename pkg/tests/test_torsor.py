import numpy as np
import pytest

from thintransport import liegroup as L
from thintransport.pathalg import concat, straight_line
from thintransport.torsor import (Torsor, TorsorMismatch, TorsorMorphism, TorsorPoint, compose, d_map,
                                  from_transport, identity, psi)
from thintransport.transport import transport

GROUPS = ["SO3", "SU2", "GL2", "U1"]


def setup(name, rng):
    spec = L.group(name)
    X = Torsor(spec, "X")
    pt = lambda: TorsorPoint(X, L.random_element(spec, rng))
    auto = lambda: TorsorMorphism(X, X, L.random_element(spec, rng))
    return spec, X, pt, auto


@pytest.mark.parametrize("name", GROUPS)
def test_difference_map(name, rng):
    spec, X, pt, _ = setup(name, rng)
    for _ in range(20):
        x, y, z = pt(), pt(), pt()
        assert L.dist(d_map(x, x), spec.identity()) <= 1e-12
        g = L.random_element(spec, rng)
        assert L.dist(d_map(x, x.act(g)), g) <= 1e-12
        assert L.dist(x.act(d_map(x, y)).value, y.value) <= 1e-12
        assert L.dist(L.mul(d_map(x, y), d_map(y, z)), d_map(x, z)) <= 1e-12


@pytest.mark.parametrize("name", GROUPS)
def test_psi_laws(name, rng):
    spec, X, pt, auto = setup(name, rng)
    for _ in range(20):
        x, f, h = pt(), auto(), auto()
        assert L.dist(psi(x, identity(X)), spec.identity()) <= 1e-12
        assert L.dist(psi(x, compose(f, h)), L.mul(psi(x, f), psi(x, h))) <= 1e-12
        b = L.random_element(spec, rng)
        conj = L.mul(L.mul(b.inverse(), psi(x, f)), b)
        # an identity of the model; only the floating point association differs,
        # so the gap is measured relative to the size of the factors (GL2 is unbounded)
        scale = np.prod([np.linalg.norm(m) for m in (b.matrix, b.inverse().matrix, f.value.matrix)])
        assert L.dist(psi(x.act(b), f), conj) <= 1e-12 * max(1.0, scale)


@pytest.mark.parametrize("name", GROUPS)
def test_equivariance_and_composition(name, rng):
    spec, X, pt, auto = setup(name, rng)
    for _ in range(10):
        x, f, h, k = pt(), auto(), auto(), auto()
        g = L.random_element(spec, rng)
        assert L.dist(f(x.act(g)).value, f(x).act(g).value) <= 1e-12
        assert L.dist(compose(identity(X), f).value, f.value) <= 1e-15
        assert L.dist(compose(f, f.inverse()).value, spec.identity()) <= 1e-12
        lhs = compose(compose(f, h), k).value
        rhs = compose(f, compose(h, k)).value
        assert L.dist(lhs, rhs) <= 1e-12


def test_mismatches(rng):
    spec = L.group("SO3")
    X, Y = Torsor(spec, "X"), Torsor(spec, "Y")
    x = TorsorPoint(X, spec.identity())
    y = TorsorPoint(Y, spec.identity())
    with pytest.raises(TorsorMismatch):
        d_map(x, y)
    f = TorsorMorphism(X, Y, spec.identity())
    with pytest.raises(TorsorMismatch):
        psi(x, f)
    with pytest.raises(TorsorMismatch):
        f(y)
    with pytest.raises(TorsorMismatch):
        compose(f, f)
    with pytest.raises(TorsorMismatch):
        TorsorMorphism(X, Torsor(L.group("SU2"), "Z"), spec.identity())


def test_transport_embeds(so3):
    a = straight_line(so3.atlas, "P", [0, 0], [1, 1])
    b = straight_line(so3.atlas, "P", [1, 1], [-1, 2])
    fa, fb = from_transport(transport(so3, a)), from_transport(transport(so3, b))
    whole = from_transport(transport(so3, concat(b, a)))
    # transport runs from the end of a path's fibre back to its start
    assert fa.source == whole.source and fb.target == whole.target
    assert L.dist(compose(fb, fa).value, whole.value) <= 1e-7
