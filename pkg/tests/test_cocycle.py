import math

import numpy as np
import pytest

from conftest import fixture_path
from thintransport import config, liegroup as L
from thintransport.cocycle import (CocycleMorphism, CoverGroupoid, NotAHomomorphism, ShapeMismatch,
                                   TransCocycleObject, check_cocycle, cocycle_to_dict, det_rotation,
                                   equivalent_objects, hol_gamma, identity_hom, induced_functor,
                                   so2_to_so3, u1_to_gl2, GroupHomomorphism)
from thintransport.exprdsl import ExprFn, parse_expr
from thintransport.exprdsl.calculus import mul
from thintransport.geometry import ConnectionData, gauge_transform


def rot_src(t):
    return f"[[cos({t}), -sin({t})], [sin({t}), cos({t})]]"


@pytest.fixture(scope="module")
def hol_sphere(sphere):
    return hol_gamma(sphere)


@pytest.fixture(scope="module")
def hol_flux_cover(flux_cover):
    return hol_gamma(flux_cover)


def test_cover_groupoid_faces(torus):
    G = CoverGroupoid(torus.atlas)
    assert G.objects == torus.atlas.chart_names
    arrow = G.arrows[0]
    assert G.d1(arrow) == arrow.source and G.d0(arrow) == arrow.target
    assert G.simplicial_residual(16) <= 1e-9
    assert len(list(G.triples(8))) > 0


def test_trivial_cover_identity_phi(flux):
    report = check_cocycle(flux)
    assert report.cocycle_residual == 0.0 and report.vacuous


def test_sphere_triple_law_vacuous(sphere):
    report = check_cocycle(sphere)
    assert report.vacuous and report.triple_count == 0
    assert report.cocycle_residual <= 1e-9 and report.inverse_residual <= 1e-9
    assert report.as_dict()["triple_law_vacuous"] is True


def test_torus_cocycle_and_perturbation(torus):
    report = check_cocycle(torus)
    assert report.triple_count > 0
    assert report.cocycle_residual <= 1e-9
    ov = torus.atlas.overlaps[0]
    kick = parse_expr(rot_src(0.01), 2, (2, 2))
    trans = dict(torus.transitions)
    g = trans[ov.id]
    trans[ov.id] = ExprFn(mul(g.node, kick.node), g.arity, g.shape)
    bent = ConnectionData(torus.atlas, torus.group, torus.forms, trans)
    bad = check_cocycle(bent)
    # |R(a)(R(0.01) - I)|_F = 2 sqrt(2) sin(0.005)
    assert bad.cocycle_residual >= 5e-3
    assert bad.cocycle_residual == pytest.approx(2 * math.sqrt(2) * math.sin(0.005), rel=1e-6)
    assert bad.location is not None


def test_hol_gamma_trivial(flux):
    zero = config.load_connection(fixture_path("flat.toml"))
    obj = hol_gamma(zero)
    line = parse_expr("[0.1 + beta(x0), 0.3*beta(x0)]", 1, (2,))
    from thintransport.pathalg import Path, Segment
    p = Path(zero.atlas, (Segment("P", line, 0.0, 1.0),))
    assert L.dist(obj.oracles["P"](p), obj.group.identity()) == 0.0


def test_hol_gamma_flux_cover(hol_flux_cover, flux_cover):
    arrow = flux_cover.atlas.overlaps[0]
    pts = flux_cover.atlas.sample_region(arrow, 16)
    mats = hol_flux_cover.phi(arrow, pts)
    assert np.ptp(mats, axis=0).max() == 0.0
    np.testing.assert_allclose(mats[0], np.array([[math.cos(0.3), -math.sin(0.3)], [math.sin(0.3), math.cos(0.3)]]),
                               atol=1e-15)
    report = check_cocycle(hol_flux_cover, paths=6)
    assert report.naturality_residual <= 1e-8


def test_hol_gamma_sphere_passes(hol_sphere):
    report = check_cocycle(hol_sphere, samples=32)
    assert report.passes(1e-6)
    assert report.naturality_residual <= 1e-6


def test_hol_gamma_torus_passes(torus):
    report = check_cocycle(hol_gamma(torus), samples=8, paths=2)
    assert report.passes(1e-7)


# ---- homomorphisms --------------------------------------------------------------------

@pytest.mark.parametrize("make", [so2_to_so3, u1_to_gl2, det_rotation])
def test_builtin_homomorphisms_verify(make):
    assert make().verify() <= 1e-9


def test_fake_homomorphism_rejected():
    bad = GroupHomomorphism(L.group("SO3"), L.group("SO3"),
                            parse_expr("[[x0, x3, x6], [x1, x4, x7], [x2, x5, x8]]", 9, (3, 3)),
                            parse_expr("[[x0, x3, x6], [x1, x4, x7], [x2, x5, x8]]", 9, (3, 3)), "transpose")
    with pytest.raises(NotAHomomorphism):
        bad.verify()
    with pytest.raises(NotAHomomorphism):
        induced_functor(bad, config.load_connection(fixture_path("gauge_so3.toml")))


def test_identity_functor(torus):
    out = induced_functor(identity_hom(torus.group), torus)
    pts = torus.atlas.sample_region(torus.atlas.overlaps[0], 8)
    ov = torus.atlas.overlaps[0]
    a = torus.transitions[ov.id].eval_batch(pts)
    b = out.transitions[ov.id].eval_batch(pts)
    assert np.max(np.abs(a - b)) == 0.0


def test_so2_to_so3_on_sphere(sphere, hol_sphere):
    rho = so2_to_so3()
    up = induced_functor(rho, sphere)
    assert up.group.name == "SO3"
    assert check_cocycle(up).cocycle_residual <= 1e-7
    report = check_cocycle(induced_functor(rho, hol_sphere), samples=16)
    assert report.passes(1e-7)


def test_det_on_a_gl2_cocycle(torus):
    lifted = induced_functor(u1_to_gl2(), torus)
    stretch = {c: parse_expr(f"[[exp(0.2*x0 + {0.1 * i}), 0.1*x1], [0, 1 + 0.5*x1^2]]", 2, (2, 2))
               for i, c in enumerate(torus.atlas.chart_names)}
    gl2 = gauge_transform(lifted, stretch)
    ov = torus.atlas.overlaps[0]
    dets = np.linalg.det(gl2.transitions[ov.id].eval_batch(torus.atlas.sample_region(ov, 8)))
    assert np.ptp(dets) > 1e-3  # genuinely outside the rotations
    assert check_cocycle(gl2).cocycle_residual <= 1e-9
    down = induced_functor(det_rotation(), gl2)
    assert down.group.name == "U1"
    assert check_cocycle(down).cocycle_residual <= 1e-9


def test_induced_functor_group_mismatch(so3):
    with pytest.raises(ShapeMismatch):
        induced_functor(so2_to_so3(), so3)


# ---- equivalences ------------------------------------------------------------------

def test_equivalent_to_itself(hol_flux_cover):
    r = equivalent_objects(hol_flux_cover, hol_flux_cover, CocycleMorphism())
    assert r and r.residual == 0.0


def test_gauge_equivalence(sphere, hol_sphere):
    gauges = {"N": parse_expr(rot_src("x0*x1"), 2, (2, 2)), "S": parse_expr(rot_src("0.5*x0 - x1"), 2, (2, 2))}
    other = hol_gamma(gauge_transform(sphere, gauges))
    r = equivalent_objects(hol_sphere, other, CocycleMorphism(gauges))
    assert r and r.residual <= 1e-7
    assert not equivalent_objects(hol_sphere, other, CocycleMorphism())


def test_random_candidate_fails(flux_cover, hol_flux_cover, rng):
    gauges = {c: parse_expr(rot_src(f"{rng.uniform(1, 2)!r}*x0 + {rng.uniform(-1, 1)!r}*x1"), 2, (2, 2))
              for c in flux_cover.atlas.chart_names}
    r = equivalent_objects(hol_flux_cover, hol_flux_cover, CocycleMorphism(gauges))
    assert not r and r.residual >= 1e-2


def test_equivalence_shape_checks(hol_flux_cover, hol_sphere, so3):
    with pytest.raises(ShapeMismatch):
        equivalent_objects(hol_flux_cover, hol_sphere, CocycleMorphism())
    with pytest.raises(ShapeMismatch):
        equivalent_objects(hol_flux_cover, hol_gamma(so3), CocycleMorphism())


def test_serialization(hol_flux_cover):
    d = cocycle_to_dict(hol_flux_cover, 4)
    assert d["group"] == "U1" and set(d["phi"]) == {"LR"}
    assert len(d["phi"]["LR"]["points"]) == len(d["phi"]["LR"]["matrices"]) > 0
