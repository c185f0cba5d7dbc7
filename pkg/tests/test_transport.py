import math

import numpy as np
import pytest

from conftest import angle_gap, fixture_path
from thintransport import config, liegroup as L
from thintransport.exprdsl import parse_expr
from thintransport.geometry import Atlas, Chart, ConnectionData, OutOfChart, gauge_transform
from thintransport.pathalg import (Path, Segment, certify_thin, concat, constant_path,
                                   random_straight_paths, reparameterize, reverse, straight_line)
from thintransport.transport import (BundleMorphism, NotALoop, SmoothMap, StepTooCoarse,
                                     check_naturality, compose_maps, family_transport, holonomy,
                                     identity_map, pullback_connection, pullback_transport, transport)

U1 = L.group("U1")


def rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def flux_conn(a):
    atlas = Atlas(2, (Chart("P", (-5.0, -5.0), (5.0, 5.0)),))
    forms = (parse_expr("[[0, 0], [0, 0]]", 2, (2, 2)), parse_expr(f"[[0, -({a!r})], [{a!r}, 0]]", 2, (2, 2)))
    return ConnectionData(atlas, U1, {"P": forms})


def load(conn, name):
    return config.load_path(fixture_path("paths", name + ".toml"), conn.atlas)


def test_zero_connection_gives_identity():
    conn = flux_conn(0.0)
    t = transport(conn, straight_line(conn.atlas, "P", [-1, 2], [3, -4]))
    np.testing.assert_array_equal(t.element.matrix, np.eye(2))


@pytest.mark.parametrize("a", [0.0, 0.5, math.pi])
def test_flux_vertical_segment(a):
    conn = flux_conn(a)
    t = transport(conn, straight_line(conn.atlas, "P", [0, 0], [0, 1]))
    assert np.max(np.abs(t.element.matrix - rot(-a))) <= 1e-10


def test_sphere_latitude_pi3(sphere, sphere_oracle):
    t = holonomy(sphere, load(sphere, "sphere_lat_pi3"), 4096)
    angle = L.rotation_angle(t.element)
    assert angle_gap(angle, 2 * math.pi * (1 - math.cos(math.pi / 3))) <= 1e-6
    ref = next(r for r in sphere_oracle["loops"] if abs(r["theta"] - math.pi / 3) < 1e-12)
    assert np.max(np.abs(t.element.matrix - np.array(ref["matrix"]))) <= 1e-9
    assert t.warning is None and t.steps == 4096


def test_chart_crossing_loop(sphere):
    # quarter annulus 0.5 <= r <= 1.5 with its outer arc run in chart S
    cos_th = lambda r: (1 - r * r) / (1 + r * r)
    expected = (math.pi / 2) * (cos_th(0.5) - cos_th(1.5))
    t = holonomy(sphere, load(sphere, "sphere_lune"), 4096)
    assert t.source[0] == t.target[0] == "N"
    assert angle_gap(L.rotation_angle(t.element), expected) <= 1e-9


def test_constant_loop(sphere):
    t = holonomy(sphere, constant_path(sphere.atlas, "S", [0.3, 0.4]))
    np.testing.assert_array_equal(t.element.matrix, np.eye(2))


def test_there_and_back(sphere):
    gamma = load(sphere, "sphere_open")
    t = holonomy(sphere, concat(reverse(gamma), gamma))
    assert L.dist(t.element, U1.identity()) <= 1e-8


def test_pure_gauge_loops_are_trivial(so3, rng):
    loop_src = "[{r}*cos(2*pi*beta(x0)) + {c0}, {r}*sin(2*pi*beta(x0)) + {c1}]"
    for _ in range(3):
        c0, c1 = rng.uniform(-1, 1, 2)
        r = rng.uniform(0.3, 1.5)
        fn = parse_expr(loop_src.format(r=r, c0=c0, c1=c1), 1, (3 - 1,))
        t = holonomy(so3, Path(so3.atlas, (Segment("P", fn, 0.0, 1.0),)), 1024)
        assert L.dist(t.element, L.group("SO3").identity()) <= 1e-7


def test_not_a_loop_names_endpoints(flux):
    with pytest.raises(NotALoop, match=r"\[0\.0, 0\.0\].*\[1\.0, 0\.5\]"):
        holonomy(flux, load(flux, "flux_open"))


def test_step_requirements(so3, sphere):
    with pytest.raises(ValueError):
        transport(sphere, load(sphere, "sphere_lat_pi3"), 8)
    with pytest.raises(StepTooCoarse):
        transport(so3, straight_line(so3.atlas, "P", [-2, -1], [2, 1.5]), 16)
    coarse = transport(sphere, load(sphere, "sphere_lat_pi3"), 16)
    assert coarse.warning is not None and coarse.error_estimate > 1e-8


def test_path_on_another_atlas(sphere, flux):
    with pytest.raises(ValueError):
        transport(sphere, load(flux, "flux_vertical"))


def test_chart_reexpression_round_trip(sphere):
    t = transport(sphere, load(sphere, "sphere_open"))
    assert (t.source[0], t.target[0]) == ("N", "S")
    back = t.in_charts("S", "N").in_charts("N", "S")
    assert L.dist(back.element, t.element) <= 1e-13
    np.testing.assert_allclose(back.target[1], t.target[1], atol=1e-14)


def test_record_fields(flux):
    rec = transport(flux, load(flux, "flux_vertical")).as_record()
    for key in ("source", "target", "chart", "matrix", "error_estimate"):
        assert key in rec
    assert rec["rotation_angle"] == pytest.approx(-0.5, abs=1e-12)


# ---- families -----------------------------------------------------------------------

def test_constant_family(flux_wave):
    fam = config.PathFamily(flux_wave.atlas, "P", [0.0], [1.0], parse_expr("[beta(x1), 0.5*beta(x1)]", 2, (2,)))
    table = family_transport(flux_wave, fam, 5, 256)
    assert np.ptp(table.coordinates, axis=0).max() == 0.0


def test_flux_height_family(flux):
    fam = config.load_family(fixture_path("families", "flux_heights.toml"), flux.atlas)
    table = family_transport(flux, fam, 9, 64)
    u = table.params[:, 0]
    np.testing.assert_allclose(table.coordinates[:, 0], -0.5 * u, atol=1e-8)


def test_sphere_latitude_family(sphere):
    fam = config.load_family(fixture_path("families", "sphere_latitudes.toml"), sphere.atlas)
    table = family_transport(sphere, fam, 9, 1024)
    theta = table.params[:, 0]
    np.testing.assert_allclose(table.angles, 2 * math.pi * (1 - np.cos(theta)), atol=1e-6)
    assert np.all(np.diff(table.angles) > 0)
    # second differences of a smooth table: the reported constant bounds |d2| / h^2
    d2 = np.abs(np.diff(table.angles, 2)) / table.spacing[0] ** 2
    assert d2.max() <= table.smoothness_constant + 1e-9


# ---- naturality and pullbacks ---------------------------------------------------------

def test_identity_morphism(sphere):
    r = check_naturality(BundleMorphism(), sphere, sphere, load(sphere, "sphere_lune"))
    assert r.residual <= 1e-12


def test_constant_gauge_on_u1(flux_wave):
    g0 = {"P": parse_expr("[[cos(0.7), -sin(0.7)], [sin(0.7), cos(0.7)]]", 2, (2, 2))}
    target = gauge_transform(flux_wave, g0)
    r = check_naturality(BundleMorphism(g0), flux_wave, target, load(flux_wave, "flux_square"))
    assert r.residual <= 1e-8


def test_broken_morphism(flux):
    strong = config.load_connection(fixture_path("flux_strong.toml"))
    r = check_naturality(BundleMorphism(), flux, strong, load(flux, "flux_vertical"))
    # |R(-0.5) - R(-1)|_F = 2 sqrt(2) sin(1/4)
    assert r.residual >= 1e-2
    assert abs(r.residual - 2 * math.sqrt(2) * math.sin(0.25)) <= 1e-10


def test_shipped_gauge_morphisms(rng):
    for name in ("flux_to_gauged", "sphere_gauge", "so3_gauge", "wave_pullback"):
        m = config.load_morphism(fixture_path("morphisms", name + ".toml"))
        for p in m.paths + random_straight_paths(m.source.atlas, 3, rng):
            assert check_naturality(m.morphism, m.source, m.target, p).residual <= 1e-7


def test_pullback_identity_and_constant(flux_wave):
    gamma = load(flux_wave, "flux_square")
    same = pullback_transport(identity_map(flux_wave.atlas), flux_wave, gamma)
    # the pulled-back form multiplies by the Jacobian, so agreement is to rounding
    assert L.dist(same.element, transport(flux_wave, gamma).element) <= 1e-12
    const = SmoothMap(flux_wave.atlas, flux_wave.atlas, {"P": ("P", parse_expr("[1, 2]", 2, (2,)))})
    t = pullback_transport(const, flux_wave, gamma)
    np.testing.assert_array_equal(t.element.matrix, np.eye(2))


def test_pullback_along_inclusion(flux):
    line = Atlas(1, (Chart("I", (-2.0,), (2.0,)),))
    inc = SmoothMap(line, flux.atlas, {"I": ("P", parse_expr("[0, x0]", 1, (2,)))})
    gamma = straight_line(line, "I", [0.0], [1.0])
    t = pullback_transport(inc, flux, gamma)
    assert np.max(np.abs(t.element.matrix - rot(-0.5))) <= 1e-10
    pulled = pullback_connection(inc, flux)
    assert L.dist(transport(pulled, gamma).element, t.element) <= 1e-12


def test_pullback_composition_law(flux_wave):
    atlas = flux_wave.atlas
    m = SmoothMap(atlas, atlas, {"P": ("P", parse_expr("[0.5*x0 + 0.1*x1^2, 0.4*x1]", 2, (2,)))})
    n = SmoothMap(atlas, atlas, {"P": ("P", parse_expr("[sin(x1), x0 - 0.2]", 2, (2,)))})
    gamma = load(flux_wave, "flux_arc")
    lhs = pullback_transport(compose_maps(m, n), flux_wave, gamma)
    rhs = pullback_transport(m, flux_wave, n.apply_path(gamma))
    assert L.dist(lhs.element, rhs.element) <= 1e-9
    via = transport(pullback_connection(n, pullback_connection(m, flux_wave)), gamma)
    assert L.dist(via.element, lhs.element) <= 1e-9


def test_pullback_out_of_chart(flux):
    far = SmoothMap(flux.atlas, flux.atlas, {"P": ("P", parse_expr("[10 + x0, x1]", 2, (2,)))})
    with pytest.raises(OutOfChart):
        pullback_transport(far, flux, load(flux, "flux_vertical"))


# ---- properties T1-T5 ------------------------------------------------------------------

def _composable_pairs(conn, count, rng):
    pairs = []
    for gamma in random_straight_paths(conn.atlas, count, rng):
        c = gamma.end_chart
        box = conn.atlas.chart(c)
        y = rng.uniform(0.8 * np.array(box.lower), 0.8 * np.array(box.upper))
        pairs.append((straight_line(conn.atlas, c, gamma.end, y), gamma))
    return pairs


def test_functoriality_t1(sphere, flux_wave, so3, rng):
    pairs = (_composable_pairs(sphere, 20, rng) + _composable_pairs(flux_wave, 15, rng)
             + _composable_pairs(so3, 15, rng))
    assert len(pairs) == 50
    for gamma, tau in pairs:
        conn = {id(sphere.atlas): sphere, id(flux_wave.atlas): flux_wave, id(so3.atlas): so3}[id(gamma.atlas)]
        whole = transport(conn, concat(gamma, tau)).element
        parts = L.mul(transport(conn, gamma).element, transport(conn, tau).element)
        assert L.dist(whole, parts) <= 1e-7


def test_functoriality_across_charts(sphere):
    gamma = load(sphere, "sphere_open")
    tail = straight_line(sphere.atlas, "S", gamma.end, [0.2, 0.9])
    whole = transport(sphere, concat(tail, gamma)).element
    parts = L.mul(transport(sphere, tail).element, transport(sphere, gamma).element)
    assert L.dist(whole, parts) <= 1e-7


def test_thin_invariance_t2(sphere, flux_wave):
    for conn, name in ((sphere, "sphere_reparam"), (sphere, "sphere_lune_reparam"),
                       (flux_wave, "flux_associator"), (flux_wave, "flux_collar")):
        H = config.load_homotopy(fixture_path("homotopies", name + ".toml"), conn.atlas)
        assert certify_thin(H).thin
        assert L.dist(transport(conn, H.gamma0).element, transport(conn, H.gamma1).element) <= 1e-6
    gamma = load(sphere, "sphere_open")
    re = reparameterize(gamma, parse_expr("beta(x0)", 1))
    assert L.dist(transport(sphere, re).element, transport(sphere, gamma).element) <= 1e-8


def test_inverse_t3(sphere, so3):
    for conn, gamma in ((sphere, load(sphere, "sphere_open")),
                        (so3, straight_line(so3.atlas, "P", [-1, 2], [2, -1]))):
        fwd = transport(conn, gamma).element
        bwd = transport(conn, reverse(gamma)).element
        assert L.dist(bwd, fwd.inverse()) <= 1e-8


def test_convergence_order_t4(so3, sphere):
    smooth = Path(so3.atlas, (Segment("P", parse_expr("[2*x0 - 1, sin(3*x0)]", 1, (2,)), 0.0, 1.0),), check=False)
    line = straight_line(so3.atlas, "P", [-2, -1], [2, 1.5])
    for conn, gamma, steps in ((so3, smooth, (16, 32, 64, 128)), (so3, line, (32, 64, 128, 256)),
                               (sphere, load(sphere, "sphere_lat_pi3"), (16, 32))):
        est = [transport(conn, gamma, n).error_estimate for n in steps]
        for a, b in zip(est, est[1:]):
            assert a / b >= 2 ** 3 * 0.8
