import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thintransport import cutoff
from thintransport.exprdsl import parse_expr
from thintransport.geometry import Atlas, Chart, OutOfChart
from thintransport.pathalg import (BoundaryMismatch, Certificate, EndpointMismatch, ExprHomotopy,
                                   OutOfRange, Path, PathError, Refusal, Segment,
                                   SegmentLeavesChart, associator, beta, beta_expr, certify_thin,
                                   check_homotopy, class_of, concat, constant_path, path_distance,
                                   reparameterization_homotopy, reparameterize, reverse,
                                   straight_line, upsilon, witness_equal)

PLANE = Atlas(2, (Chart("P", (-3.0, -3.0), (3.0, 3.0)),))
ARC = Path(PLANE, (Segment("P", parse_expr("[cos(pi*beta(x0)), sin(pi*beta(x0))]", 1, (2,)), 0.0, 1.0),))


def test_beta_flat_zones():
    assert beta(0.05) == 0.0 and beta(0.0) == 0.0
    assert beta(0.95) == 1.0 and beta(1.0) == 1.0
    assert abs(beta(0.5) - 0.5) <= 1e-14


def test_beta_domain():
    with pytest.raises(OutOfRange):
        beta(1.2)
    with pytest.raises(OutOfRange):
        beta(-0.01)


def test_beta_monotone(rng):
    t = np.sort(rng.uniform(0, 1, (1000, 2)), axis=1)
    lo = np.array([beta(a) for a in t[:, 0]])
    hi = np.array([beta(b) for b in t[:, 1]])
    assert np.all(lo <= hi)


def test_beta_is_c1_across_flat_zones():
    h = 1e-7
    for edge in (cutoff.LOW, cutoff.HIGH):
        left = (beta(edge - h) - beta(edge - 2 * h)) / h
        right = (beta(edge + 2 * h) - beta(edge + h)) / h
        assert abs(left - right) <= 1e-6


def test_beta_expression_derivative_matches_difference():
    d = beta_expr().diff(0)
    for t in (0.2, 0.5, 0.77):
        fd = (beta(t + 1e-6) - beta(t - 1e-6)) / 2e-6
        assert abs(d([t]) - fd) <= 1e-6


def test_constant_concat():
    one = constant_path(PLANE, "P", [0.5, -1.0])
    c = concat(one, one)
    for t in np.linspace(0, 1, 11):
        np.testing.assert_array_equal(c(t), [0.5, -1.0])


def test_concat_with_identity_keeps_endpoints():
    c = concat(ARC, constant_path(PLANE, "P", ARC.start))
    np.testing.assert_allclose(c(0.0), ARC(0.0), atol=1e-15)
    np.testing.assert_allclose(c(1.0), ARC(1.0), atol=1e-15)


def test_concat_runs_tau_first_at_double_speed():
    tau = straight_line(PLANE, "P", [1.0, -1.0], [1.0, 0.0])
    c = concat(ARC, tau)
    assert np.linalg.norm(c(0.25) - tau(0.5)) <= 1e-12
    assert np.linalg.norm(c(0.75) - ARC(0.5)) <= 1e-12
    c.validate()


def test_concat_mismatch():
    with pytest.raises(EndpointMismatch):
        concat(ARC, straight_line(PLANE, "P", [0, 0], [0.5, 0.5]))


def test_reverse():
    one = constant_path(PLANE, "P", [0.2, 0.1])
    assert path_distance(reverse(one), one) == 0.0
    assert path_distance(reverse(reverse(ARC)), ARC) <= 1e-14  # 1 - (1 - t) rounds
    r = reverse(ARC)
    np.testing.assert_allclose([r(0.0), r(1.0)], [ARC(1.0), ARC(0.0)], atol=1e-15)
    for t in np.linspace(0, 1, 64):
        np.testing.assert_allclose(r(t), ARC(1 - t), atol=1e-14)


def test_upsilon():
    germ = parse_expr("[x0, x0^2]", 1, (2,))
    ups = upsilon(PLANE, "P", germ)
    zero = ups(0.0)
    for t in np.linspace(0, 1, 9):
        np.testing.assert_array_equal(zero(t), [0.0, 0.0])
    for s in (-0.7, 0.3, 1.1):
        p = ups(s)
        np.testing.assert_allclose(p(1.0), [s, s * s], atol=1e-15)
        np.testing.assert_allclose(p(0.0), [0.0, 0.0], atol=1e-15)


def test_upsilon_out_of_chart():
    ups = upsilon(PLANE, "P", parse_expr("[10*x0, 0]", 1, (2,)))
    with pytest.raises(OutOfChart):
        ups(1.0)


def test_straight_line():
    x = np.array([0.0, 0.0])
    e1 = np.array([1.0, 0.0])
    same = straight_line(PLANE, "P", e1, e1)
    assert path_distance(same, constant_path(PLANE, "P", e1)) == 0.0
    sig = straight_line(PLANE, "P", x, e1)
    np.testing.assert_allclose(sig(0.5), beta(0.5) * e1, atol=1e-15)
    np.testing.assert_array_equal(sig(0.0), x)
    np.testing.assert_array_equal(sig(1.0), e1)
    sig.validate()
    with pytest.raises(SegmentLeavesChart):
        straight_line(PLANE, "P", x, [4.0, 0.0])


def test_path_invariants_enforced():
    with pytest.raises(PathError):  # not sitting
        Path(PLANE, (Segment("P", parse_expr("[x0, 0]", 1, (2,)), 0.0, 1.0),))
    with pytest.raises(OutOfChart):
        Path(PLANE, (Segment("P", parse_expr("[5*beta(x0), 0]", 1, (2,)), 0.0, 1.0),))
    jump = (Segment("P", parse_expr("[beta(2*x0), 0]", 1, (2,)), 0.0, 0.5),
            Segment("P", parse_expr("[2, 0]", 1, (2,)), 0.5, 1.0))
    with pytest.raises(PathError):
        Path(PLANE, jump, 0.04)


def test_chart_changes_must_sit(sphere):
    moving = (Segment("N", parse_expr("[0.5 + x0, 0]", 1, (2,)), 0.0, 0.5),
              Segment("S", parse_expr("[1, 0]", 1, (2,)), 0.5, 1.0))
    with pytest.raises(PathError):
        Path(sphere.atlas, moving, 0.04)


def test_reparameterize_keeps_image():
    phi = parse_expr("x0^2", 1)
    r = reparameterize(ARC, phi)
    for s in np.linspace(0, 1, 17):
        np.testing.assert_allclose(r(s), ARC(s * s), atol=1e-14)


def test_constant_homotopy_certificate():
    fn = parse_expr("[cos(pi*beta(x0)), sin(pi*beta(x0))]", 2, (2,))
    H = ExprHomotopy(PLANE, "P", fn)
    cert = certify_thin(H)
    assert isinstance(cert, Certificate) and cert.max_sigma2 == 0.0
    c = class_of(ARC)
    assert witness_equal(c, c, H)


def test_area_sweeping_homotopy_refused():
    fn = parse_expr("[beta(x0), beta(x1)*sin(pi*beta(x0))]", 2, (2,))
    H = ExprHomotopy(PLANE, "P", fn)
    res = certify_thin(H, grid=33)
    assert isinstance(res, Refusal) and not res.thin
    # oracle: singular values of a finite-difference Jacobian at the reported point
    s, t = res.worst_point
    h = 1e-6
    f = lambda a, b: fn([a, b])
    jac = np.column_stack([(f(s + h, t) - f(s - h, t)) / (2 * h), (f(s, t + h) - f(s, t - h)) / (2 * h)])
    assert abs(np.linalg.svd(jac, compute_uv=False)[1] - res.sigma2) <= 1e-6 * (1 + res.max_dh)
    assert res.sigma2 > 1.0


def test_reparameterization_witness():
    H = reparameterization_homotopy(ARC, parse_expr("beta(x0)", 1))
    check_homotopy(H)
    cert = certify_thin(H)
    assert cert.thin and cert.max_sigma2 <= 1e-9
    assert witness_equal(class_of(reparameterize(ARC, parse_expr("beta(x0)", 1))), class_of(ARC), H)


def test_witness_boundary_mismatch():
    H = reparameterization_homotopy(ARC, parse_expr("beta(x0)", 1))
    other = class_of(straight_line(PLANE, "P", [1, 0], [-1, 0]))
    with pytest.raises(BoundaryMismatch):
        witness_equal(other, class_of(ARC), H)


def test_moving_endpoint_is_not_a_homotopy():
    H = ExprHomotopy(PLANE, "P", parse_expr("[beta(x0), beta(x1)]", 2, (2,)))
    with pytest.raises(BoundaryMismatch):
        check_homotopy(H)


def test_associator_on_random_triples(rng):
    for _ in range(20):
        p = rng.uniform(-2.5, 2.5, (4, 2))
        rho = straight_line(PLANE, "P", p[0], p[1])
        tau = straight_line(PLANE, "P", p[1], p[2])
        gamma = straight_line(PLANE, "P", p[2], p[3])
        H = associator(gamma, tau, rho)
        assert certify_thin(H, grid=32).thin
        assert path_distance(H.gamma0, concat(gamma, concat(tau, rho))) <= 1e-12
        assert path_distance(H.gamma1, concat(concat(gamma, tau), rho)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_concat_is_continuous_at_the_join(t, a, b):
    tau = straight_line(PLANE, "P", [a, b], [0.0, 0.0])
    gamma = straight_line(PLANE, "P", [0.0, 0.0], [b, a])
    c = concat(gamma, tau)
    np.testing.assert_allclose(c(0.5), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(c(t / 2), tau(t), atol=1e-12)
