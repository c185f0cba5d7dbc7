import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from thintransport import liegroup as L

U1, SO3, SU2, GL2 = (L.group(n) for n in ("U1", "SO3", "SU2", "GL2"))
GROUPS = [U1, L.group("SO2"), SO3, SU2, GL2]


def rot(t):
    return L.GroupElement(U1, [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def test_group_dimensions():
    assert (U1.dim_matrix, U1.dim_algebra) == (2, 1)
    assert (SO3.dim_matrix, SO3.dim_algebra) == (3, 3)
    assert (SU2.dim_matrix, SU2.dim_algebra) == (2, 3)
    assert (GL2.dim_matrix, GL2.dim_algebra) == (2, 4)
    with pytest.raises(ValueError):
        L.group("E8")


@pytest.mark.parametrize("spec", GROUPS, ids=lambda s: s.name)
def test_identity_is_neutral(spec, rng):
    g = L.random_element(spec, rng)
    np.testing.assert_array_equal(L.mul(spec.identity(), g).matrix, g.matrix)


@pytest.mark.parametrize("spec", GROUPS, ids=lambda s: s.name)
def test_inverse(spec, rng):
    g = L.random_element(spec, rng)
    assert np.linalg.norm(L.mul(g, L.inverse(g)).matrix - np.eye(spec.dim_matrix)) <= 1e-12


def test_rotations_add():
    a, b = 0.7, 2.1
    np.testing.assert_allclose(L.mul(rot(a), rot(b)).matrix, rot(a + b).matrix, atol=1e-15)


def test_mismatched_groups():
    with pytest.raises(L.GroupMismatch):
        L.mul(U1.identity(), SO3.identity())


@pytest.mark.parametrize("spec", GROUPS, ids=lambda s: s.name)
def test_exp_of_zero(spec):
    zero = L.AlgebraElement(spec, np.zeros((spec.dim_matrix,) * 2))
    np.testing.assert_array_equal(L.exp_alg(zero).matrix, np.eye(spec.dim_matrix))


def test_quarter_turn():
    g = L.exp_alg(L.from_coordinates(U1, [math.pi / 2]))
    np.testing.assert_allclose(g.matrix, [[0, -1], [1, 0]], atol=1e-15)


@pytest.mark.parametrize("spec", GROUPS, ids=lambda s: s.name)
def test_exp_matches_series(spec, rng):
    # oracle: truncated power series in extended precision-free form
    x = L.random_algebra(spec, rng, 0.5).matrix
    series = np.eye(spec.dim_matrix, dtype=complex)
    term = np.eye(spec.dim_matrix, dtype=complex)
    for k in range(1, 40):
        term = term @ x / k
        series = series + term
    assert np.max(np.abs(L.exp_alg(L.AlgebraElement(spec, x)).matrix - series)) <= 1e-13


@pytest.mark.parametrize("spec", GROUPS, ids=lambda s: s.name)
def test_log_inverts_exp(spec, rng):
    for _ in range(20):
        x = L.random_algebra(spec, rng, 0.4)
        back = L.log_grp(L.exp_alg(x))
        assert np.linalg.norm(back.matrix - x.matrix) <= 1e-10


def test_log_refuses_half_turn():
    with pytest.raises(L.CutLocus):
        L.log_grp(rot(math.pi))
    with pytest.raises(L.CutLocus):
        L.log_grp(L.exp_alg(L.from_coordinates(SO3, [0, 0, math.pi - 1e-8])))


def test_log_just_inside_cut_locus():
    t = math.pi - 1e-3
    assert L.algebra_coordinates(U1, L.log_grp(rot(t)).matrix)[0] == pytest.approx(t, abs=1e-12)


def test_adjoint_of_identity(rng):
    x = L.random_algebra(SO3, rng)
    np.testing.assert_array_equal(L.adjoint(SO3.identity(), x).matrix, x.matrix)


def test_adjoint_abelian(rng):
    x = L.random_algebra(U1, rng)
    np.testing.assert_allclose(L.adjoint(rot(1.3), x).matrix, x.matrix, atol=1e-15)


def test_adjoint_stays_in_algebra(rng):
    for _ in range(50):
        g, x = L.random_element(SO3, rng), L.random_algebra(SO3, rng)
        assert L.adjoint(g, x).residual <= 1e-9


def test_distance_values(rng):
    g = L.random_element(SO3, rng)
    assert L.dist(g, g) <= 1e-15
    # |R(pi/2) - I|_F = sqrt(4) = 2
    assert abs(L.dist(U1.identity(), rot(math.pi / 2)) - 2.0) <= 1e-12


@pytest.mark.parametrize("spec", [U1, SO3, SU2], ids=lambda s: s.name)
def test_distance_symmetry(spec, rng):
    for _ in range(100):
        a, b = L.random_element(spec, rng), L.random_element(spec, rng)
        assert abs(L.dist(a, b) - L.dist(b, a)) <= 1e-12


@pytest.mark.parametrize("spec", GROUPS, ids=lambda s: s.name)
def test_associativity(spec, rng):
    for _ in range(20):
        a, b, c = (L.random_element(spec, rng) for _ in range(3))
        lhs = L.mul(L.mul(a, b), c).matrix
        rhs = L.mul(a, L.mul(b, c)).matrix
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_commuting_exponentials():
    x = L.from_coordinates(U1, [0.4])
    y = L.from_coordinates(U1, [-1.9])
    assert L.dist(L.exp_alg(x + y), L.mul(L.exp_alg(x), L.exp_alg(y))) <= 1e-10
    axis = np.array([1.0, 2.0, -0.5])
    x3, y3 = L.from_coordinates(SO3, 0.3 * axis), L.from_coordinates(SO3, -1.1 * axis)
    assert L.dist(L.exp_alg(x3 + y3), L.mul(L.exp_alg(x3), L.exp_alg(y3))) <= 1e-10


@pytest.mark.parametrize("spec", [U1, SO3, SU2], ids=lambda s: s.name)
def test_membership_drift_is_bounded(spec, rng):
    g = spec.identity()
    steps = [L.random_element(spec, rng, 0.3) for _ in range(50)]
    for k in range(10_000):
        s = steps[k % 50]
        g = L.mul(g, s if k % 3 else L.inverse(s))
    assert g.residual <= 1e-9


def test_exp_batch_matches_scipy(rng):
    xs = np.array([L.random_algebra(SO3, rng, 2.0).matrix for _ in range(10)])
    for x, e in zip(xs, L.exp_matrices(SO3, xs)):
        np.testing.assert_allclose(e, scipy.linalg.expm(x), atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_so3_log_exp_property(coords):
    x = L.from_coordinates(SO3, coords)
    assert np.linalg.norm(L.log_grp(L.exp_alg(x)).matrix - x.matrix) <= 1e-10


def test_checked_membership():
    with pytest.raises(L.MembershipError):
        L.GroupElement(SO3, np.diag([1.0, 1.0, 2.0])).checked()
