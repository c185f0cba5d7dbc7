"""Matrix Lie groups U(1) (as SO(2)), SO(2), SO(3), SU(2), GL(n) and their algebras.

Group and algebra elements are thin immutable wrappers around numpy
matrices.  ``exp_alg``/``log_grp`` use closed forms for the compact groups
and scipy's scaling-and-squaring routines for GL(n).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import re

import numpy as np
import scipy.linalg

MEMBERSHIP_TOL = 1e-9
PROJECT_TOL = 1e-12
CUT_LOCUS_MARGIN = 1e-6


class GroupMismatch(ValueError):
    pass


class CutLocus(ValueError):
    pass


class MembershipError(ValueError):
    pass


@dataclass(frozen=True)
class LieGroupSpec:
    name: str
    dim_matrix: int
    dim_algebra: int

    @property
    def kind(self) -> str:
        if self.name in ("U1", "SO2"):
            return "SO2"
        if self.name.startswith("GL"):
            return "GL"
        return self.name

    @property
    def is_complex(self) -> bool:
        return self.name == "SU2"

    @property
    def dtype(self):
        return complex if self.is_complex else float

    @cached_property
    def basis(self) -> np.ndarray:
        """Algebra basis, shape (dim_algebra, n, n)."""
        n = self.dim_matrix
        if self.kind == "SO2":
            return np.array([[[0.0, -1.0], [1.0, 0.0]]])
        if self.kind == "SO3":
            return np.array([hat3(e) for e in np.eye(3)])
        if self.kind == "SU2":
            pauli = [np.array([[0, 1], [1, 0]], complex),
                     np.array([[0, -1j], [1j, 0]], complex),
                     np.array([[1, 0], [0, -1]], complex)]
            return np.array([0.5j * p for p in pauli])
        out = np.zeros((n * n, n, n))
        for k in range(n * n):
            out[k].flat[k] = 1.0
        return out

    def identity(self) -> "GroupElement":
        return GroupElement(self, np.eye(self.dim_matrix, dtype=self.dtype))

    def __str__(self):
        return self.name


_GL = re.compile(r"GL(\d+)$")


def group(name: str) -> LieGroupSpec:
    """Look up a group by its config name ("U1", "SO2", "SO3", "SU2", "GLn")."""
    if name in ("U1", "SO2"):
        return LieGroupSpec(name, 2, 1)
    if name == "SO3":
        return LieGroupSpec(name, 3, 3)
    if name == "SU2":
        return LieGroupSpec(name, 2, 3)
    m = _GL.match(name)
    if m and int(m.group(1)) >= 1:
        n = int(m.group(1))
        return LieGroupSpec(name, n, n * n)
    raise ValueError(f"unknown group {name!r}")


def hat3(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def group_residual(spec: LieGroupSpec, m: np.ndarray) -> float:
    n = spec.dim_matrix
    if m.shape != (n, n) or not np.all(np.isfinite(m)):
        return np.inf
    if spec.kind == "GL":
        return 0.0 if abs(np.linalg.det(m)) > 1e-300 else np.inf
    eye = np.eye(n)
    r = np.linalg.norm(m.conj().T @ m - eye)
    return r + abs(np.linalg.det(m) - 1.0)


def algebra_residual(spec: LieGroupSpec, m: np.ndarray) -> float:
    n = spec.dim_matrix
    if m.shape != (n, n) or not np.all(np.isfinite(m)):
        return np.inf
    if spec.kind == "GL":
        return 0.0
    r = np.linalg.norm(m + m.conj().T)
    if spec.kind == "SU2":
        r += abs(np.trace(m))
    return r


def project(spec: LieGroupSpec, m: np.ndarray) -> np.ndarray:
    """Nearest group element via polar decomposition (identity for GL)."""
    if spec.kind == "GL":
        return m
    u, _, vh = np.linalg.svd(m)
    q = u @ vh
    if spec.kind == "SU2":
        q = q / np.sqrt(np.linalg.det(q))
    elif np.linalg.det(q) < 0:
        u[:, -1] *= -1
        q = u @ vh
    return q


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: LieGroupSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=self.group.dtype)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def checked(self, tol=MEMBERSHIP_TOL) -> "GroupElement":
        r = group_residual(self.group, self.matrix)
        if r > tol:
            raise MembershipError(f"not in {self.group.name}: residual {r:.3g}")
        return self

    @property
    def residual(self) -> float:
        return group_residual(self.group, self.matrix)

    def __matmul__(self, other):
        return mul(self, other)

    def inverse(self) -> "GroupElement":
        return inverse(self)

    def __repr__(self):
        return f"GroupElement({self.group.name}, {self.matrix.tolist()})"


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    group: LieGroupSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=self.group.dtype)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def residual(self) -> float:
        return algebra_residual(self.group, self.matrix)

    def __add__(self, other):
        _same(self, other)
        return AlgebraElement(self.group, self.matrix + other.matrix)

    def __sub__(self, other):
        _same(self, other)
        return AlgebraElement(self.group, self.matrix - other.matrix)

    def __mul__(self, scalar):
        return AlgebraElement(self.group, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return AlgebraElement(self.group, -self.matrix)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def coordinates(self) -> np.ndarray:
        return algebra_coordinates(self.group, self.matrix)

    def __repr__(self):
        return f"AlgebraElement({self.group.name}, {self.matrix.tolist()})"


def _same(a, b):
    if a.group != b.group:
        raise GroupMismatch(f"{a.group.name} vs {b.group.name}")


def element(spec: LieGroupSpec, matrix) -> GroupElement:
    return GroupElement(spec, matrix)


def mul(a: GroupElement, b: GroupElement) -> GroupElement:
    _same(a, b)
    m = a.matrix @ b.matrix
    if group_residual(a.group, m) > PROJECT_TOL:
        m = project(a.group, m)
    return GroupElement(a.group, m)


def inverse(g: GroupElement) -> GroupElement:
    if g.group.kind == "GL":
        return GroupElement(g.group, np.linalg.inv(g.matrix))
    return GroupElement(g.group, g.matrix.conj().T)


def adjoint(g: GroupElement, x: AlgebraElement) -> AlgebraElement:
    """g X g^-1."""
    _same(g, x)
    return AlgebraElement(g.group, g.matrix @ x.matrix @ inverse(g).matrix)


def dist(a: GroupElement, b: GroupElement) -> float:
    """Frobenius norm of a^-1 b - I."""
    _same(a, b)
    d = inverse(a).matrix @ b.matrix
    return float(np.linalg.norm(d - np.eye(a.group.dim_matrix)))


def bracket(x, y):
    return x @ y - y @ x


def exp_alg(x: AlgebraElement) -> GroupElement:
    return GroupElement(x.group, exp_matrices(x.group, x.matrix))


def log_grp(g: GroupElement) -> AlgebraElement:
    return AlgebraElement(g.group, log_matrix(g.group, g.matrix))


def exp_matrices(spec: LieGroupSpec, x: np.ndarray) -> np.ndarray:
    """Matrix exponential of algebra matrices, vectorized over leading axes."""
    x = np.asarray(x)
    kind = spec.kind
    if kind == "SO2":
        theta = x[..., 1, 0]
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    if kind == "SO3":
        w = np.stack([x[..., 2, 1], x[..., 0, 2], x[..., 1, 0]], -1)
        theta = np.linalg.norm(w, axis=-1)
        small = theta < 1e-4
        t2 = theta * theta
        safe = np.where(small, 1.0, theta)
        a = np.where(small, 1 - t2 / 6 + t2 * t2 / 120, np.sin(safe) / safe)
        b = np.where(small, 0.5 - t2 / 24 + t2 * t2 / 720, (1 - np.cos(safe)) / (safe * safe))
        eye = np.eye(3)
        return eye + a[..., None, None] * x + b[..., None, None] * (x @ x)
    if kind == "SU2":
        # X^2 = -det(X) I for traceless anti-Hermitian 2x2
        rho = np.sqrt(np.abs(np.linalg.det(x)))
        small = rho < 1e-4
        safe = np.where(small, 1.0, rho)
        r2 = rho * rho
        sinc = np.where(small, 1 - r2 / 6 + r2 * r2 / 120, np.sin(safe) / safe)
        eye = np.eye(2, dtype=complex)
        return np.cos(rho)[..., None, None] * eye + sinc[..., None, None] * x
    return scipy.linalg.expm(x)


def log_matrix(spec: LieGroupSpec, g: np.ndarray) -> np.ndarray:
    kind = spec.kind
    limit = np.pi - CUT_LOCUS_MARGIN
    if kind == "SO2":
        theta = np.arctan2(g[1, 0], g[0, 0])
        if abs(theta) > limit:
            raise CutLocus(f"rotation angle {theta:.9f} too close to pi")
        return theta * spec.basis[0]
    if kind == "SO3":
        c = np.clip((np.trace(g) - 1) / 2, -1.0, 1.0)
        theta = np.arccos(c)
        if theta > limit:
            raise CutLocus(f"rotation angle {theta:.9f} too close to pi")
        skew = (g - g.T) / 2
        factor = 1 + theta ** 2 / 6 + 7 * theta ** 4 / 360 if theta < 1e-4 else theta / np.sin(theta)
        return factor * skew
    if kind == "SU2":
        c = np.clip(np.real(np.trace(g)) / 2, -1.0, 1.0)
        rho = np.arccos(c)
        if rho > limit:
            raise CutLocus(f"SU(2) angle {rho:.9f} too close to pi")
        factor = 1 + rho ** 2 / 6 if rho < 1e-4 else rho / np.sin(rho)
        x = factor * (g - c * np.eye(2))
        # remove round-off so the result is exactly in su(2)
        x = (x - x.conj().T) / 2
        return x - np.trace(x) / 2 * np.eye(2)
    out = scipy.linalg.logm(g)
    if np.iscomplexobj(out):
        if np.max(np.abs(out.imag)) > 1e-9:
            raise CutLocus("matrix has no real principal logarithm")
        out = out.real
    return out


def rotation_angle(g: GroupElement) -> float:
    """Signed angle in (-pi, pi] of an SO(2)/U(1) element."""
    if g.group.kind != "SO2":
        raise GroupMismatch("rotation_angle needs SO2/U1")
    return float(np.arctan2(g.matrix[1, 0], g.matrix[0, 0]))


def algebra_coordinates(spec: LieGroupSpec, x: np.ndarray) -> np.ndarray:
    """Real coordinates of an algebra matrix in ``spec.basis``."""
    kind = spec.kind
    if kind == "SO2":
        return np.array([np.real(x[1, 0])])
    if kind == "SO3":
        return vee3(np.real(x))
    if kind == "SU2":
        b = spec.basis
        return np.real(np.einsum("kij,ij->k", b.conj(), x) / np.einsum("kij,kij->k", b.conj(), b))
    return np.real(x).reshape(-1)


def from_coordinates(spec: LieGroupSpec, coords) -> AlgebraElement:
    coords = np.asarray(coords, dtype=float)
    return AlgebraElement(spec, np.tensordot(coords, spec.basis, axes=1))


def random_algebra(spec: LieGroupSpec, rng, scale=1.0) -> AlgebraElement:
    return from_coordinates(spec, scale * rng.standard_normal(spec.dim_algebra))


def random_element(spec: LieGroupSpec, rng, scale=1.0) -> GroupElement:
    return exp_alg(random_algebra(spec, rng, scale))
