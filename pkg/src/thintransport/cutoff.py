"""Smooth cutoff function used to give paths sitting instances.

``beta`` is the normalized integral of the bump
``exp(-1 / ((u - LOW) * (HIGH - u)))`` supported on ``(LOW, HIGH)``: it is
0 on ``[0, LOW]``, 1 on ``[HIGH, 1]``, smooth and non-decreasing.  Its
derivatives of every order are available in closed form because the
derivatives of the bump are the bump times a rational function.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

LOW = 0.1
HIGH = 0.9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)

# q(u) = (u - LOW)(HIGH - u), written as a polynomial in u
_Q = Polynomial([-LOW * HIGH, LOW + HIGH, -1.0])


def _bump(u):
    u = np.asarray(u, dtype=float)
    q = (u - LOW) * (HIGH - u)
    out = np.zeros_like(u)
    inside = q > 0
    out[inside] = np.exp(-1.0 / q[inside])
    return out


def _integral_from_low(u):
    """Gauss-Legendre integral of the bump over [LOW, u], u inside the support."""
    u = np.asarray(u, dtype=float)
    mid = 0.5 * (u + LOW)
    half = 0.5 * (u - LOW)
    pts = mid[..., None] + half[..., None] * _GL_NODES
    return half * (_bump(pts) @ _GL_WEIGHTS)


def _integral_to_high(u):
    u = np.asarray(u, dtype=float)
    mid = 0.5 * (u + HIGH)
    half = 0.5 * (HIGH - u)
    pts = mid[..., None] + half[..., None] * _GL_NODES
    return half * (_bump(pts) @ _GL_WEIGHTS)


_NORM = float(_integral_from_low(np.array(HIGH)))


@lru_cache(maxsize=None)
def _numerator(k: int) -> Polynomial:
    # k-th derivative of the bump is bump * P_k / q**(2k)
    if k == 0:
        return Polynomial([1.0])
    p = _numerator(k - 1)
    dq = _Q.deriv()
    j = k - 1
    return p * dq + p.deriv() * _Q * _Q - 2 * j * p * dq * _Q


def bump_derivative(k: int, u):
    """k-th derivative of the (unnormalized) bump, vectorized over ``u``."""
    u = np.asarray(u, dtype=float)
    q = (u - LOW) * (HIGH - u)
    out = np.zeros_like(u)
    inside = q > 0
    qi = q[inside]
    if k == 0:
        out[inside] = np.exp(-1.0 / qi)
        return out
    # combine exp and the q**(-2k) factor to avoid 0/0 near the support edge
    scale = np.exp(-1.0 / qi - 2 * k * np.log(qi))
    out[inside] = scale * _numerator(k)(u[inside])
    return out


def beta_values(u):
    """beta on an array; extended by 0 below LOW and 1 above HIGH."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= HIGH, 1.0, 0.0)
    inside = (u > LOW) & (u < HIGH)
    if np.any(inside):
        ui = u[inside]
        lower = ui <= 0.5
        vals = np.empty_like(ui)
        vals[lower] = _integral_from_low(ui[lower]) / _NORM
        vals[~lower] = 1.0 - _integral_to_high(ui[~lower]) / _NORM
        out[inside] = vals
    return out


def beta_derivative(k: int, u):
    """k-th derivative of beta (k = 0 gives beta itself)."""
    if k < 0:
        raise ValueError("derivative order must be non-negative")
    if k == 0:
        return beta_values(u)
    return bump_derivative(k - 1, u) / _NORM
