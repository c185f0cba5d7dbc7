"""Vectorized numeric evaluation of expression trees.

Every node evaluates to an array with a leading batch axis of length N:
scalars give ``(N,)``, vectors ``(N, n)``, matrices ``(N, n, m)``.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .. import cutoff
from .errors import DomainError
from .nodes import (BinOp, Call, Const, CONSTANTS, MatrixLit, Neg, Num, Var,
                    VectorLit, beta_order, int_arg, shape_of)


class _Ctx:
    def __init__(self, points, strict):
        self.x = points
        self.n = points.shape[0]
        self.strict = strict
        # rows that hit a domain violation when not strict
        self.bad = np.zeros(self.n, dtype=bool)

    def flag(self, mask, what):
        if np.any(mask):
            if self.strict:
                idx = int(np.flatnonzero(mask)[0])
                raise DomainError(f"{what} at point {self.x[idx].tolist()}")
            self.bad |= mask


def evaluate_batch(node, points, strict=True):
    """Evaluate ``node`` at each row of ``points`` (shape (N, arity)).

    With ``strict=False`` rows with domain violations come back as NaN
    instead of raising DomainError.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ctx = _Ctx(points, strict)
    with np.errstate(all="ignore"):
        out = _ev(node, ctx)
        out = np.asarray(out)
        if out.dtype.kind == "c" and np.all(out.imag == 0):
            out = out.real
        finite = np.isfinite(out).reshape(ctx.n, -1).all(axis=1)
    ctx.flag(~finite & ~ctx.bad, "non-finite value")
    if ctx.bad.any():
        out = out.astype(float if out.dtype.kind != "c" else complex)
        out[ctx.bad] = np.nan
    return out


def _full(ctx, value):
    return np.full(ctx.n, float(value))


def _ev(node, ctx):
    if isinstance(node, Num):
        return _full(ctx, node.value)
    if isinstance(node, Const):
        return _full(ctx, CONSTANTS[node.name])
    if isinstance(node, Var):
        return ctx.x[:, node.index].copy()
    if isinstance(node, Neg):
        return -_ev(node.arg, ctx)
    if isinstance(node, VectorLit):
        return np.stack([_ev(x, ctx) for x in node.items], axis=-1)
    if isinstance(node, MatrixLit):
        rows = [np.stack([_ev(x, ctx) for x in row], axis=-1) for row in node.rows]
        return np.stack(rows, axis=-2)
    if isinstance(node, BinOp):
        return _binop(node, ctx)
    if isinstance(node, Call):
        return _call(node, ctx)
    raise TypeError(f"not an expression node: {node!r}")


def _binop(node, ctx):
    a = _ev(node.left, ctx)
    b = _ev(node.right, ctx)
    sa, sb = shape_of(node.left), shape_of(node.right)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        if sa == ():
            return a.reshape((-1,) + (1,) * len(sb)) * b
        if sb == ():
            return a * b.reshape((-1,) + (1,) * len(sa))
        if len(sb) == 1:
            return np.einsum("nij,nj->ni", a, b)
        return a @ b
    if op == "/":
        ctx.flag(b == 0, "division by zero")
        return a / b.reshape((-1,) + (1,) * len(sa))
    if op == "^":
        return _power(a, b, node, ctx)
    raise ValueError(op)


def _power(a, b, node, ctx):
    integral = b == np.round(b)
    ctx.flag((a < 0) & ~integral, "negative base with non-integer exponent")
    ctx.flag((a == 0) & (b < 0), "zero raised to a negative power")
    return np.power(a, b)


def _call(node, ctx):
    name = node.name
    if name == "entry":
        m = _ev(node.args[0], ctx)
        idx = tuple(int_arg(a) for a in node.args[1:])
        return m[(slice(None),) + idx].copy()
    if name == "block":
        a, b, c, d = (_ev(x, ctx) for x in node.args)
        top = np.concatenate([a, b], axis=-1)
        bottom = np.concatenate([c, d], axis=-1)
        return np.concatenate([top, bottom], axis=-2)
    arg = _ev(node.args[0], ctx)
    k = beta_order(name)
    if k is not None:
        return cutoff.beta_derivative(k, arg)
    if name == "sin":
        return np.sin(arg)
    if name == "cos":
        return np.cos(arg)
    if name == "tan":
        ctx.flag(np.cos(arg) == 0, "tan pole")
        return np.tan(arg)
    if name == "exp":
        return np.exp(arg)
    if name == "log":
        ctx.flag(arg <= 0, "log of non-positive value")
        return np.log(arg)
    if name == "sqrt":
        ctx.flag(arg < 0, "sqrt of negative value")
        return np.sqrt(np.abs(arg))
    if name == "expm":
        good = np.isfinite(arg).reshape(ctx.n, -1).all(axis=1)
        out = np.full_like(arg, np.nan)
        if good.any():
            out[good] = scipy.linalg.expm(arg[good])
        return out
    if name == "inv":
        det = np.linalg.det(arg)
        singular = ~np.isfinite(det) | (det == 0)
        ctx.flag(singular, "inverse of a singular matrix")
        safe = arg.copy()
        safe[singular] = np.eye(arg.shape[-1])
        return np.linalg.inv(safe)
    if name == "topright":
        h = arg.shape[-1] // 2
        return arg[:, :h, h:].copy()
    raise ValueError(f"unknown function {name}")
