"""A small closed-form expression language for smooth functions.

Expressions describe maps ``R^k -> R``, ``R^k -> R^n`` or
``R^k -> R^(n x m)`` over named inputs ``x0 .. x(k-1)``.  They are parsed
once into an immutable tree which can be evaluated (vectorized over many
points), differentiated symbolically and composed by substitution.

Example::

    >>> f = parse_expr("sin(x0)*x1", arity=2)
    >>> f((math.pi / 2, 3.0))
    3.0
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .calculus import derivative, substitute
from .errors import ArityError, DomainError, ExprError, ExprSyntaxError, ShapeError
from .evaluate import evaluate_batch
from .nodes import Node, VectorLit, check_arity, shape_of, to_source
from .parser import parse

__all__ = [
    "ExprFn", "parse_expr", "evaluate", "diff", "compose", "constant",
    "ExprError", "ExprSyntaxError", "ArityError", "ShapeError", "DomainError",
    "to_source",
]

SCALAR = ()


def normalize_shape(shape) -> tuple:
    if shape is None or shape == "scalar":
        return ()
    if isinstance(shape, int):
        return (shape,)
    return tuple(int(s) for s in shape)


@dataclass(frozen=True)
class ExprFn:
    """A parsed smooth function with a fixed input count and value shape."""

    node: Node
    arity: int
    shape: tuple = SCALAR

    def __post_init__(self):
        check_arity(self.node, self.arity)
        actual = shape_of(self.node)
        if actual != tuple(self.shape):
            raise ShapeError(f"expression has shape {actual}, declared {tuple(self.shape)}")

    @property
    def source(self) -> str:
        return to_source(self.node)

    def __str__(self):
        return self.source

    def __call__(self, point):
        return evaluate(self, point)

    def eval_batch(self, points, strict=True):
        """Evaluate at each row of ``points``; returns ``(N, *shape)``."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, self.arity) if self.arity == 1 else points[None, :]
        if points.shape[1] != self.arity:
            raise ArityError(f"expected {self.arity} inputs, got {points.shape[1]}")
        return evaluate_batch(self.node, points, strict=strict)

    def diff(self, index: int) -> "ExprFn":
        return diff(self, index)

    @cached_property
    def gradient(self) -> tuple:
        return tuple(diff(self, i) for i in range(self.arity))

    def components(self) -> tuple:
        """Scalar component trees of a vector-valued function."""
        if len(self.shape) != 1:
            raise ShapeError("components() needs a vector-valued function")
        if isinstance(self.node, VectorLit):
            return self.node.items
        from .calculus import call, num
        return tuple(call("entry", self.node, num(i)) for i in range(self.shape[0]))


def parse_expr(src: str, arity: int, shape=SCALAR) -> ExprFn:
    """Parse ``src`` into an ExprFn of the given arity and value shape."""
    return ExprFn(parse(src, arity), arity, normalize_shape(shape))


def evaluate(f: ExprFn, point):
    """Value of ``f`` at a single point (float for scalars, array otherwise)."""
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape[0] != f.arity:
        raise ArityError(f"expected {f.arity} inputs, got {point.shape[0]}")
    out = evaluate_batch(f.node, point[None, :])[0]
    return float(out) if f.shape == () else out


def diff(f: ExprFn, index: int) -> ExprFn:
    """Exact partial derivative with respect to input ``index``."""
    if not 0 <= index < f.arity:
        raise ArityError(f"input index {index} out of range for arity {f.arity}")
    return ExprFn(derivative(f.node, index), f.arity, f.shape)


def compose(f: ExprFn, inner, arity: int) -> ExprFn:
    """``f(inner(y))``: substitute scalar trees/ExprFns for f's inputs.

    ``inner`` is a sequence of scalar ExprFns (or nodes) of the new arity, or a
    single vector-valued ExprFn with ``f.arity`` components.
    """
    if isinstance(inner, ExprFn):
        if inner.arity != arity:
            raise ArityError("inner function arity mismatch")
        parts = inner.components()
    else:
        parts = []
        for g in inner:
            if isinstance(g, ExprFn):
                if g.shape != ():
                    raise ShapeError("substituted inputs must be scalar")
                if g.arity != arity:
                    raise ArityError("inner function arity mismatch")
                parts.append(g.node)
            else:
                parts.append(g)
    if len(parts) != f.arity:
        raise ArityError(f"need {f.arity} substitutions, got {len(parts)}")
    return ExprFn(substitute(f.node, tuple(parts)), arity, f.shape)


def constant(value, arity: int) -> ExprFn:
    """Constant ExprFn holding a literal scalar, vector or matrix value."""
    from .calculus import num
    from .nodes import MatrixLit
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        node = num(float(value))
    elif value.ndim == 1:
        node = VectorLit(tuple(num(v) for v in value))
    else:
        node = MatrixLit(tuple(tuple(num(v) for v in row) for row in value))
    return ExprFn(node, arity, value.shape)
