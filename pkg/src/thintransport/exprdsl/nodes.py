"""AST nodes, shape inference and printing for the expression language.

Shapes are tuples in numpy style: ``()`` scalar, ``(n,)`` vector,
``(n, m)`` matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import re

from .errors import ArityError, ShapeError

SCALAR_FUNCS = ("sin", "cos", "tan", "exp", "log", "sqrt")
MATRIX_FUNCS = ("expm", "inv", "topright")
BETA_NAME = re.compile(r"beta(\d*)$")


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    index: int


@dataclass(frozen=True)
class Const(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple


@dataclass(frozen=True)
class VectorLit(Node):
    items: tuple


@dataclass(frozen=True)
class MatrixLit(Node):
    rows: tuple


CONSTANTS = {"pi": 3.141592653589793}


def beta_order(name: str):
    """Derivative order encoded in a beta function name, or None."""
    m = BETA_NAME.match(name)
    if m is None:
        return None
    return int(m.group(1)) if m.group(1) else 0


def is_known_function(name: str) -> bool:
    return (name in SCALAR_FUNCS or name in MATRIX_FUNCS
            or name in ("entry", "block") or beta_order(name) is not None)


def int_arg(node: Node) -> int:
    if not isinstance(node, Num) or node.value != int(node.value) or node.value < 0:
        raise ShapeError("entry() indices must be non-negative integer literals")
    return int(node.value)


@lru_cache(maxsize=65536)
def shape_of(node: Node) -> tuple:
    """Infer the value shape of ``node``; raises ShapeError on mismatch."""
    if isinstance(node, (Num, Var, Const)):
        return ()
    if isinstance(node, Neg):
        return shape_of(node.arg)
    if isinstance(node, VectorLit):
        for item in node.items:
            if shape_of(item) != ():
                raise ShapeError("vector literal entries must be scalars")
        return (len(node.items),)
    if isinstance(node, MatrixLit):
        ncols = len(node.rows[0])
        for row in node.rows:
            if len(row) != ncols:
                raise ShapeError("matrix literal rows have different lengths")
            for item in row:
                if shape_of(item) != ():
                    raise ShapeError("matrix literal entries must be scalars")
        return (len(node.rows), ncols)
    if isinstance(node, BinOp):
        return _binop_shape(node.op, shape_of(node.left), shape_of(node.right))
    if isinstance(node, Call):
        return _call_shape(node)
    raise TypeError(f"not an expression node: {node!r}")


def _binop_shape(op, a, b):
    if op in "+-":
        if a != b:
            raise ShapeError(f"cannot apply '{op}' to shapes {a} and {b}")
        return a
    if op == "*":
        if a == ():
            return b
        if b == ():
            return a
        if len(a) == 2 and len(b) == 2:
            if a[1] != b[0]:
                raise ShapeError(f"matrix product of {a} and {b}")
            return (a[0], b[1])
        if len(a) == 2 and len(b) == 1:
            if a[1] != b[0]:
                raise ShapeError(f"matrix-vector product of {a} and {b}")
            return (a[0],)
        raise ShapeError(f"cannot multiply shapes {a} and {b}")
    if op == "/":
        if b != ():
            raise ShapeError("divisor must be scalar")
        return a
    if op == "^":
        if a != () or b != ():
            raise ShapeError("'^' is defined for scalars only")
        return ()
    raise ValueError(op)


def _call_shape(node: Call):
    name, args = node.name, node.args
    shapes = [shape_of(a) for a in args]
    if name in SCALAR_FUNCS or beta_order(name) is not None:
        _nargs(node, 1)
        if shapes[0] != ():
            raise ShapeError(f"{name}() takes a scalar argument")
        return ()
    if name in ("expm", "inv"):
        _nargs(node, 1)
        s = shapes[0]
        if len(s) != 2 or s[0] != s[1]:
            raise ShapeError(f"{name}() needs a square matrix, got {s}")
        return s
    if name == "topright":
        _nargs(node, 1)
        s = shapes[0]
        if len(s) != 2 or s[0] != s[1] or s[0] % 2:
            raise ShapeError(f"topright() needs an even square matrix, got {s}")
        half = s[0] // 2
        return (half, half)
    if name == "entry":
        s = shapes[0]
        if len(args) != len(s) + 1 or len(s) == 0:
            raise ShapeError(f"entry() needs one index per axis of shape {s}")
        idx = [int_arg(a) for a in args[1:]]
        if any(i >= n for i, n in zip(idx, s)):
            raise ShapeError(f"entry{tuple(idx)} out of range for shape {s}")
        return ()
    if name == "block":
        _nargs(node, 4)
        a, b, c, d = shapes
        if any(len(s) != 2 for s in shapes):
            raise ShapeError("block() takes four matrices")
        if a[0] != b[0] or c[0] != d[0] or a[1] != c[1] or b[1] != d[1]:
            raise ShapeError(f"block() shapes do not tile: {shapes}")
        return (a[0] + c[0], a[1] + b[1])
    raise ShapeError(f"unknown function {name}()")


def _nargs(node, n):
    if len(node.args) != n:
        raise ShapeError(f"{node.name}() takes {n} argument(s), got {len(node.args)}")


def max_var(node: Node) -> int:
    """Largest input index referenced, -1 if none."""
    if isinstance(node, Var):
        return node.index
    return max((max_var(c) for c in children(node)), default=-1)


def check_arity(node: Node, arity: int):
    top = max_var(node)
    if top >= arity:
        raise ArityError(f"input x{top} used but arity is {arity}")


def children(node: Node):
    if isinstance(node, Neg):
        return (node.arg,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, VectorLit):
        return node.items
    if isinstance(node, MatrixLit):
        return tuple(x for row in node.rows for x in row)
    return ()


def to_source(node: Node) -> str:
    """Print ``node`` so that parsing the text gives back the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, VectorLit):
        return "[" + ", ".join(to_source(x) for x in node.items) + "]"
    if isinstance(node, MatrixLit):
        rows = ("[" + ", ".join(to_source(x) for x in row) + "]" for row in node.rows)
        return "[" + ", ".join(rows) + "]"
    raise TypeError(f"not an expression node: {node!r}")
