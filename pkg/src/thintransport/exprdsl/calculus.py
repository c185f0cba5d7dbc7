"""Symbolic partial derivatives and substitution on expression trees."""
from __future__ import annotations

from functools import lru_cache

from .nodes import (BinOp, Call, Const, MatrixLit, Neg, Node, Num, Var,
                    VectorLit, beta_order, shape_of)

ZERO = Num(0.0)
ONE = Num(1.0)


def num(value: float) -> Node:
    """Numeric literal; negative values become Neg so the tree re-parses."""
    value = float(value)
    return Num(value) if value >= 0 else Neg(Num(-value))


def zero_of(shape) -> Node:
    if shape == ():
        return ZERO
    if len(shape) == 1:
        return VectorLit((ZERO,) * shape[0])
    return MatrixLit(tuple((ZERO,) * shape[1] for _ in range(shape[0])))


def is_zero(node: Node) -> bool:
    if isinstance(node, Num):
        return node.value == 0.0
    if isinstance(node, Neg):
        return is_zero(node.arg)
    if isinstance(node, VectorLit):
        return all(is_zero(x) for x in node.items)
    if isinstance(node, MatrixLit):
        return all(is_zero(x) for row in node.rows for x in row)
    return False


def is_one(node: Node) -> bool:
    return isinstance(node, Num) and node.value == 1.0


def neg(a):
    if is_zero(a):
        return a
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a, b):
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    return BinOp("+", a, b)


def sub(a, b):
    if is_zero(b):
        return a
    if is_zero(a):
        return neg(b)
    return BinOp("-", a, b)


def mul(a, b):
    if is_zero(a) or is_zero(b):
        return zero_of(shape_of(BinOp("*", a, b)))
    if is_one(a):
        return b
    if is_one(b):
        return a
    return BinOp("*", a, b)


def div(a, b):
    if is_zero(a):
        return a
    if is_one(b):
        return a
    return BinOp("/", a, b)


def power(a, b):
    return BinOp("^", a, b)


def call(name, *args):
    return Call(name, tuple(args))


def has_var(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, (Num, Const)):
        return False
    if isinstance(node, Neg):
        return has_var(node.arg)
    if isinstance(node, BinOp):
        return has_var(node.left) or has_var(node.right)
    if isinstance(node, Call):
        return any(has_var(a) for a in node.args)
    if isinstance(node, VectorLit):
        return any(has_var(a) for a in node.items)
    if isinstance(node, MatrixLit):
        return any(has_var(a) for row in node.rows for a in row)
    raise TypeError(node)


@lru_cache(maxsize=65536)
def derivative(node: Node, k: int) -> Node:
    """Partial derivative of ``node`` with respect to input ``x{k}``."""
    if isinstance(node, (Num, Const)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == k else ZERO
    if not has_var(node):
        return zero_of(shape_of(node))
    d = lambda n: derivative(n, k)  # noqa: E731
    if isinstance(node, Neg):
        return neg(d(node.arg))
    if isinstance(node, VectorLit):
        return VectorLit(tuple(d(x) for x in node.items))
    if isinstance(node, MatrixLit):
        return MatrixLit(tuple(tuple(d(x) for x in row) for row in node.rows))
    if isinstance(node, BinOp):
        return _d_binop(node, d)
    if isinstance(node, Call):
        return _d_call(node, d)
    raise TypeError(node)


def _d_binop(node, d):
    a, b, op = node.left, node.right, node.op
    if op == "+":
        return add(d(a), d(b))
    if op == "-":
        return sub(d(a), d(b))
    if op == "*":
        return add(mul(d(a), b), mul(a, d(b)))
    if op == "/":
        # (a/b)' = a'/b - a b' / b^2
        return sub(div(d(a), b), div(mul(a, d(b)), power(b, Num(2.0))))
    if op == "^":
        if not has_var(b):
            if isinstance(b, Num):
                lowered = num(b.value - 1.0)
            else:
                lowered = sub(b, ONE)
            return mul(mul(b, power(a, lowered)), d(a))
        # a^b (b' log a + b a'/a)
        inner = add(mul(d(b), call("log", a)), div(mul(b, d(a)), a))
        return mul(node, inner)
    raise ValueError(op)


def _d_call(node, d):
    name, args = node.name, node.args
    if name == "entry":
        return Call("entry", (d(args[0]),) + args[1:])
    if name == "block":
        return Call("block", tuple(d(x) for x in args))
    u = args[0]
    du = d(u)
    k = beta_order(name)
    if k is not None:
        return mul(call(f"beta{k + 1}", u), du)
    if name == "sin":
        return mul(call("cos", u), du)
    if name == "cos":
        return neg(mul(call("sin", u), du))
    if name == "tan":
        return div(du, power(call("cos", u), Num(2.0)))
    if name == "exp":
        return mul(node, du)
    if name == "log":
        return div(du, u)
    if name == "sqrt":
        return div(du, mul(Num(2.0), node))
    if name == "expm":
        # Frechet derivative via the block identity
        # expm([[M, dM], [0, M]]) = [[expm M, D], [0, expm M]]
        if is_zero(du):
            return du
        z = zero_of(shape_of(u))
        return call("topright", call("expm", call("block", u, du, z, u)))
    if name == "inv":
        return neg(mul(mul(node, du), node))
    if name == "topright":
        return call("topright", du)
    raise ValueError(f"no derivative rule for {name}")


def substitute(node: Node, replacements) -> Node:
    """Replace each input ``x{i}`` by ``replacements[i]`` (scalar trees)."""
    if isinstance(node, Var):
        return replacements[node.index]
    if isinstance(node, (Num, Const)):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, replacements))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, replacements),
                     substitute(node.right, replacements))
    if isinstance(node, Call):
        if node.name == "entry":
            return Call("entry", (substitute(node.args[0], replacements),) + node.args[1:])
        return Call(node.name, tuple(substitute(a, replacements) for a in node.args))
    if isinstance(node, VectorLit):
        return VectorLit(tuple(substitute(a, replacements) for a in node.items))
    if isinstance(node, MatrixLit):
        return MatrixLit(tuple(tuple(substitute(a, replacements) for a in row)
                               for row in node.rows))
    raise TypeError(node)
