"""Recursive-descent parser.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = NUMBER | "pi" | INPUT | call | "(" expr ")" | bracket ;
    call    = NAME "(" expr { "," expr } ")" ;
    bracket = "[" expr { "," expr } "]"            (* vector *)
            | "[" bracket { "," bracket } "]" ;    (* matrix, row-major *)
    INPUT   = "x" DIGITS ;

``^`` is right-associative and binds tighter than unary minus, so
``-x0^2`` is ``-(x0^2)``.
"""
from __future__ import annotations

import re

from .errors import ArityError, ExprSyntaxError, ShapeError
from .nodes import (BinOp, Call, Const, CONSTANTS, MatrixLit, Neg, Num, Var,
                    VectorLit, is_known_function)

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),\[\]])
""", re.VERBOSE)

_INPUT = re.compile(r"x(\d+)$")
_ATOM_START = ("number", "name", "(", "[", "-")


def tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            tokens.append((text if kind == "op" else kind, text, pos))
        pos = m.end()
    tokens.append(("eof", "", len(src)))
    return tokens


class Parser:
    def __init__(self, src: str, arity: int):
        self.src = src
        self.arity = arity
        self.tokens = tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        if self.tok[0] != kind:
            self.fail(f"unexpected {self.describe()}", (kind,))
        return self.advance()

    def describe(self):
        kind, text, _ = self.tok
        return "end of input" if kind == "eof" else repr(text)

    def fail(self, message, expected):
        raise ExprSyntaxError(message, self.tok[2], expected)

    def parse(self):
        node = self.expr()
        if self.tok[0] != "eof":
            self.fail(f"unexpected {self.describe()}", ("+", "-", "*", "/", "^", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] in ("+", "-"):
            op = self.advance()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] in ("*", "/"):
            op = self.advance()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "-":
            self.advance()
            return Neg(self.unary())
        if self.tok[0] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.tok
        if kind == "number":
            self.advance()
            return Num(float(text))
        if kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "[":
            return self.bracket()
        if kind == "name":
            self.advance()
            if self.tok[0] == "(":
                if not is_known_function(text):
                    raise ExprSyntaxError(f"unknown function {text!r}", pos)
                return self.call(text)
            if text in CONSTANTS:
                return Const(text)
            m = _INPUT.match(text)
            if m is None:
                raise ArityError(f"unknown input name {text!r}", pos)
            index = int(m.group(1))
            if index >= self.arity:
                raise ArityError(f"input {text!r} exceeds arity {self.arity}", pos)
            return Var(index)
        self.fail(f"unexpected {self.describe()}", _ATOM_START)

    def call(self, name):
        self.expect("(")
        args = [self.expr()]
        while self.tok[0] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        return Call(name, tuple(args))

    def bracket(self):
        self.expect("[")
        if self.tok[0] == "[":
            rows = [self.row()]
            while self.tok[0] == ",":
                self.advance()
                rows.append(self.row())
            self.expect("]")
            if len({len(r) for r in rows}) != 1:
                raise ShapeError("matrix literal rows have different lengths")
            return MatrixLit(tuple(rows))
        items = [self.expr()]
        while self.tok[0] == ",":
            self.advance()
            items.append(self.expr())
        self.expect("]")
        return VectorLit(tuple(items))

    def row(self):
        if self.tok[0] != "[":
            self.fail("matrix rows must be bracketed", ("[",))
        node = self.bracket()
        if not isinstance(node, VectorLit):
            self.fail("matrix literals nest only two levels", ("number", "name"))
        return node.items


def parse(src: str, arity: int):
    return Parser(src, arity).parse()
