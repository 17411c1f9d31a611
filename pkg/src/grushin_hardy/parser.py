"""Text syntax for field expressions.

Grammar (whitespace-insensitive)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?            right-associative, constant exponent
    atom   := NUMBER | IDENT | CALL | "(" expr ")"
    CALL   := exp(e) | log(e) | bump(e[, order]) | pow(e, c) | rhoeps(c) | cplx(re, im)

Identifiers: ``x1``.., ``y1``.. (1-based), ``rho``, ``absx``, ``i``, ``pi``.
A minus sign directly in front of a number literal yields a negative constant.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass

from . import fields as F


class ParseError(ValueError):
    def __init__(self, offset: int, expected, message: str):
        self.offset = offset
        self.expected = frozenset(expected)
        self.message = message
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"{message} at offset {offset}" + (f" (expected {exp})" if exp else ""))


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, id, op, end
    text: str
    offset: int


_NUM = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_ID = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_FUNCS = {"exp", "log", "bump", "pow", "rhoeps", "cplx"}


def _tokenize(text: str):
    toks, pos = [], 0
    while pos < len(text):
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        mt = _NUM.match(text, pos)
        if mt:
            toks.append(_Tok("num", mt.group(0), pos))
            pos = mt.end()
            continue
        mt = _ID.match(text, pos)
        if mt:
            toks.append(_Tok("id", mt.group(0), pos))
            pos = mt.end()
            continue
        if ch in "+-*/^(),":
            toks.append(_Tok("op", ch, pos))
            pos += 1
            continue
        raise ParseError(pos, {"expression"}, f"unexpected character {ch!r}")
    toks.append(_Tok("end", "", len(text)))
    return toks


def _const_value(node) -> complex:
    """Fold a coordinate-free tree to a number, or raise ValueError."""
    if isinstance(node, F.Const):
        return node.value
    if isinstance(node, F.ImagUnit):
        return 1j
    if isinstance(node, F.Neg):
        return -_const_value(node.arg)
    if isinstance(node, F.Add):
        return _const_value(node.left) + _const_value(node.right)
    if isinstance(node, F.Sub):
        return _const_value(node.left) - _const_value(node.right)
    if isinstance(node, F.Mul):
        return _const_value(node.left) * _const_value(node.right)
    if isinstance(node, F.Div):
        return _const_value(node.left) / _const_value(node.right)
    if isinstance(node, F.Pow):
        return _const_value(node.base) ** node.exponent
    if isinstance(node, F.Exp):
        return cmath.exp(_const_value(node.arg))
    if isinstance(node, F.Log):
        return cmath.log(_const_value(node.arg))
    raise ValueError("not constant")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, op):
        if self.tok.kind != "op" or self.tok.text != op:
            raise ParseError(self.tok.offset, {repr(op)}, f"expected {op!r}")
        return self.advance()

    def real_constant(self, node, offset, what):
        try:
            v = _const_value(node)
        except (ValueError, ZeroDivisionError, OverflowError):
            raise ParseError(offset, {"constant"}, f"{what} must be a real constant") from None
        if v.imag != 0 or not math.isfinite(v.real):
            raise ParseError(offset, {"constant"}, f"{what} must be a real constant")
        return v.real

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(self.tok.offset, {"operator", "end of input"}, f"unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.term()
            node = F.Add(node, rhs) if op == "+" else F.Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            node = F.Mul(node, rhs) if op == "*" else F.Div(node, rhs)
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            if self.tok.kind == "num":
                return self.power(F.Const(-float(self.advance().text)))
            return F.Neg(self.unary())
        return self.power(self.atom())

    def power(self, base):
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            off = self.tok.offset
            e = self.real_constant(self.unary(), off, "exponent")
            return F.Pow(base, e)
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return F.Const(float(t.text))
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "id":
            self.advance()
            name = t.text
            if name in _FUNCS:
                return self.call(name, t.offset)
            if name == "rho":
                return F.Rho()
            if name == "absx":
                return F.AbsX()
            if name == "i":
                return F.ImagUnit()
            if name == "pi":
                return F.Const(math.pi)
            mt = re.fullmatch(r"([xy])([1-9]\d*)", name)
            if mt:
                idx = int(mt.group(2)) - 1
                return F.CoordX(idx) if mt.group(1) == "x" else F.CoordY(idx)
            raise ParseError(t.offset, {"identifier"}, f"unknown identifier {name!r}")
        raise ParseError(t.offset, {"expression"}, "expected expression")

    def call(self, name, offset):
        self.expect("(")
        args, offsets = [], []
        if not (self.tok.kind == "op" and self.tok.text == ")"):
            while True:
                offsets.append(self.tok.offset)
                args.append(self.expr())
                if self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                    continue
                break
        self.expect(")")
        arity = {"exp": (1,), "log": (1,), "bump": (1, 2), "pow": (2,), "rhoeps": (1,), "cplx": (2,)}[name]
        if len(args) not in arity:
            raise ParseError(offset, {"argument"}, f"{name} takes {' or '.join(map(str, arity))} argument(s)")
        if name == "exp":
            return F.Exp(args[0])
        if name == "log":
            return F.Log(args[0])
        if name == "bump":
            order = 0
            if len(args) == 2:
                v = self.real_constant(args[1], offsets[1], "bump order")
                if v != int(v) or v < 0:
                    raise ParseError(offsets[1], {"integer"}, "bump order must be a nonnegative integer")
                order = int(v)
            return F.Bump(args[0], order)
        if name == "pow":
            return F.Pow(args[0], self.real_constant(args[1], offsets[1], "exponent"))
        if name == "rhoeps":
            eps = self.real_constant(args[0], offsets[0], "eps")
            if not eps > 0:
                raise ParseError(offsets[0], {"positive constant"}, "rhoeps needs eps > 0")
            return F.RhoEps(eps)
        re_ = self.real_constant(args[0], offsets[0], "real part")
        im_ = self.real_constant(args[1], offsets[1], "imaginary part")
        return F.Const(complex(re_, im_))


def parse(text: str) -> F.FieldExpr:
    return _Parser(text).parse()


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v)) if v != 0 or math.copysign(1, v) > 0 else "-0.0"
    return repr(v)


_BIN = {F.Add: "+", F.Sub: "-", F.Mul: "*", F.Div: "/"}


def format_expr(f: F.FieldExpr) -> str:
    """Canonical fully parenthesized text; ``parse(format_expr(f)) == f``."""
    if isinstance(f, F.Const):
        v = f.value
        if v.imag != 0:
            return f"cplx({_num(v.real)}, {_num(v.imag)})"
        return _num(v.real)
    if isinstance(f, F.ImagUnit):
        return "i"
    if isinstance(f, F.CoordX):
        return f"x{f.index + 1}"
    if isinstance(f, F.CoordY):
        return f"y{f.index + 1}"
    if isinstance(f, F.Rho):
        return "rho"
    if isinstance(f, F.AbsX):
        return "absx"
    if isinstance(f, F.RhoEps):
        return f"rhoeps({_num(f.eps)})"
    if isinstance(f, F.Neg):
        return f"(-({format_expr(f.arg)}))"
    op = _BIN.get(type(f))
    if op is not None:
        return f"({format_expr(f.left)} {op} {format_expr(f.right)})"
    if isinstance(f, F.Pow):
        return f"({format_expr(f.base)} ^ {_num(f.exponent)})"
    if isinstance(f, F.Exp):
        return f"exp({format_expr(f.arg)})"
    if isinstance(f, F.Log):
        return f"log({format_expr(f.arg)})"
    if isinstance(f, F.Bump):
        if f.order:
            return f"bump({format_expr(f.arg)}, {f.order})"
        return f"bump({format_expr(f.arg)})"
    raise TypeError(f"cannot format {f!r}")


# the public name in the text contract
format = format_expr  # noqa: A001
