"""Tiny symbolic expression grammar for problem data.

Grammar: real literals, ``x1``, ``x2``, ``+ - * /``, ``^`` with integer
exponent, ``exp()``, parentheses.  Expressions carry exact symbolic
derivatives, which supply analytic gradients and Hessians for boundary
data and manufactured forcings.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

Number = Union[int, float]


class ExprError(ValueError):
    def __init__(self, message: str, column: int | None = None):
        if column is not None:
            message = f"{message} (line 1, column {column + 1})"
        super().__init__(message)
        self.column = column


class Expr:
    def __call__(self, x1, x2):
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    # convenience -----------------------------------------------------
    def grad(self, x1, x2):
        return (self.diff("x1")(x1, x2), self.diff("x2")(x1, x2))

    def hess(self, x1, x2):
        d1, d2 = self.diff("x1"), self.diff("x2")
        return (d1.diff("x1")(x1, x2), d1.diff("x2")(x1, x2), d2.diff("x2")(x1, x2))

    def __repr__(self):
        return f"<expr {self}>"


class Const(Expr):
    def __init__(self, value: Number):
        self.value = float(value)

    def __call__(self, x1, x2):
        return np.broadcast_to(self.value, np.broadcast(np.asarray(x1), np.asarray(x2)).shape).copy() \
            if np.ndim(x1) or np.ndim(x2) else self.value

    def diff(self, var):
        return Const(0.0)

    def __str__(self):
        return repr(self.value)


class Var(Expr):
    def __init__(self, name: str):
        assert name in ("x1", "x2")
        self.name = name

    def __call__(self, x1, x2):
        return np.asarray(x1, float) + 0.0 if self.name == "x1" else np.asarray(x2, float) + 0.0

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def __str__(self):
        return self.name


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1.0


class Add(Expr):
    def __init__(self, a: Expr, b: Expr):
        self.a, self.b = a, b

    def __call__(self, x1, x2):
        return self.a(x1, x2) + self.b(x1, x2)

    def diff(self, var):
        return add(self.a.diff(var), self.b.diff(var))

    def __str__(self):
        return f"({self.a} + {self.b})"


class Sub(Expr):
    def __init__(self, a: Expr, b: Expr):
        self.a, self.b = a, b

    def __call__(self, x1, x2):
        return self.a(x1, x2) - self.b(x1, x2)

    def diff(self, var):
        return sub(self.a.diff(var), self.b.diff(var))

    def __str__(self):
        return f"({self.a} - {self.b})"


class Mul(Expr):
    def __init__(self, a: Expr, b: Expr):
        self.a, self.b = a, b

    def __call__(self, x1, x2):
        return self.a(x1, x2) * self.b(x1, x2)

    def diff(self, var):
        return add(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))

    def __str__(self):
        return f"({self.a} * {self.b})"


class Div(Expr):
    def __init__(self, a: Expr, b: Expr):
        self.a, self.b = a, b

    def __call__(self, x1, x2):
        return self.a(x1, x2) / self.b(x1, x2)

    def diff(self, var):
        num = sub(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))
        return Div(num, Pow(self.b, 2))

    def __str__(self):
        return f"({self.a} / {self.b})"


class Neg(Expr):
    def __init__(self, a: Expr):
        self.a = a

    def __call__(self, x1, x2):
        return -self.a(x1, x2)

    def diff(self, var):
        return Neg(self.a.diff(var))

    def __str__(self):
        return f"(-{self.a})"


class Pow(Expr):
    def __init__(self, base: Expr, exponent: int):
        self.base = base
        self.exponent = int(exponent)

    def __call__(self, x1, x2):
        return self.base(x1, x2) ** self.exponent

    def diff(self, var):
        n = self.exponent
        if n == 0:
            return Const(0.0)
        inner = self.base.diff(var)
        if n == 1:
            return inner
        return mul(mul(Const(n), Pow(self.base, n - 1)), inner)

    def __str__(self):
        return f"({self.base} ^ {self.exponent})"


class ExpF(Expr):
    def __init__(self, a: Expr):
        self.a = a

    def __call__(self, x1, x2):
        return np.exp(self.a(x1, x2))

    def diff(self, var):
        return mul(self.a.diff(var), self)

    def __str__(self):
        return f"exp({self.a})"


def add(a: Expr, b: Expr) -> Expr:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_zero(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_zero(a):
        return Neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_zero(a) or _is_zero(b):
        return Const(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


# ----------------------------------------------------------------------
# Parser: recursive descent over
#   expr   := term (('+'|'-') term)*
#   term   := unary (('*'|'/') unary)*
#   unary  := '-' unary | power
#   power  := atom ('^' integer)?
#   atom   := number | 'x1' | 'x2' | 'exp' '(' expr ')' | '(' expr ')'
# ----------------------------------------------------------------------

_TOKENS = ("+", "-", "*", "/", "^", "(", ")")


def _tokenize(text: str):
    tokens = []  # (kind, value, column)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _TOKENS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE" or
                             (text[j] in "+-" and j > i and text[j - 1] in "eE")):
                j += 1
            try:
                val = float(text[i:j])
            except ValueError:
                raise ExprError(f"bad numeric literal {text[i:j]!r}", i)
            tokens.append(("num", val, i))
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word in ("x1", "x2", "exp"):
                tokens.append(("name", word, i))
            else:
                raise ExprError(f"unknown identifier {word!r}", i)
            i = j
            continue
        raise ExprError(f"unexpected character {c!r}", i)
    return tokens


class _Parser:
    def __init__(self, tokens, text):
        self.tokens = tokens
        self.text = text
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok is None:
            raise ExprError("unexpected end of expression", len(self.text))
        if kind is not None and tok[0] != kind:
            raise ExprError(f"expected {kind}, got {tok[1]!r}", tok[2])
        if value is not None and tok[1] != value:
            raise ExprError(f"expected {value!r}, got {tok[1]!r}", tok[2])
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExprError(f"trailing input {tok[1]!r}", tok[2])
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek() and self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek() and self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "^":
            self.take()
            sign = 1
            t = self.peek()
            if t and t[0] == "op" and t[1] == "-":
                self.take()
                sign = -1
            num = self.take("num")
            if num[1] != int(num[1]):
                raise ExprError("exponent must be an integer", num[2])
            n = sign * int(num[1])
            if n < 0:
                return Div(Const(1.0), Pow(base, -n))
            return Pow(base, n)
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, val, col = tok
        if kind == "num":
            return Const(val)
        if kind == "name":
            if val in ("x1", "x2"):
                return Var(val)
            # exp(
            self.take("op", "(")
            inner = self.expr()
            self.take("op", ")")
            return ExpF(inner)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.take("op", ")")
            return inner
        raise ExprError(f"unexpected token {val!r}", col)


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an expression with symbolic derivatives."""
    return _Parser(_tokenize(text), text).parse()
