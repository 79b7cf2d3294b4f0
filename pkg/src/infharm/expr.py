"""Expression trees with exact symbolic differentiation and a prefix-syntax parser.

Grammar of the prefix (s-expression) syntax::

    expr   := NUMBER | VAR | "(" OP expr+ ")"
    VAR    := "x1" | "x2" | ...          (1-based coordinate index)
    OP     := "+" | "*"                  (n-ary)
            | "-"                        (unary negation or binary difference)
            | "/" | "^"                  (binary)
            | "sin" | "cos" | "exp" | "sinh" | "cosh" | "log"   (unary)

Examples: ``(+ (cos x1) (- (cos x2)))``, ``(^ x1 (/ 4 3))``.

Evaluation is vectorized: variables are bound to numpy arrays of a common
shape. Non-finite results (log of a non-positive number, fractional power of
a negative base, division by zero) raise :class:`DomainError`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Evaluation outside the set where an expression is defined."""


class ParseError(ValueError):
    pass


class Expr:
    """Base node. Subclasses are frozen dataclasses; arithmetic builds new trees."""

    def __add__(self, other):
        return add(self, lift(other))

    def __radd__(self, other):
        return add(lift(other), self)

    def __sub__(self, other):
        return sub(self, lift(other))

    def __rsub__(self, other):
        return sub(lift(other), self)

    def __mul__(self, other):
        return mul(self, lift(other))

    def __rmul__(self, other):
        return mul(lift(other), self)

    def __truediv__(self, other):
        return div(self, lift(other))

    def __rtruediv__(self, other):
        return div(lift(other), self)

    def __pow__(self, other):
        return power(self, lift(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return self.to_prefix()

    # interface
    def evaluate(self, env: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def diff(self, i: int) -> "Expr":
        raise NotImplementedError

    def to_prefix(self) -> str:
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def max_var(self) -> int:
        """Largest variable index used (-1 if none)."""
        return max((c.max_var() for c in self.children()), default=-1)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    def evaluate(self, env):
        shape = np.shape(env[0]) if len(env) else ()
        return np.full(shape, float(self.value))

    def diff(self, i):
        return ZERO

    def to_prefix(self):
        return repr(float(self.value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int

    def evaluate(self, env):
        return np.asarray(env[self.index], dtype=float)

    def diff(self, i):
        return ONE if i == self.index else ZERO

    def to_prefix(self):
        return f"x{self.index + 1}"

    def max_var(self):
        return self.index


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) + self.right.evaluate(env)

    def diff(self, i):
        return add(self.left.diff(i), self.right.diff(i))

    def to_prefix(self):
        return f"(+ {self.left.to_prefix()} {self.right.to_prefix()})"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) - self.right.evaluate(env)

    def diff(self, i):
        return sub(self.left.diff(i), self.right.diff(i))

    def to_prefix(self):
        return f"(- {self.left.to_prefix()} {self.right.to_prefix()})"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def diff(self, i):
        return neg(self.arg.diff(i))

    def to_prefix(self):
        return f"(- {self.arg.to_prefix()})"

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        return self.left.evaluate(env) * self.right.evaluate(env)

    def diff(self, i):
        return add(mul(self.left.diff(i), self.right), mul(self.left, self.right.diff(i)))

    def to_prefix(self):
        return f"(* {self.left.to_prefix()} {self.right.to_prefix()})"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr

    def evaluate(self, env):
        den = self.right.evaluate(env)
        if np.any(den == 0.0):
            raise DomainError(f"division by zero in {self.to_prefix()}")
        return self.left.evaluate(env) / den

    def diff(self, i):
        # (a/b)' = a'/b - a b' / b^2
        a, b = self.left, self.right
        return sub(div(a.diff(i), b), div(mul(a, b.diff(i)), power(b, Const(2.0))))

    def to_prefix(self):
        return f"(/ {self.left.to_prefix()} {self.right.to_prefix()})"

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: Expr

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if _is_const(self.exponent):
            k = self.exponent.value
            if float(k).is_integer():
                if k < 0 and np.any(b == 0.0):
                    raise DomainError(f"negative power of zero in {self.to_prefix()}")
                return np.power(b, k)
            if np.any(b <= 0.0):
                raise DomainError(f"fractional power of non-positive base in {self.to_prefix()}")
            return np.power(b, k)
        e = self.exponent.evaluate(env)
        if np.any(b <= 0.0):
            raise DomainError(f"variable power of non-positive base in {self.to_prefix()}")
        return np.power(b, e)

    def diff(self, i):
        b, e = self.base, self.exponent
        if _is_const(e):
            k = e.value
            return mul(mul(Const(k), power(b, Const(k - 1.0))), b.diff(i))
        # d(b^e) = b^e (e' log b + e b'/b)
        return mul(self, add(mul(e.diff(i), log(b)), div(mul(e, b.diff(i)), b)))

    def to_prefix(self):
        return f"(^ {self.base.to_prefix()} {self.exponent.to_prefix()})"

    def children(self):
        return (self.base, self.exponent)


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def evaluate(self, env):
        a = self.arg.evaluate(env)
        if self.name == "log":
            if np.any(a <= 0.0):
                raise DomainError(f"log of non-positive value in {self.to_prefix()}")
            return np.log(a)
        with np.errstate(over="raise"):
            try:
                return _FUNCS[self.name](a)
            except FloatingPointError as exc:
                raise DomainError(f"overflow in {self.to_prefix()}") from exc

    def diff(self, i):
        a = self.arg
        da = a.diff(i)
        if _is_const(da, 0.0):
            return ZERO
        outer = {
            "sin": lambda: cos(a),
            "cos": lambda: neg(sin(a)),
            "exp": lambda: self,
            "sinh": lambda: cosh(a),
            "cosh": lambda: sinh(a),
            "log": lambda: div(ONE, a),
        }[self.name]()
        return mul(outer, da)

    def to_prefix(self):
        return f"({self.name} {self.arg.to_prefix()})"

    def children(self):
        return (self.arg,)


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sinh": np.sinh, "cosh": np.cosh}


# smart constructors: fold constants and drop neutral elements, nothing more


def lift(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {v!r} to an expression")


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        raise DomainError("division by the constant zero")
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value / b.value)
    return Div(a, b)


def power(b: Expr, e: Expr) -> Expr:
    if _is_const(e, 0.0):
        return ONE
    if _is_const(e, 1.0):
        return b
    if _is_const(b) and _is_const(e):
        if b.value <= 0.0 and not float(e.value).is_integer():
            raise DomainError("fractional power of non-positive constant")
        return Const(b.value ** e.value)
    return Pow(b, e)


def _unary(name):
    def build(a) -> Expr:
        a = lift(a)
        if _is_const(a):
            if name == "log" and a.value <= 0.0:
                raise DomainError("log of non-positive constant")
            fn = math.log if name == "log" else getattr(math, name)
            return Const(fn(a.value))
        return Func(name, a)

    build.__name__ = name
    return build


sin = _unary("sin")
cos = _unary("cos")
exp = _unary("exp")
sinh = _unary("sinh")
cosh = _unary("cosh")
log = _unary("log")


def variables(n: int) -> tuple[Var, ...]:
    return tuple(Var(i) for i in range(n))


# parser

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_VAR = re.compile(r"^x([1-9]\d*)$")
_UNARY = {"sin": sin, "cos": cos, "exp": exp, "sinh": sinh, "cosh": cosh, "log": log}


def _tokenize(text: str) -> list[str]:
    return re.findall(r"\(|\)|[^\s()]+", text)


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        self.pos += 1
        return tok

    def expr(self) -> Expr:
        tok = self.take()
        if tok == "(":
            op = self.take()
            args = []
            while self.peek() not in (")", None):
                args.append(self.expr())
            if self.take() != ")":
                raise ParseError("missing ')'")
            return self.apply(op, args)
        if tok == ")":
            raise ParseError("unexpected ')'")
        if _NUMBER.match(tok):
            return Const(float(tok))
        m = _VAR.match(tok)
        if m:
            return Var(int(m.group(1)) - 1)
        raise ParseError(f"unknown symbol {tok!r}")

    @staticmethod
    def apply(op, args) -> Expr:
        if op in ("+", "*"):
            if len(args) < 1:
                raise ParseError(f"'{op}' needs at least one argument")
            out = args[0]
            for a in args[1:]:
                out = add(out, a) if op == "+" else mul(out, a)
            return out
        if op == "-":
            if len(args) == 1:
                return neg(args[0])
            if len(args) == 2:
                return sub(*args)
            raise ParseError("'-' takes one or two arguments")
        if op in ("/", "^"):
            if len(args) != 2:
                raise ParseError(f"'{op}' takes two arguments")
            return div(*args) if op == "/" else power(*args)
        if op in _UNARY:
            if len(args) != 1:
                raise ParseError(f"'{op}' takes one argument")
            return _UNARY[op](args[0])
        raise ParseError(f"unknown operator {op!r}")


def parse(text: str) -> Expr:
    """Parse a prefix-syntax string into an expression tree."""
    p = _Parser(_tokenize(text))
    e = p.expr()
    if p.peek() is not None:
        raise ParseError(f"trailing input after expression: {p.tokens[p.pos:]}")
    return e
