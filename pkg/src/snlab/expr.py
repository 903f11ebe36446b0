"""A small expression grammar for analytic fields and time reparametrizations.

Accepted: numbers, the variables of the caller's choice, ``+ - * / ^ **``,
parentheses, the constant ``pi`` and the functions ``exp sin cos tan sinh cosh
tanh sqrt log``.  Expressions are checked token by token (so errors carry a
character position) and then handed to sympy for exact differentiation.
"""

from __future__ import annotations

import re

import numpy as np
import sympy

from .errors import ExpressionError

FUNCTIONS = {
    "exp": sympy.exp, "sin": sympy.sin, "cos": sympy.cos, "tan": sympy.tan,
    "sinh": sympy.sinh, "cosh": sympy.cosh, "tanh": sympy.tanh,
    "sqrt": sympy.sqrt, "log": sympy.log,
}
CONSTANTS = {"pi": sympy.pi}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^(),]))")


def _tokenize(text: str):
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            stripped = len(text) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[stripped]!r}", stripped)
        start = m.start(m.lastindex)
        kind = ("num", "name", "op")[m.lastindex - 1]
        tokens.append((kind, m.group(m.lastindex), start))
        pos = m.end()
    return tokens


class _Parser:
    """Recursive-descent parser producing a sympy expression."""

    def __init__(self, text, symbols):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, value=None):
        tok = self.peek()
        if tok is None:
            raise ExpressionError("unexpected end of expression", len(self.text))
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, found {tok[1]!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        if not self.tokens:
            raise ExpressionError("empty expression", 0)
        out = self.sum()
        tok = self.peek()
        if tok is not None:
            raise ExpressionError(f"unexpected {tok[1]!r}", tok[2])
        return out

    def sum(self):
        out = self.product()
        while self.peek() is not None and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.product()
            out = out + rhs if op == "+" else out - rhs
        return out

    def product(self):
        out = self.unary()
        while self.peek() is not None and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            out = out * rhs if op == "*" else out / rhs
        return out

    def unary(self):
        tok = self.peek()
        if tok is not None and tok[1] in "+-" and tok[0] == "op":
            self.take()
            val = self.unary()
            return -val if tok[1] == "-" else val
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[1] in ("^", "**"):
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return sympy.Rational(val) if re.fullmatch(r"\d+", val) else sympy.Float(val)
        if kind == "name":
            if val in FUNCTIONS:
                self.take("(")
                arg = self.sum()
                self.take(")")
                return FUNCTIONS[val](arg)
            if val in CONSTANTS:
                return CONSTANTS[val]
            if val in self.symbols:
                return self.symbols[val]
            raise ExpressionError(f"unknown name {val!r}", pos)
        if val == "(":
            out = self.sum()
            self.take(")")
            return out
        raise ExpressionError(f"unexpected {val!r}", pos)


def parse(text: str, variables) -> sympy.Expr:
    """Parse ``text`` in the given variable names into a sympy expression."""
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    symbols = {name: sympy.Symbol(name, real=True) for name in variables}
    return _Parser(text, symbols).parse()


def compile_expr(expr: sympy.Expr, variables):
    """Vectorised numpy callable of ``expr`` in ``variables`` (order preserved)."""
    syms = [sympy.Symbol(v, real=True) for v in variables]
    fn = sympy.lambdify(syms, expr, modules="numpy")

    def call(*args):
        out = fn(*args)
        shape = np.broadcast(*args).shape if args else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)

    return call


def derivative(expr: sympy.Expr, var: str, order: int = 1) -> sympy.Expr:
    return sympy.diff(expr, sympy.Symbol(var, real=True), order)
