"""A small arithmetic language for psi(x, u) and the subsolution ubar(x).

Grammar (whitespace-insensitive)::

    expr   -> term (('+' | '-') term)*
    term   -> factor (('*' | '/') factor)*
    factor -> unary ('^' number)?
    unary  -> '-'? atom
    atom   -> number | ident | ident '(' expr ')' | '(' expr ')'

Identifiers are ``x1 .. xn`` and ``u``; functions are ``sqrt``, ``exp`` and
``log``. The Unicode minus sign is accepted for ``-``. Note that ``-x^2``
parses as ``(-x)^2`` because the exponent binds to the unary.

Evaluation works on Python floats or numpy arrays (``x`` of shape ``(..., n)``).
``eval_with_du`` carries a forward-mode derivative with respect to ``u``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ExprDomainError, ExprError, ExprSyntaxError

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expr",
    "parse",
    "evaluate",
    "eval_with_du",
    "to_text",
    "depends_on_u",
    "Dual",
    "structure",
]

FUNCTIONS = ("sqrt", "exp", "log")


@dataclass(frozen=True)
class Const:
    value: float
    pos: int = 0


@dataclass(frozen=True)
class Var:
    name: str  # "u" or "x1".."x3"
    pos: int = 0


@dataclass(frozen=True)
class Unary:
    op: str  # "neg", "sqrt", "exp", "log"
    arg: "Expr"
    pos: int = 0


@dataclass(frozen=True)
class Binary:
    op: str  # "+", "-", "*", "/", "^"
    left: "Expr"
    right: "Expr"
    pos: int = 0


Expr = Union[Const, Var, Unary, Binary]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()−]))"
)


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens: list[tuple[str, str, int]] = []
        i = 0
        while True:
            m = _TOKEN.match(text, i)
            if m is None:
                rest = text[i:]
                if rest.strip() == "":
                    break
                j = i + len(rest) - len(rest.lstrip())
                raise ExprSyntaxError(f"unexpected character {text[j]!r}", self._off(j))
            kind = m.lastgroup
            val = m.group(kind)
            if kind == "op" and val == "−":
                val = "-"
            self.tokens.append((kind, val, m.start(kind)))
            i = m.end()
        self.i = 0

    def _off(self, charpos: int) -> int:
        return len(self.text[:charpos].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def end_offset(self) -> int:
        return self._off(len(self.text))

    def fail(self, msg: str):
        tok = self.peek()
        off = self._off(tok[2]) if tok else self.end_offset()
        raise ExprSyntaxError(msg, off)

    def take(self, val: str | None = None, kind: str | None = None):
        tok = self.peek()
        if tok is None:
            self.fail(f"expected {val or kind}, found end of input")
        if (val is not None and tok[1] != val) or (kind is not None and tok[0] != kind):
            self.fail(f"expected {val or kind}, found {tok[1]!r}")
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while (tok := self.peek()) and tok[1] in "+-" and tok[0] == "op":
            self.i += 1
            node = Binary(tok[1], node, self.term(), tok[2])
        return node

    def term(self):
        node = self.factor()
        while (tok := self.peek()) and tok[1] in "*/" and tok[0] == "op":
            self.i += 1
            node = Binary(tok[1], node, self.factor(), tok[2])
        return node

    def factor(self):
        node = self.unary()
        tok = self.peek()
        if tok and tok[1] == "^":
            self.i += 1
            num = self.take(kind="num")
            node = Binary("^", node, Const(float(num[1]), num[2]), tok[2])
        return node

    def unary(self):
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.i += 1
            return Unary("neg", self.atom(), tok[2])
        return self.atom()

    def atom(self):
        tok = self.peek()
        if tok is None:
            self.fail("expected operand, found end of input")
        kind, val, pos = tok
        if kind == "num":
            self.i += 1
            return Const(float(val), pos)
        if kind == "id":
            self.i += 1
            nxt = self.peek()
            if val in FUNCTIONS:
                if not (nxt and nxt[1] == "("):
                    raise ExprSyntaxError(f"function {val!r} needs one argument", self._off(pos))
                self.i += 1
                arg = self.expr()
                if (t := self.peek()) and t[1] == ",":
                    raise ExprSyntaxError(f"function {val!r} takes one argument", self._off(t[2]))
                self.take(")")
                return Unary(val, arg, pos)
            if nxt and nxt[1] == "(":
                raise ExprSyntaxError(f"unknown function {val!r}", self._off(pos))
            if val == "u":
                return Var("u", pos)
            m = re.fullmatch(r"x([1-9])", val)
            if m and int(m.group(1)) <= self.n:
                return Var(val, pos)
            raise ExprSyntaxError(f"unknown identifier {val!r}", self._off(pos))
        if val == "(":
            self.i += 1
            node = self.expr()
            self.take(")")
            return node
        self.fail(f"unexpected token {val!r}")


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an AST over variables ``x1..xn`` and ``u``."""
    if not 1 <= n <= 3:
        raise ExprError(f"dimension n={n} not supported (1..3)")
    p = _Parser(text, n)
    if not p.tokens:
        raise ExprSyntaxError("empty expression", 0)
    node = p.expr()
    if p.peek() is not None:
        p.fail(f"unexpected token {p.peek()[1]!r}")
    return node


class Dual:
    """Value plus derivative with respect to u; both may be arrays."""

    __slots__ = ("v", "d")

    def __init__(self, v, d=0.0):
        self.v = v
        self.d = d


def _check(cond, msg, node):
    if np.any(cond):
        raise ExprDomainError(msg, node.pos)


def _apply(node, a, b=None, strict=True):
    op = node.op
    if op == "neg":
        return Dual(-a.v, -a.d)
    if op == "sqrt":
        if strict:
            _check(np.asarray(a.v) < 0, "sqrt of negative value", node)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.sqrt(a.v)
            return Dual(r, a.d * 0.5 / r if np.any(a.d != 0) else a.d * 0.0)
    if op == "exp":
        r = np.exp(a.v)
        return Dual(r, a.d * r)
    if op == "log":
        if strict:
            _check(np.asarray(a.v) <= 0, "log of non-positive value", node)
        with np.errstate(invalid="ignore", divide="ignore"):
            return Dual(np.log(a.v), a.d / a.v)
    if op == "+":
        return Dual(a.v + b.v, a.d + b.d)
    if op == "-":
        return Dual(a.v - b.v, a.d - b.d)
    if op == "*":
        return Dual(a.v * b.v, a.d * b.v + a.v * b.d)
    if op == "/":
        if strict:
            _check(np.asarray(b.v) == 0, "division by zero", node)
        with np.errstate(invalid="ignore", divide="ignore"):
            q = a.v / b.v
            return Dual(q, (a.d - q * b.d) / b.v)
    if op == "^":
        p = b.v
        if p == int(p) and p >= 0:
            r = a.v ** int(p)
            dr = p * a.v ** (int(p) - 1) if p >= 1 else 0.0 * a.v
            return Dual(r, a.d * dr)
        if strict:
            _check(np.asarray(a.v) < 0, "non-integer power of negative value", node)
            if p < 0:
                _check(np.asarray(a.v) == 0, "negative power of zero", node)
        with np.errstate(invalid="ignore", divide="ignore"):
            return Dual(a.v**p, a.d * p * a.v ** (p - 1))
    raise ExprError(f"unknown operator {op!r}")


def _walk(node, x, u, strict, dual_u):
    if isinstance(node, Const):
        return Dual(node.value, 0.0)
    if isinstance(node, Var):
        if node.name == "u":
            return Dual(u, 1.0 if dual_u else 0.0)
        idx = int(node.name[1:]) - 1
        return Dual(x[..., idx], 0.0)
    if isinstance(node, Unary):
        return _apply(node, _walk(node.arg, x, u, strict, dual_u), strict=strict)
    return _apply(
        node,
        _walk(node.left, x, u, strict, dual_u),
        _walk(node.right, x, u, strict, dual_u),
        strict=strict,
    )


def _prep(x, u):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    # numpy scalars turn division by zero into inf/nan instead of raising
    return x, (np.asarray(u, dtype=float) if np.ndim(u) else np.float64(u))


def evaluate(ast: Expr, x, u=0.0, strict: bool = True):
    """IEEE double evaluation of ``ast``.

    With ``strict`` a domain violation (sqrt/log of bad argument, division by
    zero) raises ExprDomainError; otherwise it produces NaN/inf.
    """
    x, u = _prep(x, u)
    shape = np.broadcast_shapes(x.shape[:-1], np.shape(u))
    r = _walk(ast, x, u, strict, dual_u=False)
    v = np.broadcast_to(np.asarray(r.v, dtype=float), shape)
    return float(v) if v.ndim == 0 else v.copy()


def eval_with_du(ast: Expr, x, u, strict: bool = True):
    """Return ``(value, d value / du)`` by forward-mode dual numbers."""
    x, u = _prep(x, u)
    shape = np.broadcast_shapes(x.shape[:-1], np.shape(u))
    r = _walk(ast, x, u, strict, dual_u=True)
    v = np.broadcast_to(np.asarray(r.v, dtype=float), shape)
    d = np.broadcast_to(np.asarray(r.d, dtype=float), shape)
    if v.ndim == 0:
        return float(v), float(d)
    return v.copy(), d.copy()


def depends_on_u(ast: Expr) -> bool:
    if isinstance(ast, Var):
        return ast.name == "u"
    if isinstance(ast, Const):
        return False
    if isinstance(ast, Unary):
        return depends_on_u(ast.arg)
    return depends_on_u(ast.left) or depends_on_u(ast.right)


def to_text(ast: Expr) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(ast, Const):
        return repr(float(ast.value))
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Unary):
        if ast.op == "neg":
            return f"-({to_text(ast.arg)})"
        return f"{ast.op}({to_text(ast.arg)})"
    if ast.op == "^":
        return f"({to_text(ast.left)})^{ast.right.value!r}"
    return f"({to_text(ast.left)} {ast.op} {to_text(ast.right)})"


def structure(ast: Expr):
    """Position-free nested tuple, for comparing trees."""
    if isinstance(ast, Const):
        return ("c", float(ast.value))
    if isinstance(ast, Var):
        return ("v", ast.name)
    if isinstance(ast, Unary):
        return ("u", ast.op, structure(ast.arg))
    return ("b", ast.op, structure(ast.left), structure(ast.right))

