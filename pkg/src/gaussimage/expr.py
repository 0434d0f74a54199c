"""Coordinate-expression DSL: parsing, printing, validation, jet evaluation.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | 'pi' | ident '(' expr ')' | 'u' digits | '(' expr ')'

``^`` binds tighter than unary minus (``-u1^2 == -(u1^2)``) and is right
associative.  Variables are 1-based: ``u1 .. un``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import jet as J


class ExprError(ValueError):
    """Base class for DSL errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at byte {offset}{hint}")


class ExprValidationError(ExprError):
    pass


class ExprDomainError(ExprError):
    def __init__(self, message: str, node: "Node"):
        self.node = node
        super().__init__(f"{message} in subexpression `{to_source(node)}`")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class NamedConst:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Const, Var, NamedConst, Neg, BinOp, Call]

NAMED_CONSTANTS = {"pi": math.pi}
FUNCTION_NAMES = frozenset(J.FUNCTIONS)

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # number, ident, op, end
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    i = 0
    byte = 0
    while i < len(source):
        m = _TOKEN.match(source, i)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[i]!r}", byte)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        i = m.end()
    toks.append(_Tok("end", "", byte))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text:
            got = self.tok.text or "end of input"
            raise ExprSyntaxError(f"unexpected {got!r}", self.tok.offset, repr(text))
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset, "operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.tok.text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        if self.tok.text == "^":
            self.advance()
            node = BinOp("^", node, self.factor())
        return node

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Const(float(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text in NAMED_CONSTANTS:
                return NamedConst(t.text)
            m = re.fullmatch(r"u(\d+)", t.text)
            if m:
                index = int(m.group(1))
                if index < 1:
                    raise ExprSyntaxError("variables are numbered from u1", t.offset)
                return Var(index)
            if self.tok.text != "(":
                raise ExprSyntaxError(f"unknown identifier {t.text!r}", t.offset, "'(' after a function name")
            if t.text not in FUNCTION_NAMES:
                raise ExprSyntaxError(
                    f"unknown function {t.text!r}", t.offset, "one of " + ", ".join(sorted(FUNCTION_NAMES))
                )
            self.advance()
            arg = self.expr()
            self.expect(")")
            return Call(t.text, arg)
        if t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        got = t.text or "end of input"
        raise ExprSyntaxError(f"unexpected {got!r}", t.offset, "number, variable, function call or '('")


def parse(source: str) -> Node:
    """Parse DSL source text into an AST."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return 5


def to_source(node: Node) -> str:
    """Print an AST so that ``parse(to_source(a)) == a``."""
    if isinstance(node, Const):
        if node.value < 0 or not math.isfinite(node.value):
            raise ValueError(f"constant {node.value!r} has no DSL spelling")
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"u{node.index}"
    if isinstance(node, NamedConst):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        # -(a^b) prints bare since ^ binds tighter; everything looser needs parens
        return f"-{inner}" if _prec(node.operand) >= _PREC["neg"] else f"-({inner})"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left} {node.op} {right}"


def variables(node: Node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, (Neg, Call)):
        return variables(node.operand if isinstance(node, Neg) else node.arg)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()


def constant_value(node: Node) -> float:
    """Numeric value of a variable-free expression."""
    return float(eval_jet(node, np.zeros(1), 0).value)


def validate(node: Node, n: int) -> Node:
    """Check variable ranges and constant exponents against ``n`` parameters."""
    bad = sorted(i for i in variables(node) if i > n)
    if bad:
        raise ExprValidationError(f"variable u{bad[0]} out of range for n={n}")

    def walk(x: Node) -> None:
        if isinstance(x, BinOp):
            if x.op == "^" and variables(x.right):
                raise ExprValidationError(f"exponent `{to_source(x.right)}` is not constant")
            walk(x.left)
            walk(x.right)
        elif isinstance(x, Neg):
            walk(x.operand)
        elif isinstance(x, Call):
            walk(x.arg)

    walk(node)
    return node


def parse_validated(source: str, n: int) -> Node:
    return validate(parse(source), n)


def eval_jet(node: Node, base, order: int) -> J.Jet:
    """Exact partial derivatives of ``node`` at ``base`` up to ``order``."""
    base = np.atleast_1d(np.asarray(base, dtype=float))
    n = base.shape[0]
    if max(variables(node), default=0) > n:
        raise ExprValidationError(f"expression uses u{max(variables(node))} but the base point has {n} coordinates")

    def ev(x: Node) -> J.Jet:
        if isinstance(x, Const):
            return J.Jet.constant(x.value, n, order)
        if isinstance(x, NamedConst):
            return J.Jet.constant(NAMED_CONSTANTS[x.name], n, order)
        if isinstance(x, Var):
            return J.Jet.variable(x.index - 1, base, order)
        if isinstance(x, Neg):
            return -ev(x.operand)
        try:
            if isinstance(x, Call):
                return J.FUNCTIONS[x.func](ev(x.arg))
            if x.op == "^":
                if variables(x.right):
                    raise ExprValidationError(f"exponent `{to_source(x.right)}` is not constant")
                return J.power(ev(x.left), constant_value(x.right))
            left, right = ev(x.left), ev(x.right)
            if x.op == "+":
                return left + right
            if x.op == "-":
                return left - right
            if x.op == "*":
                return left * right
            return left / right
        except J.DomainError as exc:
            raise ExprDomainError(str(exc), x) from None

    return ev(node)
