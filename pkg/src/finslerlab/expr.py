"""Expression language for Finsler structures, vector fields and scalar fields.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ] ;             (* right associative *)
    atom    = number | variable | call | "(" , expr , ")" ;
    call    = func , "(" , expr , [ "," , expr ] , ")" ;
    func    = "sqrt" | "exp" | "ln" | "abs" | "pow" ;
    variable= ("x" | "y") , digit , { digit } ;     (* x1..xn, y1..yn *)
    number  = digits [ "." digits ] [ ("e"|"E") ["+"|"-"] digits ] | "." digits ... ;

Precedence is ``^`` > unary ``-`` > ``* /`` > ``+ -``, so ``-y1^2`` is ``-(y1^2)``.
Error positions are 1-based byte offsets into the UTF-8 source.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DomainError,
    ExprSyntaxError,
    GuardViolation,
    IndexOutOfRange,
    UnknownIdentifier,
    YVariableInVectorField,
)

FUNCTIONS = {"sqrt": 1, "exp": 1, "ln": 1, "abs": 1, "pow": 2}


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Const, Var, Unary, Binary, Call]


@dataclass(frozen=True)
class Expr:
    """A parsed expression over x1..xn, y1..yn."""

    root: Node
    n: int
    source: str = field(default="", compare=False)

    def uses_y(self) -> bool:
        return _uses(self.root, "y")

    def uses_x(self) -> bool:
        return _uses(self.root, "x")

    def __str__(self) -> str:
        return pretty(self.root)


@lru_cache(maxsize=None)
def _uses(node: Node, kind: str) -> bool:
    if isinstance(node, Var):
        return node.kind == kind
    if isinstance(node, Const):
        return False
    if isinstance(node, Unary):
        return _uses(node.arg, kind)
    if isinstance(node, Binary):
        return _uses(node.left, kind) or _uses(node.right, kind)
    return any(_uses(a, kind) for a in node.args)


def is_constant(node: Node) -> bool:
    return not (_uses(node, "x") or _uses(node, "y"))


# --------------------------------------------------------------------------
# Lexer / parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    rb"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    rb"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    rb"|(?P<op>[-+*/^(),]))"
)
_WS = re.compile(rb"\s*")
_VAR = re.compile(r"([xy])(\d+)$")


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int  # 1-based byte offset


def _tokenize(source: str) -> list:
    data = source.encode("utf-8")
    toks = []
    i = 0
    while True:
        ws = _WS.match(data, i)
        i = ws.end()
        if i >= len(data):
            break
        m = _TOKEN.match(data, i)
        if m is None or m.end() == i:
            bad = data[i:i + 1].decode("utf-8", "replace")
            raise ExprSyntaxError(i + 1, "token", bad)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind).decode("utf-8"), start + 1))
        i = m.end()
    toks.append(_Tok("eof", "", len(data) + 1))
    return toks


class _Parser:
    def __init__(self, source: str, n: int):
        self.toks = _tokenize(source)
        self.i = 0
        self.n = n

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, expected):
        t = self.tok
        raise ExprSyntaxError(t.pos, expected, None if t.kind == "eof" else t.text)

    def _accept_op(self, *ops):
        t = self.tok
        if t.kind == "op" and t.text in ops:
            self.i += 1
            return t.text
        return None

    def _expect_op(self, op):
        if self._accept_op(op) is None:
            self._fail(repr(op))

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "eof":
            self._fail("operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while (op := self._accept_op("+", "-")) is not None:
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while (op := self._accept_op("*", "/")) is not None:
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._accept_op("-") is not None:
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._accept_op("^") is not None:
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(float(t.text))
        if t.kind == "ident":
            self.i += 1
            if t.text in FUNCTIONS:
                return self._call(t)
            m = _VAR.match(t.text)
            if m is None:
                raise UnknownIdentifier(t.text, t.pos)
            idx = int(m.group(2))
            if idx < 1 or idx > self.n:
                raise IndexOutOfRange(t.text, self.n, t.pos)
            return Var(m.group(1), idx)
        if self._accept_op("(") is not None:
            node = self.expr()
            self._expect_op(")")
            return node
        self._fail("operand")

    def _call(self, name_tok: _Tok) -> Node:
        self._expect_op("(")
        args = [self.expr()]
        while self._accept_op(",") is not None:
            args.append(self.expr())
        arity = FUNCTIONS[name_tok.text]
        if len(args) != arity:
            raise ExprSyntaxError(name_tok.pos, f"{arity} argument(s) for {name_tok.text}",
                                  f"{len(args)} argument(s)")
        self._expect_op(")")
        return Call(name_tok.text, tuple(args))


def parse(source: str, n: int) -> Expr:
    """Parse ``source`` into an :class:`Expr` over dimension ``n``."""
    if not 1 <= n <= 4:
        raise IndexOutOfRange(f"dim={n}", 4, 0)
    return Expr(_Parser(source, n).parse(), n, source)


# --------------------------------------------------------------------------
# Pretty printer
# --------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def pretty(node: Node) -> str:
    """Render a node so that it reparses to the identical tree."""
    if isinstance(node, Const):
        text = repr(float(node.value))
        return text if node.value >= 0 else f"({text})"
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Unary):
        return f"(-{pretty(node.arg)})"
    if isinstance(node, Binary):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    return f"{node.name}(" + ", ".join(pretty(a) for a in node.args) + ")"


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

class FloatOps:
    """Float / ndarray semantics with domain checks."""

    @staticmethod
    def sqrt(a):
        if np.any(np.asarray(a) < 0):
            raise DomainError("sqrt of a negative number")
        return np.sqrt(a)

    @staticmethod
    def exp(a):
        return np.exp(a)

    @staticmethod
    def ln(a):
        if np.any(np.asarray(a) <= 0):
            raise DomainError("ln of a non-positive number")
        return np.log(a)

    @staticmethod
    def abs(a):
        return np.abs(a)

    @staticmethod
    def div(a, b):
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b

    @staticmethod
    def pow(a, p):
        if isinstance(p, float) and p.is_integer():
            if p < 0 and np.any(np.asarray(a) == 0):
                raise DomainError("zero to a negative power")
            return a ** int(p)
        if np.any(np.asarray(a) <= 0):
            raise DomainError("non-integer power of a non-positive base")
        return a ** p


def evaluate(node: Node, x, y=None, ops=FloatOps):
    """Evaluate a node. ``x``/``y`` are sequences indexed from 0 (values, arrays or jets)."""

    def ev(nd):
        if isinstance(nd, Const):
            return nd.value
        if isinstance(nd, Var):
            src = x if nd.kind == "x" else y
            if src is None:
                raise YVariableInVectorField(f"{nd.kind}{nd.index} has no value here")
            return src[nd.index - 1]
        if isinstance(nd, Unary):
            return -ev(nd.arg)
        if isinstance(nd, Binary):
            if nd.op == "^":
                return _power(nd.left, nd.right)
            a, b = ev(nd.left), ev(nd.right)
            if nd.op == "+":
                return a + b
            if nd.op == "-":
                return a - b
            if nd.op == "*":
                return a * b
            return ops.div(a, b)
        if nd.name == "pow":
            return _power(*nd.args)
        return getattr(ops, nd.name)(ev(nd.args[0]))

    def _power(base, expo):
        if is_constant(expo):
            return ops.pow(ev(base), float(evaluate(expo, (), (), FloatOps)))
        return ops.exp(ev(expo) * ops.ln(ev(base)))

    return ev(node)


# --------------------------------------------------------------------------
# Metric and vector-field containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricField:
    f: Expr
    n: int
    domain_guard: Optional[Expr] = None
    label: str = ""

    def guard(self, x) -> np.ndarray:
        """Guard value at ``x`` (shape ``(n,)`` or ``(B, n)``); +inf without a guard."""
        x = np.asarray(x, dtype=float)
        if self.domain_guard is None:
            return np.full(x.shape[:-1], np.inf)
        xs = [x[..., i] for i in range(self.n)]
        return np.asarray(evaluate(self.domain_guard.root, xs, None), dtype=float) * np.ones(x.shape[:-1])

    def check_guard(self, x):
        g = self.guard(x)
        if np.any(g <= 0):
            raise GuardViolation(f"point outside the domain of {self.label or 'metric'} (guard = {np.min(g):.3g})")

    def value(self, x, y, check=True):
        """F(x, y) for points of shape ``(n,)`` or batches ``(B, n)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if check:
            self.check_guard(x)
        xs = [x[..., i] for i in range(self.n)]
        ys = [y[..., i] for i in range(self.n)]
        return evaluate(self.f.root, xs, ys)


@dataclass(frozen=True)
class VectorFieldExpr:
    components: tuple
    n: int
    label: str = ""

    def value(self, x):
        x = np.asarray(x, dtype=float)
        xs = [x[..., i] for i in range(self.n)]
        shape = x.shape[:-1]
        return np.stack([np.asarray(evaluate(c.root, xs, None), dtype=float) * np.ones(shape)
                         for c in self.components], axis=-1)


def parse_metric(source: str, n: int, guard: Optional[str] = None, label: str = "") -> MetricField:
    f = parse(source, n)
    g = parse(guard, n) if guard else None
    if g is not None and g.uses_y():
        raise YVariableInVectorField("the domain guard must depend on x only")
    return MetricField(f, n, g, label or source)


def parse_vector_field(sources: Sequence[str], n: int, label: str = "") -> VectorFieldExpr:
    if len(sources) != n:
        raise IndexOutOfRange(f"{len(sources)} components", n, 0)
    comps = []
    for s in sources:
        e = parse(s, n)
        if e.uses_y():
            raise YVariableInVectorField(f"vector field component {s!r} depends on y")
        comps.append(e)
    return VectorFieldExpr(tuple(comps), n, label or ", ".join(sources))


def eval_expr(expr: Expr, x, y=None, guard: Optional[Expr] = None) -> float:
    """Evaluate ``expr`` at a single point, enforcing ``guard`` when given."""
    x = [float(v) for v in x]
    y = None if y is None else [float(v) for v in y]
    if guard is not None and evaluate(guard.root, x, None) <= 0:
        raise GuardViolation("point violates the domain guard")
    return float(evaluate(expr.root, x, y))
