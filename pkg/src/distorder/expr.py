"""Small arithmetic expression language used by the text configs.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right-associative, binds tighter than "-"
    atom   := NUMBER | NAME | NAME "(" args ")" | "(" expr ")"

Evaluation works elementwise on numpy arrays, so the same expression can be
sampled on a whole mesh or quadrature grid at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "ExprError",
    "ParseError",
    "EvalError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "parse",
    "evaluate",
    "to_source",
]


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvalError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]

CONSTANTS = {"pi": math.pi}

# name -> (arity, implementation)
FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "log": (1, None),
    "sqrt": (1, None),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "chi": (3, None),
}

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.tok
        if text != value or kind != "op":
            found = text or "end of input"
            raise ParseError(f"expected {value!r}, found {found!r}", pos)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, pos = self.tok
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if self.tok[0] == "op" and self.tok[1] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos)
                self.advance()
                args = [self.expr()]
                while self.tok[0] == "op" and self.tok[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[text][0]
                if len(args) != arity:
                    raise ParseError(
                        f"{text} takes {arity} argument(s), got {len(args)}", pos
                    )
                return Call(text, tuple(args))
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = text or "end of input"
        raise ParseError(f"unexpected token {found!r}", pos)


def _free_vars(node: Node, acc: set) -> set:
    if isinstance(node, Var):
        if node.name not in CONSTANTS:
            acc.add(node.name)
    elif isinstance(node, Neg):
        _free_vars(node.operand, acc)
    elif isinstance(node, BinOp):
        _free_vars(node.left, acc)
        _free_vars(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _free_vars(a, acc)
    return acc


def _eval(node: Node, env: Mapping[str, object]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in env:
            return env[node.name]
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        raise EvalError(f"unbound variable {node.name!r}")
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise EvalError("division by zero")
            return a / b
        # "^"
        if np.any((np.asarray(a) == 0) & (np.asarray(b) < 0)):
            raise EvalError("zero raised to a negative power")
        with np.errstate(invalid="ignore"):
            out = np.power(np.asarray(a, dtype=float), b)
        return float(out) if np.ndim(out) == 0 else out
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.name == "chi":
            lo, hi, v = args
            out = np.where((lo <= np.asarray(v)) & (np.asarray(v) <= hi), 1.0, 0.0)
            return float(out) if out.ndim == 0 else out
        if node.name == "log":
            if np.any(np.asarray(args[0]) <= 0):
                raise EvalError("log of a nonpositive number")
            return np.log(args[0])
        if node.name == "sqrt":
            if np.any(np.asarray(args[0]) < 0):
                raise EvalError("sqrt of a negative number")
            return np.sqrt(args[0])
        return FUNCTIONS[node.name][1](*args)
    raise TypeError(f"not an expression node: {node!r}")


def _fmt_num(v: float) -> str:
    s = repr(float(v))
    if "inf" in s or "nan" in s:
        raise ExprError(f"cannot print non-finite literal {v}")
    return s


def to_source(node: Node) -> str:
    """Print a tree back to fully parenthesised source text."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


@dataclass(frozen=True)
class Expr:
    """A parsed expression. Immutable; evaluate with keyword bindings."""

    tree: Node
    source: str = ""

    @property
    def free_vars(self) -> frozenset:
        return frozenset(_free_vars(self.tree, set()))

    def __call__(self, **bindings):
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return self.source or to_source(self.tree)

    def is_constant(self) -> bool:
        return not self.free_vars


def parse(src: str) -> Expr:
    if not src or not src.strip():
        raise ParseError("empty expression", 0)
    return Expr(_Parser(src).parse(), src)


def evaluate(e: Expr | Node, bindings: Mapping[str, object] | None = None):
    """Evaluate ``e``; array bindings broadcast elementwise.

    A constant expression evaluated against array bindings is broadcast to
    the bindings' shape, so ``parse("1")(x=mesh)`` has the mesh's shape.
    """
    tree = e.tree if isinstance(e, Expr) else e
    env = dict(bindings or {})
    with np.errstate(divide="ignore", over="ignore"):
        out = _eval(tree, env)
    shapes = [np.shape(v) for v in env.values() if np.ndim(v) > 0]
    if shapes and np.ndim(out) == 0:
        return np.full(np.broadcast_shapes(*shapes), float(out))
    return out
