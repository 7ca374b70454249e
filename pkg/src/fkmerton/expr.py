"""Arithmetic expression trees for market-coefficient functions.

Model coefficients (short rate, drifts, volatilities, factor drift) are
supplied as text formulas over the time variable ``t`` and the factor
variables ``y1 .. ym`` (``y`` aliases ``y1`` when m = 1).  Formulas are
parsed once into immutable trees that support vectorised numpy evaluation
and exact symbolic differentiation, so derivative-based condition checks
do not stack finite-difference error on top of sampling error.

Grammar (standard infix, ``^`` binds tighter than unary minus)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?          right associative
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Functions: ``sin cos exp log sqrt abs tanh`` (unary), ``min max`` (binary).
``-y^2`` parses as ``-(y^2)`` and ``2^3^2`` as ``2^(3^2)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class ParseError(ValueError):
    """Rejected source text; ``position`` is the byte offset of the fault."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (offset {position})")
        self.position = position


class DomainError(ArithmeticError):
    """Evaluation left the real domain (log of a non-positive value, ...)."""


_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
}
_BINARY_FN = {"min": np.minimum, "max": np.maximum}


@dataclass(frozen=True, slots=True)
class _Num:
    value: float


@dataclass(frozen=True, slots=True)
class _Var:
    name: str
    index: int  # -1 for t, else 0-based factor index


@dataclass(frozen=True, slots=True)
class _Neg:
    arg: object


@dataclass(frozen=True, slots=True)
class _Bin:
    op: str
    lhs: object
    rhs: object


@dataclass(frozen=True, slots=True)
class _Call:
    name: str
    args: tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        match = _TOKEN.match(source, pos)
        if match is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            at = len(source) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", at)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, tokens, dims: int):
        self.tokens = tokens
        self.dims = dims
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, symbol: str):
        kind, text, pos = self.take()
        if kind != "op" or text != symbol:
            raise ParseError(f"expected {symbol!r}", pos)

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                node = _Bin(text, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                node = _Bin(text, node, self.factor())
            else:
                return node

    def factor(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return _Neg(self.factor())
        return self.power()

    def power(self):
        node = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return _Bin("^", node, self.factor())
        return node

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return _Num(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                return self.call(text, pos)
            return self.variable(text, pos)
        raise ParseError(f"expected a value, found {text!r}" if text else "unexpected end of input", pos)

    def call(self, name: str, pos: int):
        if name not in _UNARY and name not in _BINARY_FN:
            raise ParseError(f"unknown function {name!r}", pos)
        self.expect("(")
        args = [self.expr()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == ",":
                self.take()
                args.append(self.expr())
            else:
                break
        self.expect(")")
        arity = 1 if name in _UNARY else 2
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}", pos)
        return _Call(name, tuple(args))

    def variable(self, name: str, pos: int):
        if name == "t":
            return _Var("t", -1)
        if name == "y" and self.dims == 1:
            return _Var("y1", 0)
        match = re.fullmatch(r"y(\d+)", name)
        if match is not None:
            index = int(match.group(1))
            if 1 <= index <= self.dims:
                return _Var(name, index - 1)
        raise ParseError(f"unknown identifier {name!r}", pos)


def _eval(node, t, ys):
    if isinstance(node, _Num):
        return node.value
    if isinstance(node, _Var):
        return t if node.index < 0 else ys[node.index]
    if isinstance(node, _Neg):
        return -_eval(node.arg, t, ys)
    if isinstance(node, _Call):
        args = [_eval(a, t, ys) for a in node.args]
        if node.name == "log" and np.any(np.asarray(args[0]) <= 0.0):
            raise DomainError("log of a non-positive value")
        if node.name == "sqrt" and np.any(np.asarray(args[0]) < 0.0):
            raise DomainError("sqrt of a negative value")
        fn = _UNARY.get(node.name) or _BINARY_FN[node.name]
        return fn(*args)
    lhs = _eval(node.lhs, t, ys)
    rhs = _eval(node.rhs, t, ys)
    if node.op == "+":
        return np.add(lhs, rhs)
    if node.op == "-":
        return np.subtract(lhs, rhs)
    if node.op == "*":
        return np.multiply(lhs, rhs)
    if node.op == "/":
        if np.any(np.asarray(rhs) == 0.0):
            raise DomainError("division by zero")
        return np.divide(lhs, rhs)
    base = np.asarray(lhs)
    expo = np.asarray(rhs)
    if np.any((base < 0.0) & (np.mod(expo, 1.0) != 0.0)):
        raise DomainError("negative base raised to a non-integer power")
    if np.any((base == 0.0) & (expo < 0.0)):
        raise DomainError("zero base raised to a negative power")
    return np.power(lhs, rhs)


def _is_num(node, value=None):
    return isinstance(node, _Num) and (value is None or node.value == value)


def _num(value: float):
    return _Num(float(value))


def _add(a, b):
    if _is_num(a) and _is_num(b) and np.isfinite(a.value + b.value):
        return _num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return _Bin("+", a, b)


def _sub(a, b):
    if _is_num(a) and _is_num(b) and np.isfinite(a.value - b.value):
        return _num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return _Bin("-", a, b)


def _neg(a):
    if _is_num(a):
        return _num(-a.value)
    if isinstance(a, _Neg):
        return a.arg
    return _Neg(a)


def _mul(a, b):
    if _is_num(a) and _is_num(b) and np.isfinite(a.value * b.value):
        return _num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return _num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return _Bin("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return _num(0.0)
    if _is_num(b, 1.0):
        return a
    return _Bin("/", a, b)


def _pow(a, b):
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return _num(1.0)
    return _Bin("^", a, b)


def _diff(node, index: int):
    if isinstance(node, _Num):
        return _num(0.0)
    if isinstance(node, _Var):
        return _num(1.0 if node.index == index else 0.0)
    if isinstance(node, _Neg):
        return _neg(_diff(node.arg, index))
    if isinstance(node, _Bin):
        du = _diff(node.lhs, index)
        dv = _diff(node.rhs, index)
        if node.op == "+":
            return _add(du, dv)
        if node.op == "-":
            return _sub(du, dv)
        if node.op == "*":
            return _add(_mul(du, node.rhs), _mul(node.lhs, dv))
        if node.op == "/":
            num = _sub(_mul(du, node.rhs), _mul(node.lhs, dv))
            return _div(num, _pow(node.rhs, _num(2.0)))
        # u^v: constant exponents get the power rule, the general case
        # needs u > 0 anyway so u^v * (dv*log(u) + v*du/u) is safe.
        u, v = node.lhs, node.rhs
        if _is_num(v):
            return _mul(_mul(v, _pow(u, _num(v.value - 1.0))), du)
        general = _add(_mul(dv, _Call("log", (u,))), _div(_mul(v, du), u))
        return _mul(_pow(u, v), general)
    # function calls
    u = node.args[0]
    du = _diff(u, index)
    name = node.name
    if name == "sin":
        return _mul(_Call("cos", (u,)), du)
    if name == "cos":
        return _neg(_mul(_Call("sin", (u,)), du))
    if name == "exp":
        return _mul(node, du)
    if name == "log":
        return _div(du, u)
    if name == "sqrt":
        return _div(du, _mul(_num(2.0), node))
    if name == "tanh":
        return _mul(_sub(_num(1.0), _pow(node, _num(2.0))), du)
    if name == "abs":
        return _div(_mul(u, du), node)
    # min/max via (u+v)/2 -/+ |u-v|/2; differentiable off the tie set.
    v = node.args[1]
    dv = _diff(v, index)
    w = _sub(u, v)
    dw = _sub(du, dv)
    half_sum = _div(_add(du, dv), _num(2.0))
    kink = _div(_mul(w, dw), _mul(_num(2.0), _Call("abs", (w,))))
    return _sub(half_sum, kink) if name == "min" else _add(half_sum, kink)


def _prec(node):
    if isinstance(node, (_Var, _Call)):
        return 100
    if isinstance(node, _Num):
        return 100 if node.value >= 0 else 15
    if isinstance(node, _Neg):
        return 15
    return {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}[node.op]


def _to_str(node):
    if isinstance(node, _Num):
        return repr(node.value)
    if isinstance(node, _Var):
        return node.name
    if isinstance(node, _Call):
        return f"{node.name}({', '.join(_to_str(a) for a in node.args)})"
    if isinstance(node, _Neg):
        inner = _to_str(node.arg)
        if _prec(node.arg) <= 15:
            inner = f"({inner})"
        return f"-{inner}"
    lhs, rhs = _to_str(node.lhs), _to_str(node.rhs)
    mine = _prec(node)
    lp, rp = _prec(node.lhs), _prec(node.rhs)
    if node.op == "^":
        if lp <= mine:
            lhs = f"({lhs})"
        if rp < mine:
            rhs = f"({rhs})"
    else:
        if lp < mine:
            lhs = f"({lhs})"
        if rp <= mine:  # -, / are left associative; parenthesising + and * too is harmless
            rhs = f"({rhs})"
    return f"{lhs} {node.op} {rhs}"


def _max_index(node) -> int:
    if isinstance(node, _Var):
        return node.index
    if isinstance(node, _Neg):
        return _max_index(node.arg)
    if isinstance(node, _Bin):
        return max(_max_index(node.lhs), _max_index(node.rhs))
    if isinstance(node, _Call):
        return max(_max_index(a) for a in node.args)
    return -1


def _rename(node, mapping: dict[int, int]):
    if isinstance(node, _Var) and node.index >= 0:
        new = mapping.get(node.index, node.index)
        return _Var(f"y{new + 1}", new)
    if isinstance(node, _Neg):
        return _Neg(_rename(node.arg, mapping))
    if isinstance(node, _Bin):
        return _Bin(node.op, _rename(node.lhs, mapping), _rename(node.rhs, mapping))
    if isinstance(node, _Call):
        return _Call(node.name, tuple(_rename(a, mapping) for a in node.args))
    return node


@dataclass(frozen=True, slots=True)
class CoefficientExpr:
    """Immutable coefficient formula over ``t`` and ``y1 .. ym``."""

    root: object
    dims: int

    def evaluate(self, t, y=0.0):
        """Evaluate at time(s) ``t`` and factor value(s) ``y``.

        ``y`` may be a scalar (one factor), a length-m sequence, or an
        array of shape ``(m, ...)`` for batched evaluation; ``t`` must
        broadcast against the trailing shape.  Returns a float for scalar
        input, an ndarray otherwise.
        """
        y_arr = np.asarray(y, dtype=float)
        if y_arr.ndim == 0:
            y_arr = y_arr[None]
        if y_arr.shape[0] < self.dims:
            raise ValueError(f"expected {self.dims} factor value(s), got shape {y_arr.shape}")
        t_arr = np.asarray(t, dtype=float)
        ys = [y_arr[i] for i in range(y_arr.shape[0])]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = _eval(self.root, t_arr, ys)
        batch = np.broadcast_shapes(t_arr.shape, y_arr.shape[1:])
        if batch == ():
            return float(out)
        # constants evaluate to scalars; hand back the full batch shape
        return np.broadcast_to(np.asarray(out, dtype=float), batch)

    __call__ = evaluate

    def differentiate(self, var: str) -> "CoefficientExpr":
        """Exact partial derivative with respect to ``t`` or ``y<k>``."""
        if var == "t":
            index = -1
        elif var == "y" and self.dims == 1:
            index = 0
        else:
            match = re.fullmatch(r"y(\d+)", var)
            if match is None or not 1 <= int(match.group(1)) <= max(self.dims, 1):
                raise ValueError(f"unknown variable {var!r}")
            index = int(match.group(1)) - 1
        return CoefficientExpr(_diff(self.root, index), self.dims)

    def renamed(self, mapping: dict[str, str]) -> "CoefficientExpr":
        """Rewire factor variables, e.g. ``{"y2": "y1"}``; dims shrink to fit."""
        index_map = {}
        for old, new in mapping.items():
            index_map[int(old[1:]) - 1] = int(new[1:]) - 1
        root = _rename(self.root, index_map)
        return CoefficientExpr(root, max(_max_index(root) + 1, 1))

    def __str__(self) -> str:
        return _to_str(self.root)

    # Coefficient algebra, used to assemble derived quantities (risk premium,
    # drift and potential fields) as differentiable trees.
    def _coerce(self, other):
        if isinstance(other, CoefficientExpr):
            return other.root, max(self.dims, other.dims)
        return _num(float(other)), self.dims

    def __add__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_add(self.root, node), dims)

    def __radd__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_add(node, self.root), dims)

    def __sub__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_sub(self.root, node), dims)

    def __rsub__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_sub(node, self.root), dims)

    def __mul__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_mul(self.root, node), dims)

    def __rmul__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_mul(node, self.root), dims)

    def __truediv__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_div(self.root, node), dims)

    def __rtruediv__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_div(node, self.root), dims)

    def __pow__(self, other):
        node, dims = self._coerce(other)
        return CoefficientExpr(_pow(self.root, node), dims)

    def __neg__(self):
        return CoefficientExpr(_neg(self.root), self.dims)


def parse_expression(source: str, dims: int = 1) -> CoefficientExpr:
    """Parse ``source`` into a coefficient tree valid for ``dims`` factors."""
    if dims < 0:
        raise ValueError("dims must be non-negative")
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    tokens = _tokenize(source)
    return CoefficientExpr(_Parser(tokens, dims).parse(), dims)


def constant(value: float, dims: int = 1) -> CoefficientExpr:
    """A constant coefficient."""
    return CoefficientExpr(_num(value), dims)
