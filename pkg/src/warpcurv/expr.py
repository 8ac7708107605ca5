"""Scalar expression trees for metric entries and warping functions.

Expressions are immutable trees built from five node types.  They can be
parsed from ASCII source, differentiated exactly, lightly simplified,
rendered back to parseable source, and evaluated in double precision.

Grammar::

    expr   := term { ("+" | "-") term } ;
    term   := factor { ("*" | "/") factor } ;
    factor := ["-"] base [ "^" factor ] ;
    base   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")" ;
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Mapping

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


class ExprSyntaxError(ValueError):
    """Malformed expression source; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.reason = message
        self.position = position


class EvaluationError(ArithmeticError):
    """Domain failure while evaluating; ``expr`` is the offending subexpression."""

    def __init__(self, message: str, expr: "Expr"):
        super().__init__(f"{message} in '{expr}'")
        self.reason = message
        self.expr = expr


def _pow(a: float, b: float) -> float:
    if a == 0.0 and b < 0:
        raise ZeroDivisionError("0 raised to a negative power")
    return math.pow(a, b)


def _log(a: float) -> float:
    if a <= 0.0:
        raise ValueError("log of non-positive argument")
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0.0:
        raise ValueError("sqrt of negative argument")
    return math.sqrt(a)


_UNARY_FUNCS: dict[str, Callable[[float], float]] = {
    "neg": lambda a: -a,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": _log,
    "sqrt": _sqrt,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
}


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise ZeroDivisionError("division by zero")
    return a / b


_BINARY_FUNCS: dict[str, Callable[[float, float], float]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": _div,
    "pow": _pow,
}


class Expr:
    """Base class of expression nodes.

    Python operators build new trees, so closed-form formulas can be written
    naturally: ``(hp**2 - 2*h*hpp) / (4*h)``.
    """

    __slots__ = ()

    # -- construction helpers -------------------------------------------------
    def __add__(self, other):
        return Binary("add", self, as_expr(other))

    def __radd__(self, other):
        return Binary("add", as_expr(other), self)

    def __sub__(self, other):
        return Binary("sub", self, as_expr(other))

    def __rsub__(self, other):
        return Binary("sub", as_expr(other), self)

    def __mul__(self, other):
        return Binary("mul", self, as_expr(other))

    def __rmul__(self, other):
        return Binary("mul", as_expr(other), self)

    def __truediv__(self, other):
        return Binary("div", self, as_expr(other))

    def __rtruediv__(self, other):
        return Binary("div", as_expr(other), self)

    def __pow__(self, other):
        return Binary("pow", self, as_expr(other))

    def __rpow__(self, other):
        return Binary("pow", as_expr(other), self)

    def __neg__(self):
        return Unary("neg", self)

    # -- queries ---------------------------------------------------------------
    def free_names(self) -> frozenset[str]:
        raise NotImplementedError

    def depends_on(self, name: str) -> bool:
        return name in self.free_names()

    def evaluate(self, env: Mapping[str, float]) -> float:
        """Evaluate in double precision; raise :class:`EvaluationError` on a domain fault."""
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_source()


@dataclass(frozen=True, eq=True, repr=True)
class Number(Expr):
    value: float

    def free_names(self):
        return frozenset()

    def evaluate(self, env):
        return self.value

    def to_source(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError(f"cannot render non-finite literal {v!r}")
        text = repr(v)
        if text.endswith(".0") and "e" not in text:
            text = text[:-2]
        return f"({text})" if v < 0 or text.startswith("-") else text


@dataclass(frozen=True, eq=True, repr=True)
class Var(Expr):
    """A chart coordinate."""

    name: str

    def free_names(self):
        return frozenset((self.name,))

    def evaluate(self, env):
        try:
            return float(env[self.name])
        except KeyError:
            raise EvaluationError(f"unbound coordinate '{self.name}'", self) from None

    def to_source(self):
        return self.name


@dataclass(frozen=True, eq=True, repr=True)
class Param(Expr):
    """A named constant bound at evaluation time."""

    name: str

    def free_names(self):
        return frozenset((self.name,))

    def evaluate(self, env):
        try:
            return float(env[self.name])
        except KeyError:
            raise EvaluationError(f"unbound parameter '{self.name}'", self) from None

    def to_source(self):
        return self.name


@dataclass(frozen=True, eq=True, repr=True)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")

    @cached_property
    def _names(self):
        return self.arg.free_names()

    def free_names(self):
        return self._names

    def evaluate(self, env):
        a = self.arg.evaluate(env)
        try:
            return _UNARY_FUNCS[self.op](a)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise EvaluationError(str(exc) or "domain error", self) from None

    def to_source(self):
        if self.op == "neg":
            return f"(-{self.arg.to_source()})"
        return f"{self.op}({self.arg.to_source()})"


@dataclass(frozen=True, eq=True, repr=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")

    @cached_property
    def _names(self):
        return self.left.free_names() | self.right.free_names()

    def free_names(self):
        return self._names

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        try:
            return _BINARY_FUNCS[self.op](a, b)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise EvaluationError(str(exc) or "domain error", self) from None

    def to_source(self):
        return f"({self.left.to_source()} {_SYMBOLS[self.op]} {self.right.to_source()})"


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Number(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def sin(e): return Unary("sin", as_expr(e))
def cos(e): return Unary("cos", as_expr(e))
def tan(e): return Unary("tan", as_expr(e))
def exp(e): return Unary("exp", as_expr(e))
def log(e): return Unary("log", as_expr(e))
def sqrt(e): return Unary("sqrt", as_expr(e))
def sinh(e): return Unary("sinh", as_expr(e))
def cosh(e): return Unary("cosh", as_expr(e))
def tanh(e): return Unary("tanh", as_expr(e))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, coords, params):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.coords = set(coords)
        self.params = set(params)
        self.depth = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise ExprSyntaxError("empty input", 0)
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            if text == ")":
                raise ExprSyntaxError("unbalanced parentheses", pos)
            raise ExprSyntaxError(f"unexpected token {text!r}", pos)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            op = "add" if self.take()[1] == "+" else "sub"
            left = Binary(op, left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = "mul" if self.take()[1] == "*" else "div"
            left = Binary(op, left, self.factor())
        return left

    def factor(self):
        negate = False
        if self.peek()[1] == "-":
            self.take()
            negate = True
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            node = Binary("pow", node, self.factor())
        return Unary("neg", node) if negate else node

    def base(self):
        kind, text, pos = self.take()
        if kind == "number":
            return Number(float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ExprSyntaxError(f"function '{text}' requires an argument", pos)
                self.take()
                arg = self.expr()
                self.close()
                return Unary(text, arg)
            if text in self.coords:
                return Var(text)
            if text in self.params:
                return Param(text)
            raise ExprSyntaxError(f"unknown identifier '{text}'", pos)
        if text == "(":
            inner = self.expr()
            self.close()
            return inner
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        if text == ")":
            raise ExprSyntaxError("unbalanced parentheses", pos)
        raise ExprSyntaxError(f"unexpected token {text!r}", pos)

    def close(self):
        kind, text, pos = self.take()
        if text != ")":
            if kind == "end":
                raise ExprSyntaxError("unbalanced parentheses", pos)
            raise ExprSyntaxError(f"expected ')' but found {text!r}", pos)


def parse(source: str, coords: Iterable[str] = (), params: Iterable[str] = ()) -> Expr:
    """Parse ASCII source into an :class:`Expr`.

    Identifiers resolve to coordinates first, then parameters; the names in
    :data:`FUNCTIONS` are reserved for function application.
    """
    return _Parser(source, coords, params).parse()


# ---------------------------------------------------------------------------
# Differentiation and simplification
# ---------------------------------------------------------------------------

ZERO = Number(0.0)
ONE = Number(1.0)
TWO = Number(2.0)


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to coordinate ``v``.

    The result is passed through :func:`simplify_basic` so repeated
    differentiation does not grow zero branches.
    """
    return simplify_basic(_diff(e, v))


def _diff(e: Expr, v: str) -> Expr:
    if not e.depends_on(v):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        a = e.arg
        da = _diff(a, v)
        op = e.op
        if op == "neg":
            return Unary("neg", da)
        if op == "sin":
            inner = cos(a)
        elif op == "cos":
            inner = Unary("neg", sin(a))
        elif op == "tan":
            inner = ONE / cos(a) ** TWO
        elif op == "exp":
            inner = e
        elif op == "log":
            return da / a
        elif op == "sqrt":
            return da / (TWO * e)
        elif op == "sinh":
            inner = cosh(a)
        elif op == "cosh":
            inner = sinh(a)
        else:  # tanh
            inner = ONE - e ** TWO
        return inner * da
    assert isinstance(e, Binary)
    a, b = e.left, e.right
    if e.op == "add":
        return _diff(a, v) + _diff(b, v)
    if e.op == "sub":
        return _diff(a, v) - _diff(b, v)
    if e.op == "mul":
        return _diff(a, v) * b + a * _diff(b, v)
    if e.op == "div":
        return (_diff(a, v) * b - a * _diff(b, v)) / b ** TWO
    # pow
    if not b.depends_on(v):
        lowered = simplify_basic(b - ONE)
        return b * a ** lowered * _diff(a, v)
    # a^b = exp(b log a)
    return e * (_diff(b, v) * log(a) + b * _diff(a, v) / a)


def _is_num(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Number) and (value is None or e.value == value)


def simplify_basic(e: Expr) -> Expr:
    """Apply local, evaluation-preserving rewrites bottom-up.

    Rules: constant folding, ``x+0``, ``x-0``, ``0-x``, ``x*1``, ``x*0``,
    ``x/1``, ``0/x``, ``x^1``, ``x^0``, double negation.
    """
    if isinstance(e, Unary):
        a = simplify_basic(e.arg)
        if e.op == "neg":
            if isinstance(a, Unary) and a.op == "neg":
                return a.arg
            if isinstance(a, Number):
                return Number(-a.value)
        if isinstance(a, Number):
            folded = _fold(Unary(e.op, a))
            if folded is not None:
                return folded
        return e if a is e.arg else Unary(e.op, a)
    if isinstance(e, Binary):
        a = simplify_basic(e.left)
        b = simplify_basic(e.right)
        if isinstance(a, Number) and isinstance(b, Number):
            folded = _fold(Binary(e.op, a, b))
            if folded is not None:
                return folded
        op = e.op
        if op == "add":
            if _is_num(a, 0.0):
                return b
            if _is_num(b, 0.0):
                return a
        elif op == "sub":
            if _is_num(b, 0.0):
                return a
            if _is_num(a, 0.0):
                return simplify_basic(Unary("neg", b))
        elif op == "mul":
            if _is_num(a, 0.0) or _is_num(b, 0.0):
                return ZERO
            if _is_num(a, 1.0):
                return b
            if _is_num(b, 1.0):
                return a
            if _is_num(a, -1.0):
                return simplify_basic(Unary("neg", b))
            if _is_num(b, -1.0):
                return simplify_basic(Unary("neg", a))
            # (c1 * x) * c2 and c1 * (c2 * x) -> (c1 c2) * x
            if isinstance(a, Number) and isinstance(b, Binary) and b.op == "mul" and isinstance(b.left, Number):
                return simplify_basic(Binary("mul", Number(a.value * b.left.value), b.right))
            if isinstance(b, Number) and isinstance(a, Binary) and a.op == "mul" and isinstance(a.left, Number):
                return simplify_basic(Binary("mul", Number(a.left.value * b.value), a.right))
            if isinstance(b, Number):
                return Binary("mul", b, a)
        elif op == "div":
            if _is_num(b, 1.0):
                return a
            if _is_num(a, 0.0):
                return ZERO
        elif op == "pow":
            if _is_num(b, 1.0):
                return a
            if _is_num(b, 0.0):
                return ONE
        if a is e.left and b is e.right:
            return e
        return Binary(op, a, b)
    return e


def _fold(e: Expr) -> Number | None:
    try:
        value = e.evaluate({})
    except EvaluationError:
        return None
    if not math.isfinite(value):
        return None
    return Number(value)


# ---------------------------------------------------------------------------
# Fast evaluation
# ---------------------------------------------------------------------------

_PY_BINARY = {"add": "({} + {})", "sub": "({} - {})", "mul": "({} * {})",
              "div": "_div({}, {})", "pow": "_pow({}, {})"}


def _codegen(e: Expr, names: dict[str, str]) -> str:
    if isinstance(e, Number):
        return repr(float(e.value))
    if isinstance(e, (Var, Param)):
        return names[e.name]
    if isinstance(e, Unary):
        inner = _codegen(e.arg, names)
        if e.op == "neg":
            return f"(-{inner})"
        return f"_{e.op}({inner})"
    return _PY_BINARY[e.op].format(_codegen(e.left, names), _codegen(e.right, names))


def compile_many(exprs: list[Expr], order: list[str]) -> Callable[[list[float]], list[float]]:
    """Compile expressions into one function of positional values in ``order``.

    On any arithmetic fault the slow path re-evaluates the trees so the raised
    :class:`EvaluationError` names the offending subexpression.
    """
    names = {n: f"v[{k}]" for k, n in enumerate(order)}
    body = ", ".join(_codegen(e, names) for e in exprs)
    namespace = {f"_{k}": f for k, f in _UNARY_FUNCS.items()}
    namespace.update(_div=_div, _pow=_pow)
    fast = eval(f"lambda v: [{body}]", namespace)  # noqa: S307 - source is generated from trees

    def run(values):
        try:
            return fast(values)
        except (ValueError, ZeroDivisionError, OverflowError):
            env = dict(zip(order, values))
            for e in exprs:
                e.evaluate(env)
            raise

    return run


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    return e.evaluate(env)
