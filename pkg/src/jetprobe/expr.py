"""Expression trees for smooth functions of several variables.

The node set is deliberately small -- constants, coordinates ``x1..xn``, an
optional scalar parameter ``t``, the four arithmetic operations, integer
powers, and the builtins ``exp``, ``sin``, ``cos``, ``log`` and ``flat`` --
but it is closed under exact symbolic differentiation, which is what the jet
machinery built on top of it needs.

``flat(u)`` is the map ``u -> exp(-1/u)`` for ``u > 0`` and ``0`` for
``u <= 0``.  It is smooth on all of R with every derivative vanishing at 0.
Its k-th derivative is ``P_k(1/u) * exp(-1/u)`` for a polynomial ``P_k`` with
integer coefficients; we represent it by the dedicated node ``Flat(u, k)``
whose evaluation hard-wires the value 0 on ``u <= 0``.  This keeps repeated
differentiation closed and keeps the zero branch exact in floating point.

Two internal node kinds extend the user grammar:

* ``Flat(arg, order)`` with ``order > 0`` arises only from differentiation.
* ``AngularStep(dim)`` is the angular cutoff used to glue functions across
  the two nappes of a cone: it evaluates to ``sigma(x_dim / |x|)`` where
  ``sigma`` is a flat-based step equal to 0 for arguments <= 0 and 1 for
  arguments >= 1/sqrt(2), and takes the value 0 at the origin (where no
  continuous extension exists).  Its derivative away from the origin is an
  ordinary expression.

Expressions are immutable values; they may be shared freely between threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence


class ExpressionError(Exception):
    """Base class for expression construction and evaluation failures."""


class ParseError(ExpressionError):
    """Raised on malformed input text; carries the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DomainError(ExpressionError):
    """Evaluation left a builtin's domain (log of a non-positive value,
    division by zero, overflow, or a non-finite intermediate)."""


class Expression:
    """Base class of all nodes.  Supports arithmetic operator overloading."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expression(other))

    def __radd__(self, other):
        return add(as_expression(other), self)

    def __sub__(self, other):
        return sub(self, as_expression(other))

    def __rsub__(self, other):
        return sub(as_expression(other), self)

    def __mul__(self, other):
        return mul(self, as_expression(other))

    def __rmul__(self, other):
        return mul(as_expression(other), self)

    def __truediv__(self, other):
        return div(self, as_expression(other))

    def __rtruediv__(self, other):
        return div(as_expression(other), self)

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"<expr {to_text(self)}>"


@dataclass(frozen=True, slots=True)
class Const(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expression):
    index: int  # 1-based coordinate index


@dataclass(frozen=True, slots=True)
class Param(Expression):
    pass


@dataclass(frozen=True, slots=True)
class Add(Expression):
    a: Expression
    b: Expression


@dataclass(frozen=True, slots=True)
class Sub(Expression):
    a: Expression
    b: Expression


@dataclass(frozen=True, slots=True)
class Mul(Expression):
    a: Expression
    b: Expression


@dataclass(frozen=True, slots=True)
class Div(Expression):
    a: Expression
    b: Expression


@dataclass(frozen=True, slots=True)
class Pow(Expression):
    base: Expression
    exponent: int  # non-negative: keeps differentiation closed


@dataclass(frozen=True, slots=True)
class Call(Expression):
    fn: str  # one of exp, sin, cos, log
    arg: Expression


@dataclass(frozen=True, slots=True)
class Flat(Expression):
    arg: Expression
    order: int = 0  # order-th derivative of u -> exp(-1/u), 0 on u <= 0


@dataclass(frozen=True, slots=True)
class AngularStep(Expression):
    dim: int  # ambient dimension; the step reads x_dim / |x|


@dataclass(frozen=True, slots=True)
class JetCoord(Expression):
    """Jet-space coordinate u{component}_{rank}; a leaf as far as the x_i
    derivatives are concerned.  Only meaningful when an evaluation supplies
    jet values (see operators.apply_jet_operator)."""

    component: int  # 1-based section component
    rank: int  # graded-lex rank of the multi-index


ZERO = Const(0.0)
ONE = Const(1.0)
_PARAM = Param()
_CALL_FNS = ("exp", "sin", "cos", "log")
STEP_THRESHOLD = 1.0 / math.sqrt(2.0)

# exp(-1/u) underflows to exactly 0.0 for 1/u above this; we return 0 early to
# avoid inf * 0 in the polynomial prefactor of high flat derivatives.
_FLAT_UNDERFLOW = 745.0


# ---------------------------------------------------------------------------
# construction helpers (with light, value-preserving constant folding)
# ---------------------------------------------------------------------------


def as_expression(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return const(value)
    raise TypeError(f"cannot interpret {value!r} as an expression")


def const(value: float) -> Const:
    return Const(float(value))


def var(index: int) -> Var:
    if index < 1:
        raise ValueError("variable indices are 1-based")
    return Var(index)


def param() -> Param:
    return _PARAM


def _is_const(e: Expression, value: float | None = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return const(-a.value)
    return Mul(Const(-1.0), a)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return const(a.value / b.value)
    return Div(a, b)


def pow_(base: Expression, exponent: int) -> Expression:
    if not isinstance(exponent, int) or isinstance(exponent, bool):
        raise ValueError("Pow exponents must be plain integers")
    if exponent < 0:
        raise ValueError("Pow exponents must be non-negative")
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        return const(base.value**exponent)
    return Pow(base, exponent)


def call(fn: str, arg: Expression) -> Expression:
    if fn not in _CALL_FNS:
        raise ValueError(f"unknown builtin {fn!r}")
    return Call(fn, as_expression(arg))


def exp(arg) -> Expression:
    return call("exp", as_expression(arg))


def sin(arg) -> Expression:
    return call("sin", as_expression(arg))


def cos(arg) -> Expression:
    return call("cos", as_expression(arg))


def log(arg) -> Expression:
    return call("log", as_expression(arg))


def flat(arg, order: int = 0) -> Expression:
    if order < 0:
        raise ValueError("flat derivative order must be >= 0")
    return Flat(as_expression(arg), order)


def angular_step(dim: int) -> Expression:
    if dim < 1:
        raise ValueError("angular step needs dimension >= 1")
    return AngularStep(dim)


def jet_coord(component: int, rank: int) -> Expression:
    if component < 1 or rank < 0:
        raise ValueError("jet coordinate indices out of range")
    return JetCoord(component, rank)


def children(e: Expression) -> tuple[Expression, ...]:
    if isinstance(e, (Add, Sub, Mul, Div)):
        return (e.a, e.b)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, (Call, Flat)):
        return (e.arg,)
    return ()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _flat_poly(order: int) -> tuple[int, ...]:
    """Coefficients (ascending, in v = 1/u) of the exact rational prefactor
    P_k with d^k/du^k exp(-1/u) = P_k(1/u) exp(-1/u) on u > 0.

    Recurrence: P_{k+1}(v) = v^2 (P_k(v) - P_k'(v)).
    """
    if order == 0:
        return (1,)
    prev = _flat_poly(order - 1)
    diff = [0] * len(prev)
    for i, c in enumerate(prev):
        diff[i] += c
        if i > 0:
            diff[i - 1] -= i * c
    return (0, 0) + tuple(diff)  # the leading (0, 0) multiplies by v^2


def flat_value(u: float, order: int = 0) -> float:
    """Evaluate the order-th derivative of u -> exp(-1/u), with the exact
    zero branch on u <= 0."""
    if u <= 0.0:
        return 0.0
    v = 1.0 / u
    if v >= _FLAT_UNDERFLOW:
        return 0.0
    poly = 0.0
    for c in reversed(_flat_poly(order)):
        poly = poly * v + c
    return math.exp(-v) * poly


def _angular_step_value(point: Sequence[float], dim: int) -> float:
    if len(point) < dim:
        raise ExpressionError(
            f"angular step needs {dim} coordinates, point has {len(point)}"
        )
    q = 0.0
    for c in point[:dim]:
        q += c * c
    if q == 0.0:
        return 0.0  # apex convention: glued function falls back to its v-branch
    s = point[dim - 1] / math.sqrt(q)
    a = flat_value(s)
    b = flat_value(STEP_THRESHOLD - s)
    return a / (a + b)


def _check_finite(value: float, node: Expression) -> float:
    if not math.isfinite(value):
        raise DomainError(f"non-finite value from {type(node).__name__}")
    return value


def evaluate(
    e: Expression,
    point: Sequence[float],
    t: float | None = None,
    jet_values: Sequence[Sequence[float]] | None = None,
) -> float:
    """Evaluate at a point (IEEE double).  ``t`` must be supplied exactly when
    the expression contains the parameter; ``jet_values[a-1][rank]`` backs the
    jet coordinates of operator expressions.

    Shared subtrees are evaluated once (the walk memoizes on node identity),
    so heavily shared derivative trees evaluate in DAG rather than tree size.
    """
    out: dict[int, float] = {}
    stack = [e]
    while stack:
        node = stack[-1]
        nid = id(node)
        if nid in out:
            stack.pop()
            continue
        kids = children(node)
        pending = [k for k in kids if id(k) not in out]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        out[nid] = _eval_node(node, [out[id(k)] for k in kids], point, t, jet_values)
    return out[id(e)]


def _eval_node(node, vals, point, t, jet_values) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        if node.index > len(point):
            raise ExpressionError(
                f"variable x{node.index} exceeds point dimension {len(point)}"
            )
        return float(point[node.index - 1])
    if isinstance(node, Param):
        if t is None:
            raise ExpressionError("expression depends on parameter t but t was not supplied")
        return float(t)
    if isinstance(node, Add):
        return _check_finite(vals[0] + vals[1], node)
    if isinstance(node, Sub):
        return _check_finite(vals[0] - vals[1], node)
    if isinstance(node, Mul):
        return _check_finite(vals[0] * vals[1], node)
    if isinstance(node, Div):
        if vals[1] == 0.0:
            raise DomainError("division by zero")
        return _check_finite(vals[0] / vals[1], node)
    if isinstance(node, Pow):
        try:
            return _check_finite(vals[0] ** node.exponent, node)
        except OverflowError as err:
            raise DomainError("overflow in integer power") from err
    if isinstance(node, Call):
        u = vals[0]
        if node.fn == "exp":
            try:
                return math.exp(u)
            except OverflowError as err:
                raise DomainError("overflow in exp") from err
        if node.fn == "sin":
            return math.sin(u)
        if node.fn == "cos":
            return math.cos(u)
        if node.fn == "log":
            if u <= 0.0:
                raise DomainError(f"log of non-positive value {u}")
            return math.log(u)
    if isinstance(node, Flat):
        return flat_value(vals[0], node.order)
    if isinstance(node, AngularStep):
        return _angular_step_value(point, node.dim)
    if isinstance(node, JetCoord):
        if jet_values is None:
            raise ExpressionError("jet coordinates need jet values to evaluate")
        comp = jet_values[node.component - 1]
        if node.rank >= len(comp):
            raise ExpressionError(
                f"jet coordinate u{node.component}_{node.rank} beyond supplied order"
            )
        return float(comp[node.rank])
    raise ExpressionError(f"cannot evaluate node {node!r}")


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def differentiate(
    e: Expression, axis: int, memo: dict | None = None
) -> Expression:
    """Exact partial derivative with respect to ``x_axis`` (1-based).

    ``memo`` maps ``(id(node), axis) -> (node, derivative)`` and may be reused
    across calls to share work between derivative-table builds; it keeps the
    keyed nodes alive so identity keys stay valid.
    """
    if axis < 1:
        raise ValueError("axes are 1-based")
    if memo is None:
        memo = {}
    stack = [e]
    while stack:
        node = stack[-1]
        key = (id(node), axis)
        if key in memo:
            stack.pop()
            continue
        kids = children(node)
        pending = [k for k in kids if (id(k), axis) not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        dkids = [memo[(id(k), axis)][1] for k in kids]
        memo[key] = (node, _diff_node(node, dkids, axis))
    return memo[(id(e), axis)][1]


def _diff_node(node, d, axis: int) -> Expression:
    if isinstance(node, (Const, Param, JetCoord)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == axis else ZERO
    if isinstance(node, Add):
        return add(d[0], d[1])
    if isinstance(node, Sub):
        return sub(d[0], d[1])
    if isinstance(node, Mul):
        return add(mul(d[0], node.b), mul(node.a, d[1]))
    if isinstance(node, Div):
        return div(sub(mul(d[0], node.b), mul(node.a, d[1])), pow_(node.b, 2))
    if isinstance(node, Pow):
        return mul(mul(const(node.exponent), pow_(node.base, node.exponent - 1)), d[0])
    if isinstance(node, Call):
        u = node.arg
        if node.fn == "exp":
            return mul(node, d[0])
        if node.fn == "sin":
            return mul(call("cos", u), d[0])
        if node.fn == "cos":
            return mul(neg(call("sin", u)), d[0])
        if node.fn == "log":
            return div(d[0], u)
    if isinstance(node, Flat):
        return mul(Flat(node.arg, node.order + 1), d[0])
    if isinstance(node, AngularStep):
        return _angular_step_derivative(node.dim, axis)
    raise ExpressionError(f"cannot differentiate node {node!r}")


@lru_cache(maxsize=None)
def _angular_step_derivative(dim: int, axis: int) -> Expression:
    # Away from the origin the step is sigma(x_dim/|x|) with |x| written as
    # exp(log(q)/2); the generic rules then apply.  At the origin the
    # derivative does not exist and the expression raises a domain error.
    q = ZERO
    for j in range(1, dim + 1):
        q = add(q, pow_(var(j), 2))
    norm = exp(mul(const(0.5), log(q)))
    s = div(var(dim), norm)
    a = flat(s)
    b = flat(sub(const(STEP_THRESHOLD), s))
    sigma = div(a, add(a, b))
    return differentiate(sigma, axis)


def partial(e: Expression, index: Sequence[int], memo: dict | None = None) -> Expression:
    """Iterated partial derivative D_I; partial orders commute on this grammar
    so axes are applied in ascending order."""
    result = e
    for axis, reps in enumerate(index, start=1):
        if reps < 0:
            raise ValueError("multi-index entries must be >= 0")
        for _ in range(reps):
            result = differentiate(result, axis, memo)
    return result


# ---------------------------------------------------------------------------
# structural queries and rewriting
# ---------------------------------------------------------------------------


def _walk(e: Expression) -> Iterable[Expression]:
    seen: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(children(node))


def uses_parameter(e: Expression) -> bool:
    return any(isinstance(node, Param) for node in _walk(e))


def max_var_index(e: Expression) -> int:
    """Smallest dimension the expression is defined over (0 for constants)."""
    best = 0
    for node in _walk(e):
        if isinstance(node, Var):
            best = max(best, node.index)
        elif isinstance(node, AngularStep):
            best = max(best, node.dim)
    return best


def node_count(e: Expression) -> int:
    return sum(1 for _ in _walk(e))


def substitute_parameter(e: Expression, value: float) -> Expression:
    """Replace the parameter t by a constant.  Unchanged subtrees are reused
    so derivative caches keyed on identity stay warm."""
    rebuilt: dict[int, Expression] = {}
    stack = [e]
    while stack:
        node = stack[-1]
        if id(node) in rebuilt:
            stack.pop()
            continue
        kids = children(node)
        pending = [k for k in kids if id(k) not in rebuilt]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        new_kids = [rebuilt[id(k)] for k in kids]
        if isinstance(node, Param):
            rebuilt[id(node)] = const(value)
        elif all(nk is k for nk, k in zip(new_kids, kids)):
            rebuilt[id(node)] = node
        elif isinstance(node, (Add, Sub, Mul, Div)):
            rebuilt[id(node)] = type(node)(new_kids[0], new_kids[1])
        elif isinstance(node, Pow):
            rebuilt[id(node)] = Pow(new_kids[0], node.exponent)
        elif isinstance(node, Call):
            rebuilt[id(node)] = Call(node.fn, new_kids[0])
        elif isinstance(node, Flat):
            rebuilt[id(node)] = Flat(new_kids[0], node.order)
        else:
            rebuilt[id(node)] = node
    return rebuilt[id(e)]


def flat_arguments(e: Expression) -> list[Expression]:
    """Arguments of every flat node, in no particular order."""
    return [node.arg for node in _walk(e) if isinstance(node, Flat)]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)

_VAR_RE = re.compile(r"^x(\d+)$")
_JET_RE = re.compile(r"^u(\d*)_(\d+)$")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser for

        expr   := ['-'] term (('+'|'-') term)*
        term   := factor (('*'|'/') factor)*
        factor := base ('^' integer)?
        base   := number | 'x'digits | 't' | func '(' expr ')' | '(' expr ')'
        func   := 'exp' | 'sin' | 'cos' | 'log' | 'flat'

    with an optional jet-coordinate extension ``u[component]_rank`` enabled by
    ``jet_context = (components, ranks)``.
    """

    def __init__(self, text: str, n: int, allow_parameter: bool,
                 jet_context: tuple[int, int] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n
        self.allow_parameter = allow_parameter
        self.jet_context = jet_context

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}", tok.pos)
        return self.advance()

    def parse(self) -> Expression:
        e = self.expression()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"trailing input {tok.text!r}", tok.pos)
        return e

    def expression(self) -> Expression:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            e = neg(self.term())
        else:
            e = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.advance()
                rhs = self.term()
                e = add(e, rhs) if tok.text == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expression:
        e = self.factor()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "*/":
                self.advance()
                rhs = self.factor()
                e = mul(e, rhs) if tok.text == "*" else div(e, rhs)
            else:
                return e

    def factor(self) -> Expression:
        e = self.base()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            num = self.peek()
            if num.kind != "number" or not num.text.isdigit():
                raise ParseError("exponent must be a non-negative integer", num.pos)
            self.advance()
            e = pow_(e, int(num.text))
        return e

    def base(self) -> Expression:
        tok = self.advance()
        if tok.kind == "number":
            return const(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            e = self.expression()
            self.expect_op(")")
            return e
        if tok.kind == "ident":
            return self.identifier(tok)
        raise ParseError(f"unexpected token {tok.text!r}", tok.pos)

    def identifier(self, tok: _Token) -> Expression:
        name = tok.text
        if name == "t":
            if not self.allow_parameter:
                raise ParseError("parameter t not allowed here", tok.pos)
            return param()
        if name in _CALL_FNS or name == "flat":
            self.expect_op("(")
            arg = self.expression()
            self.expect_op(")")
            return flat(arg) if name == "flat" else call(name, arg)
        m = _VAR_RE.match(name)
        if m:
            idx = int(m.group(1))
            if idx < 1:
                raise ParseError("variable indices start at x1", tok.pos)
            if idx > self.n:
                raise ParseError(
                    f"variable index {idx} exceeds dimension {self.n}", tok.pos
                )
            return var(idx)
        if self.jet_context is not None:
            m = _JET_RE.match(name)
            if m:
                components, ranks = self.jet_context
                comp = int(m.group(1)) if m.group(1) else 1
                rank = int(m.group(2))
                if not 1 <= comp <= components:
                    raise ParseError(
                        f"jet component {comp} out of range 1..{components}", tok.pos
                    )
                if rank >= ranks:
                    raise ParseError(
                        f"jet rank {rank} out of range 0..{ranks - 1}", tok.pos
                    )
                return jet_coord(comp, rank)
        raise ParseError(f"unknown identifier {name!r}", tok.pos)


def parse(
    text: str,
    n: int,
    allow_parameter: bool = True,
    jet_context: tuple[int, int] | None = None,
) -> Expression:
    """Parse source text over dimension ``n``.

    ``jet_context = (components, ranks)`` additionally admits jet-coordinate
    tokens ``u<a>_<rank>`` (``u_<rank>`` defaults the component to 1).
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return _Parser(text, n, allow_parameter, jet_context).parse()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def to_text(e: Expression, max_nodes: int = 4000) -> str:
    """Readable rendering.  Internal nodes print in a display-only form
    (``flat^(k)``, ``cone_step``); the JSON tree is the faithful encoding."""
    if node_count(e) > max_nodes:
        return f"<expression with {node_count(e)} nodes>"
    text, _ = _render(e)
    return text


def _render(e: Expression) -> tuple[str, int]:
    if isinstance(e, Const):
        v = e.value
        if v < 0:
            return repr(v), _PREC_ADD
        if v == int(v) and abs(v) < 1e16:
            return str(int(v)), _PREC_ATOM
        return repr(v), _PREC_ATOM
    if isinstance(e, Var):
        return f"x{e.index}", _PREC_ATOM
    if isinstance(e, Param):
        return "t", _PREC_ATOM
    if isinstance(e, JetCoord):
        return f"u{e.component}_{e.rank}", _PREC_ATOM
    if isinstance(e, AngularStep):
        return f"cone_step(n={e.dim})", _PREC_ATOM
    if isinstance(e, (Add, Sub)):
        op = "+" if isinstance(e, Add) else "-"
        la, lp = _render(e.a)
        ra, rp = _render(e.b)
        if lp < _PREC_ADD:
            la = f"({la})"
        if rp <= _PREC_ADD:
            ra = f"({ra})"
        return f"{la} {op} {ra}", _PREC_ADD
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        la, lp = _render(e.a)
        ra, rp = _render(e.b)
        if lp < _PREC_MUL:
            la = f"({la})"
        if rp <= _PREC_MUL:
            ra = f"({ra})"
        return f"{la}{op}{ra}", _PREC_MUL
    if isinstance(e, Pow):
        ba, bp = _render(e.base)
        if bp < _PREC_ATOM:
            ba = f"({ba})"
        return f"{ba}^{e.exponent}", _PREC_POW
    if isinstance(e, Call):
        arg, _ = _render(e.arg)
        return f"{e.fn}({arg})", _PREC_ATOM
    if isinstance(e, Flat):
        arg, _ = _render(e.arg)
        if e.order == 0:
            return f"flat({arg})", _PREC_ATOM
        return f"flat^({e.order})({arg})", _PREC_ATOM
    raise ExpressionError(f"cannot render {e!r}")
