"""Sections, jet-coordinate operators, the universal polynomial family, and a
catalog of black-box operator fixtures.

An ``OperatorHandle`` is the probing surface for the theorem engine: an
opaque, deterministic evaluator ``(section, point [, t]) -> value vector``.
Handles never expose their internals; probes in :mod:`jetprobe.peetre` must
go through evaluation only.  The catalog deliberately includes pathological
fixtures (non-local shift, a discontinuous branch, an operator whose order
blows up toward a point) so the probes' negative verdicts can be exercised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr, jets
from .expr import Expression
from .jets import Jet, MultiIndex, count_multi_indices, mi_enumerate, mi_norm, mi_rank


class OperatorError(Exception):
    pass


# ---------------------------------------------------------------------------
# domains and sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; the chart domain every construction works over."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(c) for c in self.lo)
        hi = tuple(float(c) for c in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box must have positive extent in every axis")

    @property
    def n(self) -> int:
        return len(self.lo)

    def contains(self, point: Sequence[float]) -> bool:
        return len(point) == self.n and all(
            a <= x <= b for x, a, b in zip(point, self.lo, self.hi)
        )

    def margin(self, point: Sequence[float]) -> float:
        """Distance from the point to the boundary (negative outside)."""
        return min(
            min(x - a, b - x) for x, a, b in zip(point, self.lo, self.hi)
        )

    def sample(self, rng: np.random.Generator, margin: float = 0.0) -> tuple[float, ...]:
        lo = np.array(self.lo) + margin
        hi = np.array(self.hi) - margin
        return tuple(rng.uniform(lo, hi))


def unit_box(n: int) -> Box:
    return Box((-1.0,) * n, (1.0,) * n)


@dataclass(frozen=True)
class Section:
    """A vector of expressions over a box, optionally depending on the family
    parameter t."""

    components: tuple[Expression, ...]
    n: int
    domain: Box | None = None

    def __post_init__(self):
        components = tuple(self.components)
        object.__setattr__(self, "components", components)
        if not components:
            raise ValueError("a section needs at least one component")
        for comp in components:
            used = expr.max_var_index(comp)
            if used > self.n:
                raise ValueError(
                    f"component uses x{used} but the section dimension is {self.n}"
                )
        if self.domain is None:
            object.__setattr__(self, "domain", unit_box(self.n))
        elif self.domain.n != self.n:
            raise ValueError("domain dimension mismatch")

    @property
    def r(self) -> int:
        return len(self.components)

    @property
    def parametric(self) -> bool:
        return any(expr.uses_parameter(c) for c in self.components)

    def evaluate(self, point: Sequence[float], t: float | None = None) -> np.ndarray:
        return np.array([expr.evaluate(c, point, t=t) for c in self.components])

    def at_parameter(self, t: float) -> "Section":
        """Freeze the family parameter, yielding a parameter-free section."""
        return Section(
            tuple(expr.substitute_parameter(c, t) for c in self.components),
            self.n,
            self.domain,
        )

    def __add__(self, other: "Section") -> "Section":
        if not isinstance(other, Section) or other.n != self.n or other.r != self.r:
            return NotImplemented
        return Section(
            tuple(expr.add(a, b) for a, b in zip(self.components, other.components)),
            self.n,
            self.domain,
        )


def section_from_expression(e: Expression, n: int, domain: Box | None = None) -> Section:
    return Section((e,), n, domain)


def prolong_section(section: Section, point: Sequence[float], order: int) -> tuple[Jet, ...]:
    """Componentwise jet prolongation; requires a parameter-free section."""
    if section.parametric:
        raise OperatorError("cannot prolong a parametric section; freeze t first")
    return tuple(jets.prolong(c, point, order) for c in section.components)


# ---------------------------------------------------------------------------
# jet-coordinate operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JetOperator:
    """A finite-order operator written in chart coordinates: target components
    are expressions in x_1..x_n and the jet coordinates u<a>_<rank> for
    a = 1..r and rank < C(n + order, n)."""

    n: int
    r: int
    order: int
    exprs: tuple[Expression, ...]

    def __post_init__(self):
        exprs = tuple(self.exprs)
        object.__setattr__(self, "exprs", exprs)
        if self.n < 1 or self.r < 1 or self.order < 0 or not exprs:
            raise ValueError("invalid jet operator signature")
        ranks = count_multi_indices(self.n, self.order)
        for e in exprs:
            for node in _jet_coords(e):
                if not 1 <= node.component <= self.r:
                    raise ValueError(
                        f"jet coordinate component {node.component} out of range"
                    )
                if node.rank >= ranks:
                    raise ValueError(
                        f"jet coordinate rank {node.rank} beyond order {self.order}"
                    )
            if expr.max_var_index(e) > self.n:
                raise ValueError("operator expression uses out-of-range variable")

    @property
    def rbar(self) -> int:
        return len(self.exprs)


def _jet_coords(e: Expression):
    stack = [e]
    seen = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, expr.JetCoord):
            yield node
        stack.extend(expr.children(node))


def parse_jet_operator(
    texts: Sequence[str], n: int, r: int, order: int
) -> JetOperator:
    ranks = count_multi_indices(n, order)
    parsed = tuple(
        expr.parse(t, n, allow_parameter=False, jet_context=(r, ranks))
        for t in texts
    )
    return JetOperator(n, r, order, parsed)


def apply_jet_operator(
    op: JetOperator, section: Section, point: Sequence[float]
) -> np.ndarray:
    """Evaluate P(j^k_x s): prolong the section, then substitute the jet
    coefficients for the jet coordinates."""
    if section.n != op.n or section.r != op.r:
        raise OperatorError("section signature does not match the operator")
    jet_tuple = prolong_section(section, point, op.order)
    jet_values = [jet.coeffs for jet in jet_tuple]
    return np.array(
        [expr.evaluate(e, point, jet_values=jet_values) for e in op.exprs]
    )


# ---------------------------------------------------------------------------
# universal polynomial family and Taylor sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniversalFamily:
    """The tautological family of polynomial sections of degree <= degree:
    parameters are the r * C(n+degree, n) monomial coefficients in graded-lex
    order, component-major."""

    n: int
    r: int
    degree: int

    @property
    def coefficient_dim(self) -> int:
        return self.r * count_multi_indices(self.n, self.degree)


def universal_section(
    family: UniversalFamily, coefficients: Sequence[float], domain: Box | None = None
) -> Section:
    """The section defined by the polynomial with the given monomial
    coefficients (graded-lex within each component)."""
    coefficients = [float(c) for c in coefficients]
    if len(coefficients) != family.coefficient_dim:
        raise ValueError(
            f"expected {family.coefficient_dim} coefficients, got {len(coefficients)}"
        )
    per = count_multi_indices(family.n, family.degree)
    comps = []
    for a in range(family.r):
        block = coefficients[a * per : (a + 1) * per]
        poly: Expression = expr.ZERO
        for coeff, index in zip(block, mi_enumerate(family.n, family.degree)):
            if coeff == 0.0:
                continue
            mono: Expression = expr.const(coeff)
            for axis, power in enumerate(index, start=1):
                if power:
                    mono = expr.mul(mono, expr.pow_(expr.var(axis), power))
            poly = expr.add(poly, mono)
        comps.append(poly)
    return Section(tuple(comps), family.n, domain)


def taylor_polynomial_section(
    jet_data: Jet | Sequence[Jet], domain: Box | None = None
) -> Section:
    """The polynomial section whose jet at the base point is the given one
    (componentwise for a tuple of jets)."""
    jet_tuple = (jet_data,) if isinstance(jet_data, Jet) else tuple(jet_data)
    if not jet_tuple:
        raise ValueError("need at least one jet")
    n = jet_tuple[0].n
    base = jet_tuple[0].base
    if any(j.n != n or j.base != base for j in jet_tuple):
        raise ValueError("jets must share the base point")
    return Section(
        tuple(jets.taylor_polynomial_expression(j) for j in jet_tuple), n, domain
    )


# ---------------------------------------------------------------------------
# operator handles and the fixture catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorHandle:
    """Black-box local-operator surface: deterministic, concurrently callable,
    evaluation-only.  ``claims`` records what the fixture says about itself
    (locality, linearity, order); probes may verify or refute the claims."""

    name: str
    n: int
    r: int
    rbar: int
    fn: Callable[[Section, tuple[float, ...], float | None], np.ndarray]
    claims: Mapping[str, object] = field(default_factory=dict)

    def __call__(
        self, section: Section, point: Sequence[float], t: float | None = None
    ) -> np.ndarray:
        if section.n != self.n or section.r != self.r:
            raise OperatorError(
                f"handle {self.name} expects sections with n={self.n}, r={self.r}"
            )
        point = tuple(float(c) for c in point)
        out = np.asarray(self.fn(section, point, t), dtype=float).reshape(self.rbar)
        return out


def from_jet_operator(op: JetOperator) -> OperatorHandle:
    """Wrap a jet-coordinate operator as a black box."""

    def fn(section: Section, point: tuple[float, ...], t: float | None) -> np.ndarray:
        sec = section.at_parameter(t) if section.parametric else section
        return apply_jet_operator(op, sec, point)

    return OperatorHandle(
        "from_jet_operator", op.n, op.r, op.rbar, fn,
        {"local": True, "order": op.order},
    )


def _frozen(section: Section, t: float | None) -> Section:
    return section.at_parameter(t) if section.parametric else section


def catalog_make(name: str, n: int = 1, r: int = 1, **params) -> OperatorHandle:
    """Construct a fixture from the catalog.

    Fixtures: ``from_jet_operator`` (P), ``shift`` (v), ``square``,
    ``laplacian``, ``derivative`` (index), ``pointwise_compose`` (g),
    ``discontinuous_family``, ``unbounded_order`` (x0, cap, axis).
    """
    if name == "from_jet_operator":
        return from_jet_operator(params["operator"])

    if name == "shift":
        v = tuple(float(c) for c in np.atleast_1d(params["v"]))
        if len(v) != n:
            raise ValueError("shift vector dimension mismatch")

        def fn(section, point, t):
            moved = tuple(x + d for x, d in zip(point, v))
            return _frozen(section, t).evaluate(moved)

        return OperatorHandle("shift", n, r, r, fn, {"local": False})

    if name == "square":
        def fn(section, point, t):
            vals = _frozen(section, t).evaluate(point)
            return vals * vals

        return OperatorHandle("square", n, r, r, fn,
                              {"local": True, "linear": False, "order": 0})

    if name == "laplacian":
        def fn(section, point, t):
            sec = _frozen(section, t)
            out = []
            for jet in prolong_section(sec, point, 2):
                out.append(
                    sum(jet.coeff(tuple(2 if j == axis else 0 for j in range(n)))
                        for axis in range(n))
                )
            return np.array(out)

        return OperatorHandle("laplacian", n, r, r, fn,
                              {"local": True, "linear": True, "order": 2})

    if name == "derivative":
        index = jets.as_multi_index(params["index"])
        if len(index) != n:
            raise ValueError("derivative index dimension mismatch")
        order = mi_norm(index)

        def fn(section, point, t):
            sec = _frozen(section, t)
            return np.array(
                [jet.coeff(index) for jet in prolong_section(sec, point, order)]
            )

        return OperatorHandle(f"derivative{index}", n, r, r, fn,
                              {"local": True, "linear": True, "order": order})

    if name == "pointwise_compose":
        g = params["g"]
        if expr.max_var_index(g) > r:
            raise ValueError("composition target reads more components than r")

        def fn(section, point, t):
            vals = _frozen(section, t).evaluate(point)
            return np.array([expr.evaluate(g, tuple(vals))])

        return OperatorHandle("pointwise_compose", n, r, 1, fn,
                              {"local": True, "order": 0})

    if name == "discontinuous_family":
        # Branch on the sign of s(x): order 0 and perfectly local, but a
        # smooth family crossing the branch produces a jump in t.
        def fn(section, point, t):
            val = float(_frozen(section, t).evaluate(point)[0])
            return np.array([val if val > 0.0 else val - 1.0])

        return OperatorHandle("discontinuous_family", n, r, 1, fn,
                              {"local": True, "order": 0, "regular": False})

    if name == "unbounded_order":
        x0 = tuple(float(c) for c in np.atleast_1d(params["x0"]))
        if len(x0) != n:
            raise ValueError("unbounded_order center dimension mismatch")
        cap = int(params.get("cap", 8))
        axis = int(params.get("axis", 1))

        def fn(section, point, t):
            sec = _frozen(section, t)
            dist = math.dist(point, x0)
            degree = cap if dist == 0.0 else min(cap, math.ceil(1.0 / dist))
            window = expr.flat_value(4.0 - dist * dist)
            index = tuple(degree if j + 1 == axis else 0 for j in range(n))
            return np.array(
                [window * jet.coeff(index)
                 for jet in prolong_section(sec, point, degree)]
            )

        return OperatorHandle("unbounded_order", n, r, r, fn,
                              {"local": True, "order": None, "cap": cap})

    raise OperatorError(f"unknown catalog fixture {name!r}")
