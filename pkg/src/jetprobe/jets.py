"""Multi-index arithmetic and truncated Taylor expansions (jets).

Conventions
-----------
* A multi-index is a tuple of non-negative ints ``I = (r_1, ..., r_n)`` with
  ``|I| = r_1 + ... + r_n`` and ``I! = r_1! ... r_n!``.  Python integers are
  arbitrary precision, so the factorial and addition operations cannot
  overflow silently.
* Multi-indices are enumerated in graded lexicographic order: ascending total
  degree, and within a degree descending tuple order, e.g. for n = 2:
  ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...``.  The enumeration up to a
  lower order is a prefix of the enumeration up to a higher one, so a
  multi-index has a well-defined rank independent of the truncation order.
* A ``Jet`` stores raw derivative values ``lambda_I = D_I f(a)``; division by
  ``I!`` happens only when a Taylor polynomial is evaluated or emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr
from .expr import Expression

MultiIndex = tuple[int, ...]


# ---------------------------------------------------------------------------
# multi-index arithmetic
# ---------------------------------------------------------------------------


def as_multi_index(obj: Sequence[int]) -> MultiIndex:
    index = tuple(int(c) for c in obj)
    if not index:
        raise ValueError("multi-indices need dimension >= 1")
    if any(c < 0 for c in index):
        raise ValueError(f"multi-index entries must be >= 0, got {index}")
    return index


def mi_norm(index: Sequence[int]) -> int:
    """Total degree |I|."""
    return sum(as_multi_index(index))


def mi_factorial(index: Sequence[int]) -> int:
    """I! as an exact integer."""
    out = 1
    for c in as_multi_index(index):
        out *= math.factorial(c)
    return out


def mi_add(left: Sequence[int], right: Sequence[int]) -> MultiIndex:
    a, b = as_multi_index(left), as_multi_index(right)
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return tuple(x + y for x, y in zip(a, b))


def _degree_block(n: int, degree: int) -> list[MultiIndex]:
    if n == 1:
        return [(degree,)]
    block = []
    for first in range(degree, -1, -1):
        for rest in _degree_block(n - 1, degree - first):
            block.append((first,) + rest)
    return block


@lru_cache(maxsize=None)
def mi_enumerate(n: int, order: int) -> tuple[MultiIndex, ...]:
    """All I with |I| <= order in graded-lex order; length C(n+order, n)."""
    if n < 1 or order < 0:
        raise ValueError("need n >= 1 and order >= 0")
    out: list[MultiIndex] = []
    for degree in range(order + 1):
        out.extend(_degree_block(n, degree))
    return tuple(out)


def count_multi_indices(n: int, order: int) -> int:
    return math.comb(n + order, n)


@lru_cache(maxsize=None)
def _rank_map(n: int, order: int) -> dict[MultiIndex, int]:
    return {index: rank for rank, index in enumerate(mi_enumerate(n, order))}


def mi_rank(index: Sequence[int]) -> int:
    """Graded-lex rank, stable under raising the truncation order."""
    index = as_multi_index(index)
    return _rank_map(len(index), mi_norm(index))[index]


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Jet:
    """Truncated Taylor data at a base point: ``coeffs[rank(I)] = lambda_I``
    for every |I| <= order, in graded-lex order."""

    base: tuple[float, ...]
    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        base = tuple(float(c) for c in self.base)
        object.__setattr__(self, "base", base)
        if not base:
            raise ValueError("jet base point needs dimension >= 1")
        if self.order < 0:
            raise ValueError("jet order must be >= 0")
        coeffs = np.asarray(self.coeffs, dtype=float)
        expected = count_multi_indices(len(base), self.order)
        if coeffs.shape != (expected,):
            raise ValueError(
                f"jet of order {self.order} in dimension {len(base)} needs "
                f"{expected} coefficients, got shape {coeffs.shape}"
            )
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return len(self.base)

    def coeff(self, index: Sequence[int]) -> float:
        index = as_multi_index(index)
        if len(index) != self.n:
            raise ValueError("multi-index dimension mismatch")
        if mi_norm(index) > self.order:
            raise ValueError(f"multi-index {index} beyond jet order {self.order}")
        return float(self.coeffs[mi_rank(index)])

    def as_dict(self) -> dict[MultiIndex, float]:
        return {
            index: float(v)
            for index, v in zip(mi_enumerate(self.n, self.order), self.coeffs)
        }

    def same_coeffs(self, other: "Jet") -> bool:
        return (
            self.n == other.n
            and self.order == other.order
            and np.array_equal(self.coeffs, other.coeffs)
        )

    def allclose(self, other: "Jet", atol: float = 1e-9) -> bool:
        return (
            self.n == other.n
            and self.order == other.order
            and bool(np.all(np.abs(self.coeffs - other.coeffs) <= atol))
        )


def jet_from_map(
    base: Sequence[float], order: int, values: Mapping[Sequence[int], float]
) -> Jet:
    """Build a jet from a sparse ``{multi-index: lambda_I}`` mapping; missing
    entries are zero."""
    base = tuple(float(c) for c in base)
    n = len(base)
    coeffs = np.zeros(count_multi_indices(n, order))
    for index, value in values.items():
        index = as_multi_index(index)
        if len(index) != n or mi_norm(index) > order:
            raise ValueError(f"multi-index {index} out of range for order {order}")
        coeffs[mi_rank(index)] = float(value)
    return Jet(base, order, coeffs)


def zero_jet(base: Sequence[float], order: int) -> Jet:
    base = tuple(float(c) for c in base)
    return Jet(base, order, np.zeros(count_multi_indices(len(base), order)))


# ---------------------------------------------------------------------------
# prolongation and evaluation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def derivative_table(
    e: Expression, n: int, order: int
) -> dict[MultiIndex, Expression]:
    """Symbolic D_I e for every |I| <= order, built incrementally so each
    arrow in the derivative lattice is taken once.  Cached per (e, n, order);
    probing loops prolong the same section at many points."""
    memo: dict = {}
    table: dict[MultiIndex, Expression] = {(0,) * n: e}
    for degree in range(1, order + 1):
        for index in _degree_block(n, degree):
            axis = next(i for i, c in enumerate(index) if c > 0)
            parent = tuple(
                c - 1 if i == axis else c for i, c in enumerate(index)
            )
            table[index] = expr.differentiate(table[parent], axis + 1, memo)
    return table


def prolong(e: Expression, base: Sequence[float], order: int) -> Jet:
    """Jet prolongation: coeffs[I] = (D_I e)(base) for all |I| <= order."""
    if expr.uses_parameter(e):
        raise expr.ExpressionError(
            "cannot prolong a parametric expression; substitute t first"
        )
    base = tuple(float(c) for c in base)
    n = len(base)
    needed = expr.max_var_index(e)
    if needed > n:
        raise expr.ExpressionError(
            f"expression uses x{needed} but base point has dimension {n}"
        )
    table = derivative_table(e, n, order)
    coeffs = np.array(
        [expr.evaluate(table[index], base) for index in mi_enumerate(n, order)]
    )
    return Jet(base, order, coeffs)


def taylor_eval(jet: Jet, point: Sequence[float]) -> float:
    """Evaluate the Taylor polynomial sum_{|I|<=m} lambda_I (y-a)^I / I!."""
    point = tuple(float(c) for c in point)
    if len(point) != jet.n:
        raise ValueError("point dimension mismatch")
    shift = [y - a for y, a in zip(point, jet.base)]
    total = 0.0
    for rank, index in enumerate(mi_enumerate(jet.n, jet.order)):
        term = float(jet.coeffs[rank])
        if term == 0.0:
            continue
        for axis, power in enumerate(index):
            if power:
                term *= shift[axis] ** power
        total += term / mi_factorial(index)
    return total


def truncate(jet: Jet, order: int) -> Jet:
    """Drop coefficients above ``order``; the graded-lex layout makes this a
    prefix slice."""
    if order > jet.order:
        raise ValueError(f"cannot truncate order-{jet.order} jet to order {order}")
    keep = count_multi_indices(jet.n, order)
    return Jet(jet.base, order, np.array(jet.coeffs[:keep]))


def taylor_polynomial_expression(jet: Jet) -> Expression:
    """The polynomial sum_I lambda_I (x-a)^I / I! as an expression tree; its
    prolongation at the base point reproduces the jet."""
    terms: Expression = expr.ZERO
    for rank, index in enumerate(mi_enumerate(jet.n, jet.order)):
        c = float(jet.coeffs[rank])
        if c == 0.0:
            continue
        mono: Expression = expr.const(c / mi_factorial(index))
        for axis, power in enumerate(index, start=1):
            if power:
                shifted = expr.sub(expr.var(axis), expr.const(jet.base[axis - 1]))
                mono = expr.mul(mono, expr.pow_(shifted, power))
        terms = expr.add(terms, mono)
    return terms


# ---------------------------------------------------------------------------
# jet families
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JetFamily:
    """Finitely many jets of a common order at pairwise distinct points, with
    an optional distinguished limit-point jet."""

    jets: tuple[Jet, ...]
    limit: Jet | None = None

    def __post_init__(self):
        jets = tuple(self.jets)
        object.__setattr__(self, "jets", jets)
        if not jets:
            raise ValueError("a jet family needs at least one jet")
        n, order = jets[0].n, jets[0].order
        for jet in jets:
            if jet.n != n or jet.order != order:
                raise ValueError("family jets must share dimension and order")
        if self.limit is not None and (self.limit.n != n or self.limit.order != order):
            raise ValueError("limit jet must share dimension and order")
        points = [jet.base for jet in self.all_jets()]
        if len(set(points)) != len(points):
            raise ValueError("family points must be pairwise distinct")

    @property
    def n(self) -> int:
        return self.jets[0].n

    @property
    def order(self) -> int:
        return self.jets[0].order

    def all_jets(self) -> tuple[Jet, ...]:
        return self.jets + ((self.limit,) if self.limit is not None else ())

    def points(self) -> list[tuple[float, ...]]:
        return [jet.base for jet in self.jets]


def family_from_expression(
    e: Expression,
    points: Iterable[Sequence[float]],
    order: int,
    limit_point: Sequence[float] | None = None,
) -> JetFamily:
    """Sample the jets of one smooth expression at the given points."""
    jets = tuple(prolong(e, p, order) for p in points)
    limit = prolong(e, limit_point, order) if limit_point is not None else None
    return JetFamily(jets, limit)
