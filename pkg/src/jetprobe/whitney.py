"""Quantitative Taylor-condition checking and constructive smooth extensions.

Three pieces live here:

* ``check_taylor_condition`` measures, over a family of jets, the worst-case
  compatibility modulus

      W(I, m, delta) = max over pairs x != y with |x-y| <= delta of
          | lambda_{I,y} - sum_{|J|<=m} lambda_{I+J,x} (y-x)^J / J! | / |y-x|^m

  on a ladder of scales.  The epsilon-delta quantifier is discretized: the
  verdict is per scale, never a single boolean for the full quantifier.

* Constructive extensions.  ``cone_glue`` joins two functions with matching
  jets at the origin across the two nappes of the standard cone, using an
  angular cutoff instead of a second extension-theorem invocation.
  ``extend_separated`` and ``extend_sequence`` realize prescribed jets on
  separated point sets via flat-based bumps carrying local Taylor
  polynomials; the bump radii make the supports pairwise disjoint, so the
  prescribed jets are reproduced exactly.

* ``multiscale_certificate``: smoothness cannot be proven numerically, so it
  is replaced by a Cauchy test on central finite differences over a step
  ladder.  The certificate is a report, not a proof; it detects the
  constructed counterexamples while passing the constructed extensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from . import expr, jets
from .expr import Expression
from .jets import Jet, JetFamily, MultiIndex, mi_add, mi_enumerate, mi_factorial, mi_norm, mi_rank

DEFAULT_SCALES = (0.2, 0.1, 0.05, 0.02, 0.01)
CERTIFICATE_STEPS = (1e-1, 1e-2, 1e-3, 1e-4)

# Safety factor for the fitted linear tolerance rule tol(delta) = C * delta:
# for a family sampled from one smooth function the ratio W(delta)/delta can
# drift toward the pointwise supremum as delta shrinks, so the fit at the
# largest scale is padded.
_FIT_SAFETY = 3.0
_FIT_FLOOR = 1e-9


class WhitneyError(Exception):
    pass


class JetMismatchError(WhitneyError):
    """Gluing hypothesis violated: jets at the origin disagree."""


class SeparationError(WhitneyError):
    """Point sequence violates the required separation inequality."""


class DecayError(WhitneyError):
    """Coefficient decay toward the limit point fails the requested rate."""


# ---------------------------------------------------------------------------
# Taylor remainder and condition checking
# ---------------------------------------------------------------------------


def taylor_remainder(jet_x: Jet, jet_y: Jet, index: Sequence[int], m: int) -> float:
    """| lambda_{I,y} - sum_{|J|<=m} lambda_{I+J,x} (y-x)^J / J! |.

    Note the asymmetry in (jet_x, jet_y): the checker evaluates both
    orientations of every pair.
    """
    index = jets.as_multi_index(index)
    if jet_x.n != jet_y.n or len(index) != jet_x.n:
        raise ValueError("dimension mismatch")
    if jet_x.order < mi_norm(index) + m:
        raise ValueError(
            f"jet at x has order {jet_x.order}, need >= {mi_norm(index) + m}"
        )
    if jet_y.order < mi_norm(index):
        raise ValueError("jet at y has order below |I|")
    shift = [y - x for y, x in zip(jet_y.base, jet_x.base)]
    total = jet_y.coeff(index)
    for J in mi_enumerate(jet_x.n, m):
        term = jet_x.coeff(mi_add(index, J)) / mi_factorial(J)
        for axis, power in enumerate(J):
            if power:
                term *= shift[axis] ** power
        total -= term
    return abs(total)


@dataclass(frozen=True)
class ScaleResult:
    scale: float
    modulus: float
    vacuous: bool
    witness: tuple[tuple[float, ...], tuple[float, ...]] | None
    tolerance: float | None
    holds: bool | None

    def to_doc(self) -> dict:
        return {
            "scale": self.scale,
            "modulus": self.modulus,
            "vacuous": self.vacuous,
            "witness": None if self.witness is None else [list(self.witness[0]), list(self.witness[1])],
            "tolerance": self.tolerance,
            "holds": self.holds,
        }


@dataclass(frozen=True)
class WhitneyReport:
    """Per requested multi-index I: the modulus, witness pair and verdict at
    every scale."""

    m: int
    family_order: int
    scales: tuple[float, ...]
    results: dict[MultiIndex, tuple[ScaleResult, ...]]

    def holds(self) -> bool:
        """True when no non-vacuous scale fails (entries without a tolerance
        rule do not count against)."""
        return not any(
            r.holds is False for rs in self.results.values() for r in rs
        )

    def modulus(self, index: Sequence[int], scale: float) -> float:
        index = jets.as_multi_index(index)
        for r in self.results[index]:
            if r.scale == scale:
                return r.modulus
        raise KeyError(f"scale {scale} not in report")

    def to_doc(self) -> dict:
        return {
            "kind": "whitney_report",
            "m": self.m,
            "family_order": self.family_order,
            "scales": list(self.scales),
            "holds": self.holds(),
            "results": [
                {"index": list(index), "scales": [r.to_doc() for r in rs]}
                for index, rs in sorted(self.results.items(), key=lambda kv: (mi_norm(kv[0]), tuple(-c for c in kv[0])))
            ],
        }


ToleranceRule = Callable[[float], float]


def fitted_linear_rule(modulus_at_largest: float, largest_scale: float) -> ToleranceRule:
    """tol(delta) = safety * (W(delta_max)/delta_max) * delta + floor."""
    slope = _FIT_SAFETY * modulus_at_largest / largest_scale
    return lambda delta: slope * delta + _FIT_FLOOR


def check_taylor_condition(
    family: JetFamily,
    m: int,
    scales: Sequence[float] = DEFAULT_SCALES,
    tol: ToleranceRule | str | None = "fit-linear",
) -> WhitneyReport:
    """Measure the Taylor-condition modulus of a jet family.

    Checks every multi-index I with |I| <= min(m, family.order - m), so that
    all coefficients lambda_{I+J} with |J| <= m exist; supply jets of order
    2m to sweep the full range |I| <= m.  The limit jet, if present, takes
    part in the pairing.  Both orientations of every pair are evaluated; the
    witness is the maximizing ordered pair (x, y) with deterministic
    lexicographic tie-breaking.

    ``tol`` is a per-scale tolerance rule: a callable delta -> threshold, the
    string "fit-linear" (C * delta with C fitted at the largest scale), or
    None for a modulus-only report.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if family.order < m:
        raise ValueError(
            f"family order {family.order} below requested m = {m}"
        )
    all_jets = family.all_jets()
    n = family.n
    index_cap = min(m, family.order - m)
    i_list = mi_enumerate(n, index_cap)
    j_list = mi_enumerate(n, m)
    j_fact = np.array([mi_factorial(J) for J in j_list], dtype=float)
    j_exp = np.array(j_list, dtype=float)

    scales = tuple(sorted({float(s) for s in scales}, reverse=True))
    if not scales:
        raise ValueError("need at least one scale")
    largest = scales[0]

    points = np.array([jet.base for jet in all_jets])
    coeffs = np.array([jet.coeffs for jet in all_jets])

    # deterministic ordered pair list: sort jets by base point, all ordered
    # pairs, keep those within the largest scale
    by_point = sorted(range(len(all_jets)), key=lambda i: all_jets[i].base)
    raw_pairs = [(a, b) for a in by_point for b in by_point if a != b]
    ia = np.array([p[0] for p in raw_pairs], dtype=int)
    ib = np.array([p[1] for p in raw_pairs], dtype=int)
    diffs = points[ib] - points[ia]
    dist = np.linalg.norm(diffs, axis=1)
    keep = (dist > 0.0) & (dist <= largest)
    ia, ib, diffs, dist = ia[keep], ib[keep], diffs[keep], dist[keep]

    if len(ia):
        mono = np.empty((len(ia), len(j_list)))
        for col in range(len(j_list)):
            mono[:, col] = np.prod(diffs ** j_exp[col], axis=1)
        weighted = mono / j_fact
    else:
        weighted = np.zeros((0, len(j_list)))

    results: dict[MultiIndex, tuple[ScaleResult, ...]] = {}
    moduli: dict[MultiIndex, dict[float, tuple[float, bool, tuple | None]]] = {}
    for index in i_list:
        ranks = np.array([mi_rank(mi_add(index, J)) for J in j_list], dtype=int)
        if len(ia):
            pred = (coeffs[ia][:, ranks] * weighted).sum(axis=1)
            rem = np.abs(coeffs[ib, mi_rank(index)] - pred)
            ratio = rem / dist**m if m else rem
        else:
            ratio = np.zeros(0)
        per_scale = {}
        for delta in scales:
            mask = dist <= delta if len(ia) else np.zeros(0, dtype=bool)
            if not mask.any():
                per_scale[delta] = (0.0, True, None)
                continue
            live = np.flatnonzero(mask)
            best = live[int(np.argmax(ratio[live]))]
            witness = (tuple(points[ia[best]]), tuple(points[ib[best]]))
            per_scale[delta] = (float(ratio[best]), False, witness)
        moduli[index] = per_scale

    for index in i_list:
        rule: ToleranceRule | None
        if tol is None:
            rule = None
        elif tol == "fit-linear":
            rule = fitted_linear_rule(moduli[index][largest][0], largest)
        elif callable(tol):
            rule = tol
        else:
            raise ValueError(f"unknown tolerance rule {tol!r}")
        entries = []
        for delta in scales:
            w, vacuous, witness = moduli[index][delta]
            threshold = None if rule is None else float(rule(delta))
            holds = None
            if threshold is not None:
                holds = True if vacuous else (w <= threshold)
            entries.append(
                ScaleResult(delta, w, vacuous, witness, threshold, holds)
            )
        results[index] = tuple(entries)
    return WhitneyReport(m, family.order, scales, results)


# ---------------------------------------------------------------------------
# bumps and steps
# ---------------------------------------------------------------------------


@lru_cache(maxsize=512)
def radial_bump(center: tuple[float, ...], radius: float) -> Expression:
    """Smooth bump equal to 1 on |x - center| <= radius/2 and 0 outside
    |x - center| >= radius.

    Built as flat(u1) / (flat(u1) + flat(u2)) with u1, u2 affine in
    q = |x - center|^2 and normalized by radius^2 so the flat arguments stay
    in a numerically healthy range for arbitrarily small radii.  On the inner
    plateau the competing flat term is exactly 0, so the bump and all its
    derivative expressions evaluate there exactly as the constant 1.
    """
    if radius <= 0:
        raise ValueError("bump radius must be positive")
    q: Expression = expr.ZERO
    for axis, c in enumerate(center, start=1):
        q = expr.add(q, expr.pow_(expr.sub(expr.var(axis), expr.const(c)), 2))
    r2 = radius * radius
    outer = expr.div(expr.sub(expr.const(r2), q), expr.const(r2))
    inner = expr.div(expr.sub(q, expr.const(r2 / 4.0)), expr.const(r2))
    a = expr.flat(outer)
    b = expr.flat(inner)
    return expr.div(a, expr.add(a, b))


# ---------------------------------------------------------------------------
# multi-scale smoothness certificate
# ---------------------------------------------------------------------------

# central difference stencils of O(h^2) accuracy: order -> (offsets, weights)
_STENCILS: dict[int, tuple[tuple[int, ...], tuple[float, ...]]] = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


@dataclass(frozen=True)
class CertificateEntry:
    axis: int
    order: int
    estimates: tuple[float, ...]
    deltas: tuple[float, ...]
    passed: bool

    def to_doc(self) -> dict:
        return {
            "axis": self.axis,
            "order": self.order,
            "estimates": list(self.estimates),
            "deltas": list(self.deltas),
            "passed": self.passed,
        }


@dataclass(frozen=True)
class CertificateReport:
    point: tuple[float, ...]
    steps: tuple[float, ...]
    entries: tuple[CertificateEntry, ...]
    passed: bool

    def to_doc(self) -> dict:
        return {
            "kind": "smoothness_certificate",
            "point": list(self.point),
            "steps": list(self.steps),
            "passed": self.passed,
            "entries": [e.to_doc() for e in self.entries],
        }


def multiscale_certificate(
    func: Callable[[Sequence[float]], float],
    point: Sequence[float],
    max_order: int,
    steps: Sequence[float] = CERTIFICATE_STEPS,
    factor: float = 10.0,
) -> CertificateReport:
    """Cauchy test on central finite differences of orders 1..max_order along
    each coordinate axis.

    For each order and each pair of consecutive steps (h_coarse, h_fine) the
    estimates must satisfy |e2 - e1| <= factor * h_fine * (1 + max(|e1|,|e2|)).
    Orders above 4 are refused: their difference quotients at the finest
    default steps are dominated by rounding, so a verdict would be noise.
    """
    if max_order < 1:
        raise ValueError("certificate needs max_order >= 1")
    if max_order > max(_STENCILS):
        raise ValueError(f"certificate orders above {max(_STENCILS)} are unsupported")
    point = tuple(float(c) for c in point)
    steps = tuple(sorted((float(h) for h in steps), reverse=True))
    entries = []
    overall = True
    for axis in range(1, len(point) + 1):
        for order in range(1, max_order + 1):
            offsets, weights = _STENCILS[order]
            estimates = []
            for h in steps:
                acc = 0.0
                for off, w in zip(offsets, weights):
                    if w == 0.0:
                        continue
                    shifted = list(point)
                    shifted[axis - 1] += off * h
                    acc += w * func(shifted)
                estimates.append(acc / h**order)
            deltas = []
            ok = True
            for (h_coarse, e1), (h_fine, e2) in zip(
                zip(steps, estimates), zip(steps[1:], estimates[1:])
            ):
                gap = abs(e2 - e1)
                deltas.append(gap)
                if gap > factor * h_fine * (1.0 + max(abs(e1), abs(e2))):
                    ok = False
            overall = overall and ok
            entries.append(
                CertificateEntry(axis, order, tuple(estimates), tuple(deltas), ok)
            )
    return CertificateReport(point, steps, tuple(entries), overall)


def expression_certificate(
    e: Expression, point: Sequence[float], max_order: int,
    steps: Sequence[float] = CERTIFICATE_STEPS,
) -> CertificateReport:
    return multiscale_certificate(
        lambda x: expr.evaluate(e, x), point, max_order, steps
    )


# ---------------------------------------------------------------------------
# cone gluing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConeGeometry:
    """The standard truncated cone x_1^2 + ... + x_{n-1}^2 <= x_n^2,
    |x_n| <= 1, split into the nappes K1 (x_n >= 0) and K2 (x_n <= 0)."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("cone dimension must be >= 1")


def cone_membership(point: Sequence[float], geom: ConeGeometry) -> str:
    """Classify a point as 'K1', 'K2', 'apex' or 'outside'."""
    point = tuple(float(c) for c in point)
    if len(point) != geom.n:
        raise ValueError("point dimension mismatch")
    lateral = sum(c * c for c in point[:-1])
    vertical = point[-1]
    if all(c == 0.0 for c in point):
        return "apex"
    if abs(vertical) > 1.0 or lateral > vertical * vertical:
        return "outside"
    return "K1" if vertical >= 0.0 else "K2"


def cone_glue(
    u: Expression, v: Expression, geom: ConeGeometry, m: int,
    coeff_tol: float = 1e-9,
) -> Expression:
    """Glue u over K1 against v over K2 into one expression.

    Hypothesis (checked): the jets of u and v at the origin agree to order m
    within ``coeff_tol`` per coefficient.  The result is

        f = v + chi * (u - v)

    with chi the built-in angular cutoff, identically 1 on K1 away from the
    apex, identically 0 on K2, and 0 at the apex itself, so f evaluates to v
    there.  When u - v has vanishing jets at the origin to all computed
    orders, f passes the multi-scale smoothness certificate at the apex.
    """
    origin = (0.0,) * geom.n
    ju = jets.prolong(u, origin, m)
    jv = jets.prolong(v, origin, m)
    gap = np.abs(ju.coeffs - jv.coeffs)
    if gap.max(initial=0.0) > coeff_tol:
        worst = int(np.argmax(gap))
        index = mi_enumerate(geom.n, m)[worst]
        raise JetMismatchError(
            f"jets at the origin disagree at order <= {m}: "
            f"coefficient {index} differs by {gap[worst]:.3e} (tol {coeff_tol:.1e})"
        )
    chi = expr.angular_step(geom.n)
    return expr.add(v, expr.mul(chi, expr.sub(u, v)))


# ---------------------------------------------------------------------------
# extensions on separated point sets
# ---------------------------------------------------------------------------


def extend_separated(family: JetFamily) -> Expression:
    """Realize a finite family of jets at pairwise separated points.

    f = sum_k B_k * T_k with T_k the Taylor polynomial of the k-th jet and
    B_k a bump of radius one third of the distance to the nearest other
    point (1.0 for a singleton family).  Supports are pairwise disjoint and
    B_k is identically 1 near its center, so prolong(f, a_k, m) reproduces
    the prescribed jets exactly.
    """
    if family.limit is not None:
        raise ValueError("extend_separated expects a family without a limit jet")
    points = family.points()
    total: Expression = expr.ZERO
    for k, jet in enumerate(family.jets):
        if len(points) == 1:
            radius = 1.0
        else:
            nearest = min(
                math.dist(points[k], p) for j, p in enumerate(points) if j != k
            )
            radius = nearest / 3.0
        bump = radial_bump(jet.base, radius)
        total = expr.add(total, expr.mul(bump, jets.taylor_polynomial_expression(jet)))
    return total


def extend_sequence(
    family: JetFamily,
    c: float,
    scales: Sequence[float] = DEFAULT_SCALES,
    rate_order: int | None = None,
) -> Expression:
    """Realize jets along a sequence a_k -> 0 with zero limit jet.

    Hypotheses (checked):
      * the family carries a limit jet at the origin with all coefficients 0;
      * pairwise separation  max(|a_k|, |a_l|) < c |a_k - a_l|;
      * the coefficients decay toward the origin at the rate needed for
        ``rate_order`` (default: the family order), verified through
        ``check_taylor_condition`` against the limit point with the fitted
        linear per-scale rule.

    The construction is f = sum_k B_k * T_k with bump radii |a_k| / (4c);
    the separation hypothesis makes the supports pairwise disjoint and keeps
    them away from the origin, so the prescribed jets are reproduced exactly
    and the accumulation point can be certified with multi-scale finite
    differences.
    """
    if family.limit is None:
        raise ValueError("extend_sequence needs a family with a limit jet")
    if c <= 0:
        raise ValueError("separation constant must be positive")
    limit = family.limit
    if any(x != 0.0 for x in limit.base):
        raise ValueError("the limit point must be the origin")
    if np.abs(limit.coeffs).max(initial=0.0) > 1e-12:
        raise ValueError("the limit jet must be zero")

    points = family.points()
    norms = [math.dist(p, limit.base) for p in points]
    for k in range(len(points)):
        for l in range(k + 1, len(points)):
            gap = math.dist(points[k], points[l])
            if max(norms[k], norms[l]) >= c * gap:
                raise SeparationError(
                    f"points {k} and {l} violate max(|a_k|,|a_l|) < c |a_k - a_l| "
                    f"(|a_k|={norms[k]:.3e}, |a_l|={norms[l]:.3e}, gap={gap:.3e}, c={c})"
                )

    m = family.order if rate_order is None else rate_order
    report = check_taylor_condition(family, m, scales, tol="fit-linear")
    for index, entries in report.results.items():
        for entry in entries:
            if entry.holds is False:
                raise DecayError(
                    f"decay hypothesis fails for I={index} at scale {entry.scale}: "
                    f"modulus {entry.modulus:.3e} exceeds tolerance {entry.tolerance:.3e}"
                )

    total: Expression = expr.ZERO
    for k, jet in enumerate(family.jets):
        radius = norms[k] / (4.0 * c)
        bump = radial_bump(jet.base, radius)
        total = expr.add(total, expr.mul(bump, jets.taylor_polynomial_expression(jet)))
    return total
