"""Stochastic Moyal product on polynomial cylindrical functionals.

The bidifferential operators are built from Malliavin derivative tensors:
``C_r(F, G)`` sums, over component strings ``alpha, beta`` in {1,2}^r, the
symplectic weights ``Lambda[a1][b1] ... Lambda[ar][br]`` times the
slot-by-slot kernel contraction of ``nabla^r_alpha F`` against
``nabla^r_beta G``.  The star product is

    F * G = F G + sum_{r >= 1} hbar^r / r! C_r(F, G)

and terminates on polynomials because ``C_r`` vanishes once ``r`` exceeds
the smaller of the two degrees.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .functionals import (
    DerivativeTensor,
    PolynomialFunctional,
    VariableAtlas,
    _same_atlas,
    derivative_tensor,
    format_terms,
)
from .kernels import FLAT_METRIC, MetricProfile, contract

# Lambda^{1,2} = 1, Lambda^{2,1} = -1, zero diagonal; indexed by component - 1.
SYMPLECTIC = ((0, 1), (-1, 0))


def symplectic_weight(a: int, b: int) -> int:
    return SYMPLECTIC[a - 1][b - 1]


@lru_cache(maxsize=64)
def contraction_table(atlas: VariableAtlas, metric: MetricProfile) -> tuple[tuple[Fraction, ...], ...]:
    """``T[i][j]`` = contraction of kernels i and j with slot tags (comp i, comp j)."""
    n = len(atlas)
    return tuple(
        tuple(
            contract(atlas.kernel(i), atlas.kernel(j), metric, (atlas.component(i), atlas.component(j)))
            for j in range(n)
        )
        for i in range(n)
    )


def _check_order(r) -> None:
    if not isinstance(r, int) or isinstance(r, bool) or r < 0:
        raise ValueError(f"order r must be a nonnegative integer, got {r!r}")


# -- pairing and C_r --------------------------------------------------------

def _pair_groups(left, right, table, atlas) -> PolynomialFunctional:
    out = PolynomialFunctional._raw(atlas, {})
    for idx_f, pf in left:
        inner_sum = PolynomialFunctional._raw(atlas, {})
        for idx_g, pg in right:
            w = Fraction(1)
            for i, j in zip(idx_f, idx_g):
                w *= table[i][j]
                if not w:
                    break
            if w:
                inner_sum = inner_sum + pg.scale(w)
        if not inner_sum.is_zero():
            out = out + pf * inner_sum
    return out


def pairing(F: PolynomialFunctional, G: PolynomialFunctional, r: int,
            alpha: Sequence[int], beta: Sequence[int],
            metric: MetricProfile = FLAT_METRIC,
            _tensors: tuple[DerivativeTensor, DerivativeTensor] | None = None) -> PolynomialFunctional:
    """``< nabla^r_alpha F, nabla^r_beta G >`` integrated over ``[0,1]^r``."""
    _same_atlas(F.atlas, G.atlas)
    _check_order(r)
    alpha, beta = tuple(alpha), tuple(beta)
    if len(alpha) != r or len(beta) != r:
        raise ValueError(f"component strings must have length r={r}, got {len(alpha)} and {len(beta)}")
    if any(a not in (1, 2) for a in alpha + beta):
        raise ValueError("component strings may only contain 1 and 2")
    tf, tg = _tensors or (derivative_tensor(F, r), derivative_tensor(G, r))
    left = tf.by_components().get(alpha, [])
    right = tg.by_components().get(beta, [])
    if not left or not right:
        return PolynomialFunctional._raw(F.atlas, {})
    return _pair_groups(left, right, contraction_table(F.atlas, metric), F.atlas)


def c_r(F: PolynomialFunctional, G: PolynomialFunctional, r: int,
        metric: MetricProfile = FLAT_METRIC) -> PolynomialFunctional:
    _same_atlas(F.atlas, G.atlas)
    _check_order(r)
    if r == 0:
        return F * G
    if r > min(F.degree(), G.degree()):
        return PolynomialFunctional._raw(F.atlas, {})
    tf, tg = derivative_tensor(F, r), derivative_tensor(G, r)
    gf, gg = tf.by_components(), tg.by_components()
    table = contraction_table(F.atlas, metric)
    out = PolynomialFunctional._raw(F.atlas, {})
    for alpha in itertools.product((1, 2), repeat=r):
        if alpha not in gf:
            continue
        for beta in itertools.product((1, 2), repeat=r):
            if beta not in gg:
                continue
            w = 1
            for a, b in zip(alpha, beta):
                w *= symplectic_weight(a, b)
            if not w:
                continue
            term = _pair_groups(gf[alpha], gg[beta], table, F.atlas)
            out = out + term.scale(w)
    return out


def poisson_bracket(F: PolynomialFunctional, G: PolynomialFunctional,
                    metric: MetricProfile = FLAT_METRIC) -> PolynomialFunctional:
    """``int nabla_1 F nabla_2 G ds - int nabla_1 G nabla_2 F ds``.

    Written out over variable pairs rather than through ``c_r`` so that the
    identity ``{F, G} = C_1(F, G)`` is a genuine cross-check.
    """
    _same_atlas(F.atlas, G.atlas)
    atlas = F.atlas
    ones = [i for i in range(len(atlas)) if atlas.component(i) == 1]
    twos = [j for j in range(len(atlas)) if atlas.component(j) == 2]
    out = PolynomialFunctional._raw(atlas, {})
    for i in ones:
        dF1, dG1 = F.partial(i), G.partial(i)
        if dF1.is_zero() and dG1.is_zero():
            continue
        for j in twos:
            w = contract(atlas.kernel(i), atlas.kernel(j), metric, (1, 2))
            if w:
                out = out + (dF1 * G.partial(j) - dG1 * F.partial(j)).scale(w)
    return out


# -- formal series ----------------------------------------------------------

@dataclass
class FormalSeries:
    """Truncation ``sum_{r <= N} hbar^r F_r`` of an element of ``W[[hbar]]``."""

    coefficients: list[PolynomialFunctional]
    terminated: bool = False

    def __post_init__(self):
        if not self.coefficients:
            raise ValueError("a formal series needs at least the hbar^0 coefficient")

    @property
    def truncation_order(self) -> int:
        return len(self.coefficients) - 1

    @property
    def atlas(self) -> VariableAtlas:
        return self.coefficients[0].atlas

    @classmethod
    def of(cls, F: PolynomialFunctional) -> "FormalSeries":
        return cls([F], terminated=True)

    def coefficient(self, r: int) -> PolynomialFunctional:
        if r < len(self.coefficients):
            return self.coefficients[r]
        if self.terminated:
            return PolynomialFunctional._raw(self.atlas, {})
        raise IndexError(f"coefficient of hbar^{r} lies beyond truncation order {self.truncation_order}")

    def truncate(self, N: int) -> "FormalSeries":
        coeffs = [self.coefficient(r) for r in range(N + 1)]
        return FormalSeries(coeffs, terminated=self.terminated and N >= self.truncation_order)

    def __eq__(self, other):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        n = max(len(self.coefficients), len(other.coefficients))
        try:
            return all(self.coefficient(r) == other.coefficient(r) for r in range(n))
        except IndexError:
            return False

    def to_text(self, hbar: str = "h") -> str:
        items = []
        for r, coeff in enumerate(self.coefficients):
            h = "" if r == 0 else (hbar if r == 1 else f"{hbar}^{r}")
            for mono, c in coeff.sorted_terms():
                mt = coeff.monomial_text(mono)
                items.append((c, "*".join(p for p in (h, mt) if p)))
        return format_terms(items)

    def to_json(self) -> dict:
        return {
            "truncation_order": self.truncation_order,
            "terminated": self.terminated,
            "coefficients": [c.to_json() for c in self.coefficients],
        }

    @classmethod
    def from_json(cls, atlas: VariableAtlas, obj: dict) -> "FormalSeries":
        coeffs = [PolynomialFunctional.from_json(atlas, c) for c in obj["coefficients"]]
        if len(coeffs) != obj["truncation_order"] + 1:
            raise ValueError("coefficient count does not match truncation_order")
        return cls(coeffs, terminated=bool(obj["terminated"]))


def moyal_product(F: PolynomialFunctional, G: PolynomialFunctional, N: int | str = "auto",
                  metric: MetricProfile = FLAT_METRIC) -> FormalSeries:
    _same_atlas(F.atlas, G.atlas)
    bound = max(min(F.degree(), G.degree()), 0)
    if N == "auto":
        N = bound
    else:
        _check_order(N)
    coeffs = [c_r(F, G, r, metric).scale(Fraction(1, math.factorial(r))) for r in range(N + 1)]
    return FormalSeries(coeffs, terminated=N >= bound)


def _series_bound(A: FormalSeries, B: FormalSeries) -> int:
    bound = 0
    for a, Aa in enumerate(A.coefficients):
        for b, Bb in enumerate(B.coefficients):
            if not Aa.is_zero() and not Bb.is_zero():
                bound = max(bound, a + b + max(min(Aa.degree(), Bb.degree()), 0))
    return bound


def series_combine(A: FormalSeries, B: FormalSeries, op: str = "star",
                   metric: MetricProfile = FLAT_METRIC, order: int | None = None) -> FormalSeries:
    """hbar-bilinear extension of ``star`` (or plain ``add``) to series.

    Without ``order`` the result is truncated at the smaller truncation
    order, unless both inputs are terminated, in which case the result is
    computed exactly and is terminated too.
    """
    _same_atlas(A.atlas, B.atlas)
    exact = A.terminated and B.terminated
    if op == "add":
        N = order if order is not None else (
            max(A.truncation_order, B.truncation_order) if exact
            else min(A.truncation_order, B.truncation_order))
        coeffs = [A.coefficient(r) + B.coefficient(r) for r in range(N + 1)]
        return FormalSeries(coeffs, terminated=exact and N >= max(A.truncation_order, B.truncation_order))
    if op != "star":
        raise ValueError(f"unknown series operation {op!r}; expected 'star' or 'add'")
    if order is not None:
        N = order
    elif exact:
        N = _series_bound(A, B)
    else:
        N = min(A.truncation_order, B.truncation_order)
    atlas = A.atlas
    coeffs = [PolynomialFunctional._raw(atlas, {}) for _ in range(N + 1)]
    for a in range(N + 1):
        Aa = A.coefficient(a)
        if Aa.is_zero():
            continue
        for b in range(N + 1 - a):
            Bb = B.coefficient(b)
            if Bb.is_zero():
                continue
            for c in range(N + 1 - a - b):
                term = c_r(Aa, Bb, c, metric)
                if term.is_zero():
                    if c > min(Aa.degree(), Bb.degree()):
                        break
                    continue
                coeffs[a + b + c] = coeffs[a + b + c] + term.scale(Fraction(1, math.factorial(c)))
    terminated = exact and N >= _series_bound(A, B)
    return FormalSeries(coeffs, terminated=terminated)


# -- generic r-differential operators ---------------------------------------

Slot = tuple[int, int]  # (argument index, slot index within that argument's tensor)


@dataclass(frozen=True)
class ContractionTerm:
    """One coefficient map ``a^{n_1..n_r}``: a weighted full contraction of derivative slots.

    ``components[a]`` restricts argument ``a``'s tensor slots to a component
    string (``None`` leaves them free).  ``pairs`` is a perfect matching of
    all slots; each matched pair contributes one kernel contraction.
    """

    orders: tuple[int, ...]
    pairs: tuple[tuple[Slot, Slot], ...]
    weight: Fraction = Fraction(1)
    components: tuple[tuple[int, ...] | None, ...] | None = None

    def __post_init__(self):
        slots = [s for pair in self.pairs for s in pair]
        expected = {(a, k) for a, n in enumerate(self.orders) for k in range(n)}
        if len(slots) != len(set(slots)) or set(slots) != expected:
            raise ValueError(f"pairs must match every derivative slot exactly once; orders={self.orders}")
        if self.components is not None:
            if len(self.components) != len(self.orders):
                raise ValueError("one component string (or None) per argument is required")
            for cs, n in zip(self.components, self.orders):
                if cs is not None and len(cs) != n:
                    raise ValueError(f"component string {cs} does not match order {n}")


@dataclass(frozen=True)
class RDifferentialSpec:
    arity: int
    terms: tuple[ContractionTerm, ...]
    metric: MetricProfile = field(default=FLAT_METRIC)

    def __post_init__(self):
        for t in self.terms:
            if len(t.orders) != self.arity:
                raise ValueError(f"term orders {t.orders} do not match arity {self.arity}")

    @classmethod
    def gram_pairing(cls, n: int, metric: MetricProfile = FLAT_METRIC) -> "RDifferentialSpec":
        """``<nabla^n F, nabla^n G>`` with slot k of F paired to slot k of G."""
        pairs = tuple(((0, k), (1, k)) for k in range(n))
        return cls(2, (ContractionTerm((n, n), pairs),), metric)

    @classmethod
    def moyal_cochain(cls, r: int, metric: MetricProfile = FLAT_METRIC) -> "RDifferentialSpec":
        """The bidifferential operator ``C_r`` as a family of weighted contractions."""
        pairs = tuple(((0, k), (1, k)) for k in range(r))
        terms = []
        for alpha in itertools.product((1, 2), repeat=r):
            for beta in itertools.product((1, 2), repeat=r):
                w = 1
                for a, b in zip(alpha, beta):
                    w *= symplectic_weight(a, b)
                if w:
                    terms.append(ContractionTerm((r, r), pairs, Fraction(w), (alpha, beta)))
        return cls(2, tuple(terms), metric)


def apply_r_differential(spec: RDifferentialSpec, args: Sequence[PolynomialFunctional]) -> PolynomialFunctional:
    if len(args) != spec.arity:
        raise ValueError(f"operator has arity {spec.arity}, got {len(args)} arguments")
    if not args:
        raise ValueError("at least one argument is needed to fix the atlas")
    atlas = args[0].atlas
    for a in args[1:]:
        _same_atlas(atlas, a.atlas)
    table = contraction_table(atlas, spec.metric)
    tensors: dict[tuple[int, int], DerivativeTensor] = {}
    out = PolynomialFunctional._raw(atlas, {})
    for term in spec.terms:
        per_arg = []
        for a, n in enumerate(term.orders):
            key = (a, n)
            if key not in tensors:
                tensors[key] = derivative_tensor(args[a], n)
            entries = tensors[key].entries.items()
            comps = term.components[a] if term.components is not None else None
            if comps is not None:
                entries = [(idx, p) for idx, p in entries
                           if tuple(atlas.component(i) for i in idx) == comps]
            per_arg.append(list(entries))
        if any(not e for e in per_arg):
            continue
        for combo in itertools.product(*per_arg):
            w = term.weight
            for (a, k), (b, l) in term.pairs:
                w *= table[combo[a][0][k]][combo[b][0][l]]
                if not w:
                    break
            if not w:
                continue
            prod = combo[0][1]
            for _, p in combo[1:]:
                prod = prod * p
            out = out + prod.scale(w)
    return out


# -- axiom checks -----------------------------------------------------------

@dataclass
class CheckEntry:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AxiomReport:
    title: str
    entries: list[CheckEntry] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.entries.append(CheckEntry(name, bool(passed), detail))

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[CheckEntry]:
        return [e for e in self.entries if not e.passed]

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "all_passed": self.all_passed,
            "checks": [{"name": e.name, "passed": e.passed, "detail": e.detail} for e in self.entries],
        }

    def to_text(self) -> str:
        lines = [f"{self.title}:"]
        for e in self.entries:
            line = f"  [{'PASS' if e.passed else 'FAIL'}] {e.name}"
            if e.detail:
                line += f" ({e.detail})"
            lines.append(line)
        lines.append("all checks passed" if self.all_passed else f"{len(self.failures())} check(s) failed")
        return "\n".join(lines)


def _random_scalars(rng: random.Random, k: int) -> list[Fraction]:
    out = []
    while len(out) < k:
        q = Fraction(rng.randint(-5, 5), rng.randint(1, 4))
        if q:
            out.append(q)
    return out


def check_star_axioms(F: PolynomialFunctional, G: PolynomialFunctional, H: PolynomialFunctional,
                      N: int, metric: MetricProfile = FLAT_METRIC, seed: int = 0) -> AxiomReport:
    """Exact check of the deformation-quantization axioms on one triple, up to ``hbar^N``."""
    _same_atlas(F.atlas, G.atlas)
    _same_atlas(F.atlas, H.atlas)
    _check_order(N)
    report = AxiomReport(f"star-product axioms (metric={metric.name}, order={N})")
    rng = random.Random(seed)

    c0_ok = all(c_r(A, B, 0, metric) == A * B for A, B in ((F, G), (G, H), (F, H)))
    report.add("C_0(F,G) = FG", c0_ok)

    bad = []
    for A, B, label in ((F, G, "F,G"), (G, H, "G,H"), (F, H, "F,H")):
        lhs = c_r(A, B, 1, metric) - c_r(B, A, 1, metric)
        if lhs != poisson_bracket(A, B, metric).scale(2):
            bad.append(label)
    report.add("C_1(F,G) - C_1(G,F) = 2{F,G}", not bad, f"fails for {', '.join(bad)}" if bad else "")

    bad = []
    for r in range(N + 1):
        a, b = _random_scalars(rng, 2)
        lhs = c_r(F.scale(a) + H.scale(b), G, r, metric)
        rhs = c_r(F, G, r, metric).scale(a) + c_r(H, G, r, metric).scale(b)
        lhs2 = c_r(F, G.scale(a) + H.scale(b), r, metric)
        rhs2 = c_r(F, G, r, metric).scale(a) + c_r(F, H, r, metric).scale(b)
        if lhs != rhs or lhs2 != rhs2:
            bad.append(r)
    report.add("C_r bilinear", not bad, f"fails at r={bad}" if bad else "")

    bad = []
    for r in range(N + 1):
        if apply_r_differential(RDifferentialSpec.moyal_cochain(r, metric), [F, G]) != c_r(F, G, r, metric):
            bad.append(r)
    report.add("C_r bidifferential", not bad, f"fails at r={bad}" if bad else "")

    fg = moyal_product(F, G, N, metric)
    gh = moyal_product(G, H, N, metric)
    left = series_combine(fg, FormalSeries.of(H), "star", metric, order=N)
    right = series_combine(FormalSeries.of(F), gh, "star", metric, order=N)
    bad = [r for r in range(N + 1) if left.coefficient(r) != right.coefficient(r)]
    report.add(f"associativity through hbar^{N}", not bad, f"differs at hbar^{bad}" if bad else "")
    return report


def check_bracket_axioms(F: PolynomialFunctional, G: PolynomialFunctional, H: PolynomialFunctional,
                         metric: MetricProfile = FLAT_METRIC, seed: int = 0) -> AxiomReport:
    """Antisymmetry, bilinearity, Jacobi and Leibniz for the bracket, exactly."""
    _same_atlas(F.atlas, G.atlas)
    _same_atlas(F.atlas, H.atlas)
    report = AxiomReport(f"Poisson bracket axioms (metric={metric.name})")
    br = lambda A, B: poisson_bracket(A, B, metric)  # noqa: E731
    rng = random.Random(seed)
    a, b = _random_scalars(rng, 2)

    report.add("antisymmetry", br(F, G) == -br(G, F) and br(F, F).is_zero())
    report.add("bilinearity",
               br(F.scale(a) + H.scale(b), G) == br(F, G).scale(a) + br(H, G).scale(b)
               and br(F, G.scale(a) + H.scale(b)) == br(F, G).scale(a) + br(F, H).scale(b))
    jac = br(F, br(G, H)) + br(G, br(H, F)) + br(H, br(F, G))
    report.add("Jacobi identity", jac.is_zero(), "" if jac.is_zero() else f"residual {jac.to_text()}")
    report.add("Leibniz rule", br(F, G * H) == br(F, G) * H + G * br(F, H))
    return report

