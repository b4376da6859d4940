"""Polynomial cylindrical functionals over a declared atlas of Wiener integrals.

Each atlas variable is ``X_i = int h_i dW^(alpha_i)`` for a grid kernel
``h_i`` and a component ``alpha_i`` in {1, 2}.  A functional is a sparse
polynomial in these variables with exact rational coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .kernels import Kernel, KernelError, gram_matrix
from .rationals import format_rational, to_fraction

Monomial = tuple[int, ...]


class AtlasError(ValueError):
    pass


class AtlasMismatchError(AtlasError):
    def __init__(self, a: "VariableAtlas", b: "VariableAtlas"):
        super().__init__(f"functionals live on different atlases: {a.describe()} vs {b.describe()}")


class MissingVariableError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"no value assigned to variable {self.name!r}"


@dataclass(frozen=True)
class Variable:
    name: str
    component: int
    kernel: Kernel


@dataclass(frozen=True)
class VariableAtlas:
    variables: tuple[Variable, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        names = [v.name for v in self.variables]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise AtlasError(f"duplicate variable names: {sorted(dup)}")
        for v in self.variables:
            if not v.name.isidentifier():
                raise AtlasError(f"variable name {v.name!r} is not an identifier")
            if v.component not in (1, 2):
                raise AtlasError(f"variable {v.name!r}: component must be 1 or 2, got {v.component!r}")
        ms = {v.kernel.m for v in self.variables}
        if len(ms) > 1:
            raise KernelError(f"atlas kernels use several grid resolutions: {sorted(ms)}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def build(cls, entries: Iterable[tuple[str, int, Kernel]]) -> "VariableAtlas":
        return cls(tuple(Variable(n, c, k) for n, c, k in entries))

    def __len__(self):
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def m(self) -> int | None:
        return self.variables[0].kernel.m if self.variables else None

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise MissingVariableError(name) from None

    def component(self, i: int) -> int:
        return self.variables[i].component

    def kernel(self, i: int) -> Kernel:
        return self.variables[i].kernel

    def gram(self) -> list[list[Fraction]]:
        return gram_matrix([v.kernel for v in self.variables])

    def describe(self) -> str:
        return "[" + ", ".join(f"{v.name}:{v.component}" for v in self.variables) + "]"

    # convenience constructors
    def var(self, name: str) -> "PolynomialFunctional":
        i = self.index(name)
        e = [0] * len(self)
        e[i] = 1
        return PolynomialFunctional(self, {tuple(e): Fraction(1)})

    def const(self, c) -> "PolynomialFunctional":
        return PolynomialFunctional.constant(self, c)

    def zero(self) -> "PolynomialFunctional":
        return PolynomialFunctional(self, {})


def _same_atlas(a: VariableAtlas, b: VariableAtlas) -> None:
    if a is not b and a != b:
        raise AtlasMismatchError(a, b)


def _grlex_key(mono: Monomial):
    return (-sum(mono), tuple(-e for e in mono))


class PolynomialFunctional:
    """Sparse polynomial ``{exponent tuple: Fraction}``; zero coefficients are never stored."""

    __slots__ = ("atlas", "terms")

    def __init__(self, atlas: VariableAtlas, terms: Mapping[Monomial, Fraction] | None = None):
        self.atlas = atlas
        n = len(atlas)
        clean: dict[Monomial, Fraction] = {}
        for mono, c in (terms or {}).items():
            if len(mono) != n:
                raise AtlasError(f"monomial {mono} has {len(mono)} exponents for {n} variables")
            c = to_fraction(c)
            if c:
                clean[tuple(mono)] = c
        self.terms = clean

    @classmethod
    def _raw(cls, atlas, terms):
        obj = cls.__new__(cls)
        obj.atlas = atlas
        obj.terms = terms
        return obj

    @classmethod
    def constant(cls, atlas: VariableAtlas, c) -> "PolynomialFunctional":
        return cls(atlas, {(0,) * len(atlas): to_fraction(c)})

    # -- structure --------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(m) for m in self.terms)

    def constant_value(self) -> Fraction:
        return self.terms.get((0,) * len(self.atlas), Fraction(0))

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        return max((sum(m) for m in self.terms), default=-1)

    def variables_used(self) -> list[int]:
        return [i for i in range(len(self.atlas)) if any(m[i] for m in self.terms)]

    def __eq__(self, other):
        if isinstance(other, PolynomialFunctional):
            return (self.atlas is other.atlas or self.atlas == other.atlas) and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == PolynomialFunctional.constant(self.atlas, other).terms
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"PolynomialFunctional({self.to_text()!r})"

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "PolynomialFunctional":
        if isinstance(other, PolynomialFunctional):
            _same_atlas(self.atlas, other.atlas)
            return other
        return PolynomialFunctional.constant(self.atlas, other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return PolynomialFunctional._raw(self.atlas, out)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialFunctional._raw(self.atlas, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, c) -> "PolynomialFunctional":
        c = to_fraction(c)
        if not c:
            return PolynomialFunctional._raw(self.atlas, {})
        return PolynomialFunctional._raw(self.atlas, {m: c * v for m, v in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, PolynomialFunctional):
            return self.scale(other)
        _same_atlas(self.atlas, other.atlas)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0) + c1 * c2
        return PolynomialFunctional._raw(self.atlas, {m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, PolynomialFunctional):
            raise TypeError("division of functionals is not supported")
        return self.scale(1 / to_fraction(c))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError(f"exponent must be a nonnegative integer, got {k!r}")
        result = PolynomialFunctional.constant(self.atlas, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # -- calculus ---------------------------------------------------------
    def partial(self, i: int) -> "PolynomialFunctional":
        out = {}
        for m, c in self.terms.items():
            e = m[i]
            if e:
                mm = list(m)
                mm[i] = e - 1
                out[tuple(mm)] = c * e
        return PolynomialFunctional._raw(self.atlas, out)

    def partial_multi(self, idx: Sequence[int]) -> "PolynomialFunctional":
        """Mixed partial for an (ordered or not) index tuple, computed in one pass."""
        counts = [0] * len(self.atlas)
        for i in idx:
            counts[i] += 1
        out = {}
        for m, c in self.terms.items():
            coef = c
            mm = list(m)
            for i, k in enumerate(counts):
                if k:
                    if mm[i] < k:
                        coef = 0
                        break
                    coef *= math.perm(mm[i], k)
                    mm[i] -= k
            if coef:
                out[tuple(mm)] = coef
        return PolynomialFunctional._raw(self.atlas, out)

    # -- evaluation -------------------------------------------------------
    def evaluate(self, assignment: Mapping[str, object], exact: bool | None = None):
        """Evaluate at ``{name: value}``.

        Exact rational evaluation is used when every needed value is an int,
        Fraction or ``"p/q"`` string (or when ``exact=True``); otherwise floats.
        """
        used = self.variables_used()
        vals = {}
        for i in used:
            name = self.atlas.variables[i].name
            if name not in assignment:
                raise MissingVariableError(name)
            vals[i] = assignment[name]
        if exact is None:
            exact = all(isinstance(v, (int, Fraction, str)) and not isinstance(v, bool) for v in vals.values())
        if exact:
            vals = {i: to_fraction(v) for i, v in vals.items()}
            total = Fraction(0)
        else:
            vals = {i: float(v) for i, v in vals.items()}
            total = 0.0
        for m, c in self.terms.items():
            t = c if exact else float(c)
            for i in used:
                if m[i]:
                    t *= vals[i] ** m[i]
            total += t
        return total

    def evaluate_batch(self, columns):
        """Vectorized float evaluation; ``columns[i]`` is a numpy array of samples of X_i."""
        import numpy as np

        n = None
        for i in self.variables_used():
            if columns[i] is None:
                raise MissingVariableError(self.atlas.variables[i].name)
            n = len(columns[i])
        if n is None:
            n = next((len(c) for c in columns if c is not None), 1)
        total = np.zeros(n)
        for m, c in sorted(self.terms.items(), key=lambda t: _grlex_key(t[0])):
            t = np.full(n, float(c))
            for i, e in enumerate(m):
                if e:
                    t = t * columns[i] ** e
            total += t
        return total

    # -- formatting -------------------------------------------------------
    def sorted_terms(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self.terms.items(), key=lambda t: _grlex_key(t[0]))

    def monomial_text(self, mono: Monomial) -> str:
        parts = []
        for v, e in zip(self.atlas.variables, mono):
            if e == 1:
                parts.append(v.name)
            elif e > 1:
                parts.append(f"{v.name}^{e}")
        return "*".join(parts)

    def to_text(self) -> str:
        return format_terms([(c, self.monomial_text(m)) for m, c in self.sorted_terms()])

    def to_json(self) -> dict:
        return {
            "variables": self.atlas.names,
            "terms": [
                {"coefficient": format_rational(c), "exponents": list(m)}
                for m, c in self.sorted_terms()
            ],
        }

    @classmethod
    def from_json(cls, atlas: VariableAtlas, obj: dict) -> "PolynomialFunctional":
        names = obj.get("variables", atlas.names)
        pos = [atlas.index(n) for n in names]
        terms: dict[Monomial, Fraction] = {}
        for t in obj["terms"]:
            e = [0] * len(atlas)
            for p, k in zip(pos, t["exponents"]):
                e[p] = int(k)
            terms[tuple(e)] = terms.get(tuple(e), 0) + to_fraction(t["coefficient"])
        return cls(atlas, terms)


def format_terms(items: list[tuple[Fraction, str]]) -> str:
    """Join ``(coefficient, monomial text)`` pairs as ``2*X*Y - 1/2*X + 3``."""
    if not items:
        return "0"
    out = []
    for k, (c, mono) in enumerate(items):
        neg = c < 0
        a = -c if neg else c
        if not mono:
            body = format_rational(a)
        elif a == 1:
            body = mono
        else:
            body = f"{format_rational(a)}*{mono}"
        if k == 0:
            out.append(f"-{body}" if neg else body)
        else:
            out.append(f" - {body}" if neg else f" + {body}")
    return "".join(out)


# -- Malliavin derivatives ------------------------------------------------

def malliavin_derivative(F: PolynomialFunctional, component: int) -> list[tuple[Kernel, PolynomialFunctional]]:
    """Expansion ``nabla_alpha F = sum_i (dF/dX_i) h_i`` over variables of that component.

    Terms sharing an identical kernel are collected.
    """
    if component not in (1, 2):
        raise ValueError(f"component must be 1 or 2, got {component!r}")
    collected: dict[Kernel, PolynomialFunctional] = {}
    for i in F.variables_used():
        if F.atlas.component(i) != component:
            continue
        d = F.partial(i)
        k = F.atlas.kernel(i)
        collected[k] = collected[k] + d if k in collected else d
    return [(k, p) for k, p in collected.items() if not p.is_zero()]


@dataclass
class DerivativeTensor:
    order: int
    atlas: VariableAtlas
    entries: dict[tuple[int, ...], PolynomialFunctional]

    def __getitem__(self, idx):
        return self.entries.get(tuple(idx), PolynomialFunctional._raw(self.atlas, {}))

    def is_zero(self) -> bool:
        return not self.entries

    def by_components(self) -> dict[tuple[int, ...], list[tuple[tuple[int, ...], PolynomialFunctional]]]:
        """Group entries by the component string of their index tuple."""
        groups: dict = {}
        for idx, p in self.entries.items():
            key = tuple(self.atlas.component(i) for i in idx)
            groups.setdefault(key, []).append((idx, p))
        return groups

    def named(self) -> dict[tuple[str, ...], PolynomialFunctional]:
        names = self.atlas.names
        return {tuple(names[i] for i in idx): p for idx, p in self.entries.items()}


def derivative_tensor(F: PolynomialFunctional, r: int) -> DerivativeTensor:
    if not isinstance(r, int) or r < 0:
        raise ValueError(f"derivative order must be a nonnegative integer, got {r!r}")
    if r == 0:
        entries = {} if F.is_zero() else {(): F}
        return DerivativeTensor(0, F.atlas, entries)
    used = F.variables_used()
    cache: dict[tuple[int, ...], PolynomialFunctional] = {}
    entries = {}
    if r <= max(F.degree(), 0):
        for idx in itertools.product(used, repeat=r):
            key = tuple(sorted(idx))
            if key not in cache:
                cache[key] = F.partial_multi(key)
            p = cache[key]
            if not p.is_zero():
                entries[idx] = p
    return DerivativeTensor(r, F.atlas, entries)

