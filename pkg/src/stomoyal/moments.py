"""Exact Gaussian expectations and p = 2 Sobolev norms of polynomial functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .functionals import PolynomialFunctional, VariableAtlas, derivative_tensor

DEFAULT_DEGREE_CAP = 12


class DegreeCapError(ValueError):
    def __init__(self, degree: int, cap: int):
        super().__init__(f"total degree {degree} exceeds the moment degree cap {cap}")
        self.degree, self.cap = degree, cap


def covariance_matrix(atlas: VariableAtlas) -> list[list[Fraction]]:
    """``Cov(X_i, X_j)``: the kernel inner product within a component, zero across components."""
    G = atlas.gram()
    n = len(atlas)
    return [
        [G[i][j] if atlas.component(i) == atlas.component(j) else Fraction(0) for j in range(n)]
        for i in range(n)
    ]


def gaussian_moment(counts: tuple[int, ...], cov) -> Fraction:
    """``E[prod_i X_i^counts[i]]`` for centred jointly Gaussian X with covariance ``cov``.

    Sum over perfect matchings, organised as a recursion that pairs the first
    remaining factor with every other remaining factor.
    """
    cov = tuple(tuple(row) for row in cov)

    @lru_cache(maxsize=None)
    def rec(c: tuple[int, ...]) -> Fraction:
        total = sum(c)
        if total == 0:
            return Fraction(1)
        if total % 2:
            return Fraction(0)
        i = next(k for k, v in enumerate(c) if v)
        rest = list(c)
        rest[i] -= 1
        acc = Fraction(0)
        for j, cj in enumerate(rest):
            if not cj or not cov[i][j]:
                continue
            nxt = list(rest)
            nxt[j] -= 1
            acc += cj * cov[i][j] * rec(tuple(nxt))
        return acc

    return rec(tuple(counts))


def expectation_exact(F: PolynomialFunctional, degree_cap: int = DEFAULT_DEGREE_CAP) -> Fraction:
    if F.degree() > degree_cap:
        raise DegreeCapError(F.degree(), degree_cap)
    cov = covariance_matrix(F.atlas)
    used = F.variables_used()
    sub = tuple(tuple(cov[i][j] for j in used) for i in used)
    total = Fraction(0)
    for mono, c in F.terms.items():
        total += c * _moment_cached(tuple(mono[i] for i in used), sub)
    return total


@lru_cache(maxsize=4096)
def _moment_cached(counts, cov) -> Fraction:
    return gaussian_moment(counts, cov)


def gradient_norm_squared(F: PolynomialFunctional, r: int) -> PolynomialFunctional:
    """The random variable ``||nabla^r F||^2`` in ``H^{(x) r}``, as a polynomial.

    ``sum_{i, j} d^r F / dX_i * d^r F / dX_j * prod_k <h_{i_k}, h_{j_k}>_H`` where
    the H inner product vanishes between the two independent components.
    """
    if not isinstance(r, int) or r < 0:
        raise ValueError(f"derivative order must be a nonnegative integer, got {r!r}")
    if r == 0:
        return F * F
    cov = covariance_matrix(F.atlas)
    entries = list(derivative_tensor(F, r).entries.items())
    out = PolynomialFunctional._raw(F.atlas, {})
    for idx_i, pi in entries:
        acc = PolynomialFunctional._raw(F.atlas, {})
        for idx_j, pj in entries:
            w = Fraction(1)
            for i, j in zip(idx_i, idx_j):
                w *= cov[i][j]
                if not w:
                    break
            if w:
                acc = acc + pj.scale(w)
        if not acc.is_zero():
            out = out + pi * acc
    return out


@dataclass(frozen=True)
class SobolevNorm:
    r: int
    squared: Fraction

    @property
    def value(self) -> float:
        return math.sqrt(self.squared)


def sobolev_norm_exact_p2(F: PolynomialFunctional, r: int,
                          degree_cap: int = DEFAULT_DEGREE_CAP) -> SobolevNorm:
    """``||F||_{r,2} = E[||nabla^r F||^2]^{1/2}``; the square is kept exact."""
    integrand = gradient_norm_squared(F, r)
    return SobolevNorm(r, expectation_exact(integrand, degree_cap))

