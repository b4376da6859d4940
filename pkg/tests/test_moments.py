import math
from fractions import Fraction as Q

import pytest

from randgen import random_atlas, random_polynomial, rng_for
from stomoyal.functionals import PolynomialFunctional, VariableAtlas
from stomoyal.kernels import make_kernel
from stomoyal.moments import (
    DegreeCapError,
    covariance_matrix,
    expectation_exact,
    gradient_norm_squared,
    sobolev_norm_exact_p2,
)

E = make_kernel([1, 1], 2)


def matchings(points):
    if not points:
        yield []
        return
    first, rest = points[0], points[1:]
    for k, other in enumerate(rest):
        for m in matchings(rest[:k] + rest[k + 1:]):
            yield [(first, other)] + m


def brute_expectation(F):
    """Isserlis by explicit enumeration of perfect matchings of each monomial's factors."""
    cov = covariance_matrix(F.atlas)
    total = Q(0)
    for mono, c in F.terms.items():
        factors = [i for i, e in enumerate(mono) for _ in range(e)]
        if len(factors) % 2:
            continue
        s = Q(0)
        for m in matchings(factors):
            s += math.prod((cov[a][b] for a, b in m), start=Q(1))
        total += c * s
    return total


@pytest.fixture
def xy():
    atlas = VariableAtlas.build([("X", 1, E), ("Y", 2, E)])
    return atlas, atlas.var("X"), atlas.var("Y")


def test_matching_counts():
    assert sum(1 for _ in matchings(list(range(4)))) == 3
    assert sum(1 for _ in matchings(list(range(12)))) == 10395


def test_covariance_examples():
    atlas = VariableAtlas.build([("X", 1, E), ("Y", 2, E)])
    assert covariance_matrix(atlas) == [[1, 0], [0, 1]]
    atlas = VariableAtlas.build([("X1", 1, make_kernel([1, 0], 2)), ("X2", 1, E)])
    assert covariance_matrix(atlas) == [[Q(1, 2), Q(1, 2)], [Q(1, 2), 1]]
    atlas = VariableAtlas.build([("Z", 1, make_kernel([0, 0], 2))])
    assert covariance_matrix(atlas) == [[0]]


def test_expectation_examples(xy):
    atlas, X, Y = xy
    assert expectation_exact(X**2) == 1
    assert expectation_exact(X**4) == 3
    assert expectation_exact(X**2 * Y**2) == 1
    assert expectation_exact(X**3 * Y) == 0
    assert expectation_exact(atlas.const(Q(5, 3))) == Q(5, 3)


def test_degree_cap(xy):
    atlas, X, Y = xy
    assert expectation_exact(X**12) == 10395
    with pytest.raises(DegreeCapError, match="cap 12"):
        expectation_exact(X**14)
    assert expectation_exact(X**14, degree_cap=14) == 135135


def test_sobolev_norm_examples(xy):
    atlas, X, Y = xy
    assert sobolev_norm_exact_p2(X, 1).squared == 1
    assert sobolev_norm_exact_p2(X**2, 1).squared == 4
    assert sobolev_norm_exact_p2(X**2, 1).value == 2.0
    for r in (1, 2, 3):
        assert sobolev_norm_exact_p2(atlas.const(7), r).squared == 0


def test_gradient_norm_squared_uses_h_inner_product(xy):
    # X and Y share the kernel e but sit in different components, so they are H-orthogonal
    atlas, X, Y = xy
    assert gradient_norm_squared(X + Y, 1) == 2
    same = VariableAtlas.build([("X", 1, E), ("Y", 1, E)])
    assert gradient_norm_squared(same.var("X") + same.var("Y"), 1) == 4


@pytest.mark.parametrize("seed", range(20))
def test_expectation_matches_brute_force(seed):
    rng = rng_for(6000 + seed)
    atlas = random_atlas(rng)
    F = random_polynomial(rng, atlas, max_degree=6, n_terms=6)
    assert expectation_exact(F) == brute_expectation(F)


@pytest.mark.parametrize("seed", range(10))
def test_expectation_linear(seed):
    rng = rng_for(6100 + seed)
    atlas = random_atlas(rng)
    F, G = random_polynomial(rng, atlas, 4), random_polynomial(rng, atlas, 4)
    a, b = Q(rng.randint(-5, 5), 3), Q(rng.randint(-5, 5), 2)
    assert expectation_exact(F.scale(a) + G.scale(b)) == a * expectation_exact(F) + b * expectation_exact(G)


@pytest.mark.parametrize("seed", range(10))
def test_odd_powers_vanish(seed):
    rng = rng_for(6200 + seed)
    atlas = random_atlas(rng)
    for i in range(len(atlas)):
        e = [0] * len(atlas)
        e[i] = rng.choice((1, 3, 5, 7))
        assert expectation_exact(PolynomialFunctional(atlas, {tuple(e): 1})) == 0


@pytest.mark.parametrize("seed", range(10))
def test_independence_factorizes(seed):
    rng = rng_for(6300 + seed)
    atlas = random_atlas(rng, n_vars=4)
    ones = [n for n, v in zip(atlas.names, atlas.variables) if v.component == 1]
    twos = [n for n, v in zip(atlas.names, atlas.variables) if v.component == 2]

    def poly_in(names):
        p = atlas.const(rng.randint(-3, 3))
        for _ in range(3):
            mono = atlas.const(rng.randint(-5, 5))
            for _ in range(rng.randint(1, 3)):
                mono = mono * atlas.var(rng.choice(names))
            p = p + mono
        return p

    F, G = poly_in(ones), poly_in(twos)
    assert expectation_exact(F * G) == expectation_exact(F) * expectation_exact(G)


@pytest.mark.parametrize("seed", range(10))
def test_order_zero_norm_is_l2_norm(seed):
    rng = rng_for(6400 + seed)
    atlas = random_atlas(rng)
    F = random_polynomial(rng, atlas)
    assert sobolev_norm_exact_p2(F, 0).squared == expectation_exact(F * F)


@pytest.mark.parametrize("seed", range(8))
def test_grid_refinement_invariance(seed):
    rng = rng_for(6500 + seed)
    atlas = random_atlas(rng)
    fine = VariableAtlas.build((v.name, v.component, v.kernel.refine()) for v in atlas.variables)
    F = random_polynomial(rng, atlas, max_degree=4)
    F_fine = PolynomialFunctional(fine, F.terms)
    assert covariance_matrix(fine) == covariance_matrix(atlas)
    assert expectation_exact(F_fine) == expectation_exact(F)
    for r in (0, 1, 2):
        assert sobolev_norm_exact_p2(F_fine, r) == sobolev_norm_exact_p2(F, r)
