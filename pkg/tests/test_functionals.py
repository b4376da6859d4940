import itertools
from fractions import Fraction as Q

import pytest

from randgen import random_atlas, random_polynomial, rng_for
from stomoyal.functionals import (
    AtlasMismatchError,
    MissingVariableError,
    PolynomialFunctional,
    VariableAtlas,
    derivative_tensor,
    malliavin_derivative,
)
from stomoyal.kernels import KernelError, make_kernel

E = make_kernel([1, 1], 2)


@pytest.fixture
def atlas():
    return VariableAtlas.build([("X", 1, E), ("Y", 2, E)])


def test_algebra_examples(atlas):
    X, Y = atlas.var("X"), atlas.var("Y")
    assert X + X == X.scale(2)
    assert (X + Y) * (X - Y) == X**2 - Y**2
    assert (X * Y) ** 2 == X**2 * Y**2
    assert (X - X).is_zero() and (X - X).terms == {}


def test_atlas_mismatch_is_reported(atlas):
    other = VariableAtlas.build([("X", 1, E)])
    with pytest.raises(AtlasMismatchError, match=r"\[X:1, Y:2\] vs \[X:1\]"):
        atlas.var("X") + other.var("X")


def test_atlas_validation():
    with pytest.raises(ValueError, match="duplicate"):
        VariableAtlas.build([("X", 1, E), ("X", 2, E)])
    with pytest.raises(ValueError, match="component must be 1 or 2"):
        VariableAtlas.build([("X", 3, E)])
    with pytest.raises(KernelError):
        VariableAtlas.build([("X", 1, E), ("Y", 1, make_kernel([1], 1))])


def test_malliavin_derivative_examples():
    atlas = VariableAtlas.build([("X", 1, E), ("Y", 2, E)])
    X, Y = atlas.var("X"), atlas.var("Y")
    assert malliavin_derivative(X**2, 1) == [(E, X.scale(2))]
    assert malliavin_derivative(X**2, 2) == []
    same = VariableAtlas.build([("X", 1, E), ("Y", 1, E)])
    Xs, Ys = same.var("X"), same.var("Y")
    # both variables share kernel e, so the two partials are collected
    assert malliavin_derivative(Xs * Ys, 1) == [(E, Xs + Ys)]
    assert malliavin_derivative(same.const(3), 1) == []


def test_malliavin_derivative_product_rule_distinct_kernels():
    h, g = make_kernel([1, 0], 2), make_kernel([0, 1], 2)
    atlas = VariableAtlas.build([("X", 1, h), ("Y", 1, g)])
    X, Y = atlas.var("X"), atlas.var("Y")
    assert malliavin_derivative(X * Y, 1) == [(h, Y), (g, X)]


def test_derivative_tensor_examples(atlas):
    X, Y = atlas.var("X"), atlas.var("Y")
    assert derivative_tensor(X**2, 2).named() == {("X", "X"): atlas.const(2)}
    assert derivative_tensor(X * Y, 2).named() == {("X", "Y"): atlas.const(1), ("Y", "X"): atlas.const(1)}
    assert derivative_tensor(X, 2).is_zero()
    assert derivative_tensor(X**2 + Y, 0).entries == {(): X**2 + Y}
    with pytest.raises(ValueError):
        derivative_tensor(X, -1)


@pytest.mark.parametrize("expr, assignment, expected", [
    (lambda X, Y, a: X**2, {"X": 3}, 9),
    (lambda X, Y, a: X * Y + 1, {"X": 2, "Y": -1}, -1),
    (lambda X, Y, a: a.const(5), {}, 5),
])
def test_evaluate_examples(atlas, expr, assignment, expected):
    F = expr(atlas.var("X"), atlas.var("Y"), atlas)
    assert F.evaluate(assignment) == expected
    assert F.evaluate({k: float(v) for k, v in assignment.items()}) == float(expected)


def test_evaluate_missing_variable(atlas):
    with pytest.raises(MissingVariableError, match="'Y'"):
        (atlas.var("X") * atlas.var("Y")).evaluate({"X": 1})


def test_canonical_text_is_graded_lex(atlas):
    X, Y = atlas.var("X"), atlas.var("Y")
    F = Y + 1 + X * Y + X**2 + Y**2 + X.scale(Q(-1, 2))
    assert F.to_text() == "X^2 + X*Y + Y^2 - 1/2*X + Y + 1"
    assert (-X).to_text() == "-X"
    assert atlas.zero().to_text() == "0"


def test_json_round_trip(atlas):
    X, Y = atlas.var("X"), atlas.var("Y")
    F = X**3 - Y.scale(Q(2, 7)) + 4
    assert PolynomialFunctional.from_json(atlas, F.to_json()) == F


def _collect(expansion):
    """Expansion as {kernel: polynomial}, merging equal kernels."""
    out = {}
    for k, p in expansion:
        out[k] = out[k] + p if k in out else p
    return {k: p for k, p in out.items() if not p.is_zero()}


@pytest.mark.parametrize("seed", range(25))
def test_leibniz_rule_order_one(seed):
    rng = rng_for(seed)
    atlas = random_atlas(rng)
    F, G = random_polynomial(rng, atlas), random_polynomial(rng, atlas)
    for alpha in (1, 2):
        lhs = _collect(malliavin_derivative(F * G, alpha))
        rhs = _collect([(k, F * p) for k, p in malliavin_derivative(G, alpha)]
                       + [(k, G * p) for k, p in malliavin_derivative(F, alpha)])
        assert lhs == rhs


@pytest.mark.parametrize("seed", range(15))
def test_derivative_tensor_symmetry_and_degree_bound(seed):
    rng = rng_for(100 + seed)
    atlas = random_atlas(rng)
    F = random_polynomial(rng, atlas)
    for r in range(0, 5):
        T = derivative_tensor(F, r)
        for idx, p in T.entries.items():
            for perm in itertools.permutations(idx):
                assert T[perm] == p
        if r > F.degree():
            assert T.is_zero()


@pytest.mark.parametrize("seed", range(15))
def test_evaluate_is_ring_homomorphism(seed):
    rng = rng_for(200 + seed)
    atlas = random_atlas(rng)
    F, G = random_polynomial(rng, atlas), random_polynomial(rng, atlas)
    a = {n: Q(rng.randint(-4, 4), rng.randint(1, 3)) for n in atlas.names}
    assert (F * G).evaluate(a) == F.evaluate(a) * G.evaluate(a)
    assert (F + G).evaluate(a) == F.evaluate(a) + G.evaluate(a)


@pytest.mark.parametrize("seed", range(10))
def test_multiplication_commutative_associative(seed):
    rng = rng_for(300 + seed)
    atlas = random_atlas(rng)
    F, G, H = (random_polynomial(rng, atlas) for _ in range(3))
    assert F * G == G * F
    assert (F * G) * H == F * (G * H)
    assert F * (G + H) == F * G + F * H
