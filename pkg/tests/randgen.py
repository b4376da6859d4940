"""Seeded generators for random kernels, atlases and polynomials (test-only)."""

import itertools
import random
from fractions import Fraction

from stomoyal.functionals import PolynomialFunctional, VariableAtlas
from stomoyal.kernels import make_kernel


def random_rational(rng, bound=5, max_den=3):
    return Fraction(rng.randint(-bound, bound), rng.randint(1, max_den))


def random_kernel(rng, m=4):
    return make_kernel([random_rational(rng) for _ in range(m)], m)


def random_atlas(rng, n_vars=None, m=4):
    """Up to four variables, at least one per component."""
    n = n_vars or rng.randint(2, 4)
    comps = [1, 2] + [rng.choice((1, 2)) for _ in range(n - 2)]
    rng.shuffle(comps)
    names = ["X", "Y", "Z", "W"][:n]
    return VariableAtlas.build((name, c, random_kernel(rng, m)) for name, c in zip(names, comps))


def random_polynomial(rng, atlas, max_degree=3, n_terms=None, coeff_bound=5):
    n = len(atlas)
    monos = [e for e in itertools.product(range(max_degree + 1), repeat=n) if sum(e) <= max_degree]
    k = n_terms or rng.randint(1, 5)
    terms = {}
    for mono in rng.sample(monos, min(k, len(monos))):
        c = rng.randint(-coeff_bound, coeff_bound)
        if c:
            terms[mono] = Fraction(c)
    return PolynomialFunctional(atlas, terms)


def rng_for(seed):
    return random.Random(seed)
