from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stomoyal.kernels import (
    FLAT_METRIC,
    PHASE_METRIC,
    GridMismatchError,
    Kernel,
    KernelError,
    LinearDependenceError,
    MetricProfile,
    contract,
    difference_quotient,
    gram_matrix,
    gram_schmidt,
    inner,
    make_kernel,
    primitive,
)

E2 = make_kernel([1, 1], 2)
ZERO2 = make_kernel([0, 0], 2)

rationals = st.fractions(min_value=-10, max_value=10, max_denominator=6)


def kernels(m):
    return st.lists(rationals, min_size=m, max_size=m).map(lambda v: make_kernel(v, m))


def test_make_kernel_examples():
    assert E2.values == (1, 1) and E2.m == 2
    assert ZERO2.is_zero()
    ind = make_kernel([1, 0], 2)
    assert ind.values == (Q(1), Q(0))


def test_make_kernel_length_mismatch_names_both_lengths():
    with pytest.raises(KernelError, match=r"3 cell values, expected m=2"):
        make_kernel([1, 2, 3], 2)


def test_make_kernel_parses_rational_strings():
    assert make_kernel(["1/2", "-3", "4/6"], 3).values == (Q(1, 2), Q(-3), Q(2, 3))


@pytest.mark.parametrize("h, g, expected", [
    ([1, 1], [1, 1], Q(1)),
    ([1, 0], [1, 1], Q(1, 2)),
    ([1, -1], [1, 1], Q(0)),
])
def test_inner_examples(h, g, expected):
    assert inner(make_kernel(h, 2), make_kernel(g, 2)) == expected


def test_inner_grid_mismatch():
    with pytest.raises(GridMismatchError, match="m=2 vs m=3"):
        inner(E2, make_kernel([1, 1, 1], 3))


def test_gram_matrix_examples():
    assert gram_matrix([E2]) == [[1]]
    assert gram_matrix([make_kernel([1, 0], 2), make_kernel([0, 1], 2)]) == [[Q(1, 2), 0], [0, Q(1, 2)]]
    assert gram_matrix([E2, make_kernel([1, 0], 2)]) == [[1, Q(1, 2)], [Q(1, 2), Q(1, 2)]]


def test_primitive_examples():
    assert primitive(E2).values == (Q(1, 2), Q(1))
    assert primitive(ZERO2) == ZERO2
    assert primitive(make_kernel([2, 0], 2)).values == (Q(1), Q(1))


def test_contract_examples():
    assert contract(E2, E2, FLAT_METRIC, (1, 2)) == 1
    assert contract(E2, E2, PHASE_METRIC, (1, 2)) == Q(3, 4)
    for metric in (FLAT_METRIC, PHASE_METRIC):
        for slots in ((1, 1), (1, 2), (2, 1), (2, 2)):
            assert contract(ZERO2, E2, metric, slots) == 0


def test_contract_phase_space_targets_component_two_slots():
    h, g = make_kernel([1, 0], 2), make_kernel([0, 1], 2)
    assert contract(h, g, PHASE_METRIC, (1, 1)) == inner(h, g)
    assert contract(h, g, PHASE_METRIC, (2, 1)) == inner(primitive(h), g)
    assert contract(h, g, PHASE_METRIC, (2, 2)) == inner(primitive(h), primitive(g))
    # the primitive component is a single switch
    alt = MetricProfile("phase_space", primitive_component=1)
    assert contract(h, g, alt, (1, 2)) == inner(primitive(h), g)


def test_metric_profile_rejects_unknown_mode():
    with pytest.raises(KernelError):
        MetricProfile("curved")
    assert MetricProfile.parse("phase") == PHASE_METRIC


def test_gram_schmidt_examples():
    assert gram_schmidt([E2]) == [E2]
    out = gram_schmidt([make_kernel([1, 1], 2), make_kernel([1, 0], 2)])
    assert [k.values for k in out] == [(1, 1), (1, -1)]
    with pytest.raises(LinearDependenceError) as info:
        gram_schmidt([E2, E2])
    assert info.value.index == 1


def test_gram_schmidt_requires_rational_norms():
    with pytest.raises(KernelError, match="rational square root"):
        gram_schmidt([make_kernel([1, 1, 0], 3)])


def test_kernel_json_round_trip():
    h = make_kernel(["1/3", "-2", "0"], 3)
    assert h.to_json() == {"m": 3, "values": ["1/3", "-2", "0"]}
    assert Kernel.from_json(h.to_json()) == h


@settings(max_examples=60, deadline=None)
@given(kernels(4), kernels(4), kernels(4), rationals)
def test_inner_bilinear_and_symmetric(h, h2, g, a):
    assert inner(h.scale(a) + h2, g) == a * inner(h, g) + inner(h2, g)
    assert inner(h, g) == inner(g, h)


@settings(max_examples=60, deadline=None)
@given(kernels(4), kernels(4))
def test_cauchy_schwarz_exact(h, g):
    assert inner(h, g) ** 2 <= inner(h, h) * inner(g, g)
    assert inner(h, h) >= 0
    assert (inner(h, h) == 0) == h.is_zero()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(kernels))
def test_difference_quotient_inverts_primitive(h):
    assert difference_quotient(primitive(h)) == h
    assert primitive(difference_quotient(h)) == h


@settings(max_examples=40, deadline=None)
@given(kernels(4), kernels(4))
def test_flat_contract_symmetric(h, g):
    for slots in ((1, 2), (2, 1), (1, 1)):
        assert contract(h, g, FLAT_METRIC, slots) == contract(g, h, FLAT_METRIC, slots) == inner(h, g)


def test_gram_schmidt_output_is_orthonormal():
    m = 4
    fam = [make_kernel(v, m) for v in ([1, 1, 1, 1], [1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1])]
    out = gram_schmidt(fam)
    assert [k.values for k in out[2:]] == [(1, -1, 1, -1), (1, -1, -1, 1)]
    G = gram_matrix(out)
    assert G == [[1 if i == j else 0 for j in range(4)] for i in range(4)]


def test_refinement_preserves_inner_products():
    h, g = make_kernel(["1/2", "3", "-1", "0"], 4), make_kernel(["2", "-1/3", "1", "5"], 4)
    assert inner(h.refine(), g.refine()) == inner(h, g)
    assert h.refine().m == 8
