"""Piecewise-constant kernels on a uniform grid of [0, 1].

A kernel with resolution ``m`` stores the cell values ``h_0, ..., h_{m-1}``
of a function that is constant on ``[k/m, (k+1)/m)``.  Products of two such
functions integrate exactly, so every inner product below is an exact
rational.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .rationals import format_rational, to_fraction

FLAT = "flat"
PHASE_SPACE = "phase_space"


class KernelError(ValueError):
    pass


class GridMismatchError(KernelError):
    def __init__(self, m1: int, m2: int):
        super().__init__(f"grid resolutions differ: m={m1} vs m={m2}")
        self.resolutions = (m1, m2)


class LinearDependenceError(KernelError):
    def __init__(self, index: int):
        super().__init__(f"kernel at index {index} is linearly dependent on its predecessors")
        self.index = index


@dataclass(frozen=True)
class Kernel:
    values: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.values) < 1:
            raise KernelError("a kernel needs at least one cell (m >= 1)")

    @property
    def m(self) -> int:
        return len(self.values)

    def is_zero(self) -> bool:
        return not any(self.values)

    def scale(self, c) -> "Kernel":
        c = to_fraction(c)
        return Kernel(tuple(c * v for v in self.values))

    def __add__(self, other: "Kernel") -> "Kernel":
        _check_grid(self, other)
        return Kernel(tuple(a + b for a, b in zip(self.values, other.values)))

    def __sub__(self, other: "Kernel") -> "Kernel":
        _check_grid(self, other)
        return Kernel(tuple(a - b for a, b in zip(self.values, other.values)))

    def refine(self, factor: int = 2) -> "Kernel":
        """Split every cell into ``factor`` equal cells; the function is unchanged."""
        return Kernel(tuple(v for v in self.values for _ in range(factor)))

    def to_json(self) -> dict:
        return {"m": self.m, "values": [format_rational(v) for v in self.values]}

    @classmethod
    def from_json(cls, obj: dict) -> "Kernel":
        return make_kernel(obj["values"], obj["m"])


def make_kernel(values: Iterable, m: int) -> Kernel:
    vals = tuple(to_fraction(v) for v in values)
    if not isinstance(m, int) or m < 1:
        raise KernelError(f"grid resolution must be a positive integer, got {m!r}")
    if len(vals) != m:
        raise KernelError(f"kernel has {len(vals)} cell values, expected m={m}")
    return Kernel(vals)


def constant_kernel(m: int, value=1) -> Kernel:
    return make_kernel([value] * m, m)


def _check_grid(h: Kernel, g: Kernel) -> None:
    if h.m != g.m:
        raise GridMismatchError(h.m, g.m)


def inner(h: Kernel, g: Kernel) -> Fraction:
    """L2 inner product, ``(1/m) * sum_k h_k g_k``."""
    _check_grid(h, g)
    return sum((a * b for a, b in zip(h.values, g.values)), Fraction(0)) / h.m


def norm_squared(h: Kernel) -> Fraction:
    return inner(h, h)


def gram_matrix(kernels: Sequence[Kernel]) -> list[list[Fraction]]:
    n = len(kernels)
    G = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            G[i][j] = G[j][i] = inner(kernels[i], kernels[j])
    return G


def primitive(h: Kernel) -> Kernel:
    """Right-endpoint prefix sums: ``P_k = (1/m) * sum_{j<=k} h_j``."""
    out = []
    acc = Fraction(0)
    for v in h.values:
        acc += v
        out.append(acc / h.m)
    return Kernel(tuple(out))


def difference_quotient(P: Kernel) -> Kernel:
    """Inverse of :func:`primitive`: ``m * (P_k - P_{k-1})`` with ``P_{-1} = 0``."""
    prev = Fraction(0)
    out = []
    for v in P.values:
        out.append(P.m * (v - prev))
        prev = v
    return Kernel(tuple(out))


@dataclass(frozen=True)
class MetricProfile:
    """How two kernels are contracted in a single derivative slot.

    ``flat`` is the plain L2 pairing.  ``phase_space`` first replaces the
    kernel of every slot tagged with ``primitive_component`` by its
    primitive, then pairs flatly.
    """

    mode: str = FLAT
    primitive_component: int = 2

    def __post_init__(self):
        if self.mode not in (FLAT, PHASE_SPACE):
            raise KernelError(f"unknown metric mode {self.mode!r}; expected 'flat' or 'phase_space'")
        if self.primitive_component not in (1, 2):
            raise KernelError("primitive_component must be 1 or 2")

    @classmethod
    def parse(cls, name: str) -> "MetricProfile":
        aliases = {"flat": FLAT, "phase": PHASE_SPACE, "phase_space": PHASE_SPACE}
        if name not in aliases:
            raise KernelError(f"unknown metric {name!r}; expected flat or phase_space")
        return cls(aliases[name])

    @property
    def name(self) -> str:
        return self.mode


FLAT_METRIC = MetricProfile(FLAT)
PHASE_METRIC = MetricProfile(PHASE_SPACE)


def contract(h: Kernel, g: Kernel, metric: MetricProfile = FLAT_METRIC,
             slot_components: tuple[int, int] = (1, 2)) -> Fraction:
    _check_grid(h, g)
    if metric.mode == PHASE_SPACE:
        a, b = slot_components
        if a == metric.primitive_component:
            h = primitive(h)
        if b == metric.primitive_component:
            g = primitive(g)
    return inner(h, g)


def gram_schmidt(kernels: Sequence[Kernel]) -> list[Kernel]:
    """Orthonormalize in input order.

    Exact rational arithmetic cannot take square roots, so a projected
    vector is only accepted when its squared norm is the square of a
    rational; otherwise a ``ValueError`` is raised.
    """
    basis: list[Kernel] = []
    for idx, h in enumerate(kernels):
        v = h
        for u in basis:
            v = v - u.scale(inner(v, u))
        n2 = norm_squared(v)
        if n2 == 0:
            raise LinearDependenceError(idx)
        basis.append(v.scale(1 / _rational_sqrt(n2)))
    return basis


def _rational_sqrt(q: Fraction) -> Fraction:
    from math import isqrt

    p, d = q.numerator, q.denominator
    rp, rd = isqrt(p), isqrt(d)
    if rp * rp != p or rd * rd != d:
        raise KernelError(f"squared norm {format_rational(q)} has no rational square root; "
                          "choose kernels whose projections have rational norms")
    return Fraction(rp, rd)
