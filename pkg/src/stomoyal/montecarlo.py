"""Monte Carlo estimation of moments and Sobolev norms on the grid Wiener space.

Brownian increments on the ``m``-cell grid are drawn per component and per
chunk of samples from Philox streams keyed by ``(seed, component, chunk)``;
each atlas variable is then the discrete stochastic integral
``X_i = sum_k h_i[k] * dW^(alpha_i)_k``.  Per-chunk statistics are merged
in chunk order, so every estimate is a deterministic function of
``(seed, n, chunk)`` no matter how many workers computed the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .functionals import MissingVariableError, PolynomialFunctional, VariableAtlas
from .moments import (
    DEFAULT_DEGREE_CAP,
    expectation_exact,
    gradient_norm_squared,
    sobolev_norm_exact_p2,
)

DEFAULT_CHUNK = 8192
Z_THRESHOLD = 5.0


def _stream(seed: int, component: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, component, chunk_index])
    return np.random.Generator(np.random.Philox(ss))


def _map_chunks(fn: Callable[[int], object], count: int, workers: int) -> list:
    if workers <= 1 or count <= 1:
        return [fn(c) for c in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


@dataclass
class SampleBatch:
    """Realizations of every atlas variable; ``chunks[c]`` has shape (len_c, n_vars)."""

    atlas: VariableAtlas
    seed: int
    n: int
    chunk: int
    chunks: list[np.ndarray] = field(repr=False)

    @property
    def m(self) -> int | None:
        return self.atlas.m

    @property
    def values(self) -> np.ndarray:
        return np.concatenate(self.chunks, axis=0)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.atlas.index(name)]

    def columns_for(self, F: PolynomialFunctional, c: int) -> list[np.ndarray | None]:
        if F.atlas is not self.atlas and F.atlas != self.atlas:
            missing = [n for n in F.atlas.names if n not in self.atlas.names]
            if missing:
                raise MissingVariableError(missing[0])
            raise ValueError("functional and batch use different atlases")
        block = self.chunks[c]
        return [block[:, i] for i in range(block.shape[1])]


def realize_samples(atlas: VariableAtlas, n: int, seed: int, chunk: int = DEFAULT_CHUNK,
                    workers: int = 1) -> SampleBatch:
    if n < 1:
        raise ValueError(f"sample count must be positive, got {n}")
    if chunk < 1:
        raise ValueError(f"chunk size must be positive, got {chunk}")
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")
    m = atlas.m or 1
    nv = len(atlas)
    kernels = {
        alpha: [(i, np.array([float(v) for v in atlas.kernel(i).values]))
                for i in range(nv) if atlas.component(i) == alpha]
        for alpha in (1, 2)
    }
    scale = 1.0 / math.sqrt(m)
    n_chunks = -(-n // chunk)

    def make(c: int) -> np.ndarray:
        size = min(chunk, n - c * chunk)
        block = np.zeros((size, nv))
        for alpha in (1, 2):
            if not kernels[alpha]:
                continue
            dW = _stream(seed, alpha, c).standard_normal((size, m)) * scale
            for i, h in kernels[alpha]:
                block[:, i] = dW @ h
        return block

    return SampleBatch(atlas, seed, n, chunk, _map_chunks(make, n_chunks, workers))


# -- streaming statistics ---------------------------------------------------

def _chunk_stats(v: np.ndarray) -> tuple[int, float, float]:
    k = v.shape[0]
    mean = float(np.mean(v))
    m2 = float(np.sum((v - mean) ** 2))
    return k, mean, m2


def _merge(stats: Sequence[tuple[int, float, float]]) -> tuple[int, float, float]:
    n, mean, m2 = 0, 0.0, 0.0
    for k, mk, m2k in stats:
        if n == 0:
            n, mean, m2 = k, mk, m2k
            continue
        tot = n + k
        delta = mk - mean
        mean = mean + delta * k / tot
        m2 = m2 + m2k + delta * delta * n * k / tot
        n = tot
    return n, mean, m2


def _stderr(n: int, m2: float) -> float:
    if n < 2:
        return 0.0
    return math.sqrt(m2 / (n - 1) / n)


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    n: int


@dataclass(frozen=True)
class NormEstimate:
    estimate: float
    stderr: float
    r: int
    p: float
    n: int
    integrand_mean: float
    integrand_stderr: float


def _sample_stats(G: PolynomialFunctional, batch: SampleBatch, workers: int,
                  transform: Callable[[np.ndarray], np.ndarray] | None = None):
    def one(c: int):
        v = G.evaluate_batch(batch.columns_for(G, c))
        if transform is not None:
            v = transform(v)
        return _chunk_stats(v)

    return _merge(_map_chunks(one, len(batch.chunks), workers))


def estimate_moment(F: PolynomialFunctional, batch: SampleBatch, workers: int = 1) -> MomentEstimate:
    n, mean, m2 = _sample_stats(F, batch, workers)
    return MomentEstimate(mean, _stderr(n, m2), n)


def estimate_sobolev_norm(F: PolynomialFunctional, r: int, p: float, batch: SampleBatch,
                          workers: int = 1) -> NormEstimate:
    """``E[||nabla^r F||^p]^{1/p}`` with a delta-method standard error."""
    if not isinstance(r, int) or r < 0:
        raise ValueError(f"derivative order must be a nonnegative integer, got {r!r}")
    if not p > 0:
        raise ValueError(f"exponent p must be positive, got {p!r}")
    integrand = gradient_norm_squared(F, r)
    half = p / 2.0

    def power(z: np.ndarray) -> np.ndarray:
        # ||nabla^r F||^2 is a nonnegative form; clip rounding noise below zero
        z = np.maximum(z, 0.0)
        return z if half == 1.0 else z ** half

    n, mean, m2 = _sample_stats(integrand, batch, workers, power)
    se = _stderr(n, m2)
    est = mean ** (1.0 / p) if mean > 0 else 0.0
    est_se = (1.0 / p) * mean ** (1.0 / p - 1.0) * se if mean > 0 else 0.0
    return NormEstimate(est, est_se, r, float(p), n, mean, se)


# -- cross-validation against the exact oracle ------------------------------

def z_score(estimate: float, stderr: float, exact: float) -> float:
    """``|estimate - exact| / stderr``; a zero stderr means a deterministic integrand."""
    diff = abs(estimate - exact)
    if stderr == 0:
        # averaging a constant array can still round in the last bits
        return 0.0 if diff <= 1e-12 * max(1.0, abs(exact)) else math.inf
    return diff / stderr


@dataclass
class ConsistencyReport:
    seed: int
    n: int
    m: int | None
    r: int
    expectation_exact: Fraction
    expectation_mc: MomentEstimate
    expectation_z: float
    norm_squared_exact: Fraction
    norm_mc: NormEstimate
    norm_z: float
    threshold: float = Z_THRESHOLD

    @property
    def flags(self) -> list[str]:
        out = []
        if not self.expectation_z <= self.threshold:
            out.append("expectation")
        if not self.norm_z <= self.threshold:
            out.append("sobolev_norm")
        return out

    @property
    def ok(self) -> bool:
        return not self.flags

    def to_json(self) -> dict:
        from .rationals import format_rational

        return {
            "seed": self.seed,
            "n": self.n,
            "m": self.m,
            "r": self.r,
            "expectation": {
                "exact": format_rational(self.expectation_exact),
                "estimate": self.expectation_mc.mean,
                "stderr": self.expectation_mc.stderr,
                "z": self.expectation_z,
            },
            "sobolev_norm_p2": {
                "exact_squared": format_rational(self.norm_squared_exact),
                "exact": math.sqrt(self.norm_squared_exact),
                "estimate": self.norm_mc.estimate,
                "stderr": self.norm_mc.stderr,
                "z": self.norm_z,
            },
            "threshold": self.threshold,
            "flags": self.flags,
        }


def consistency_report(F: PolynomialFunctional, r: int, batch: SampleBatch, workers: int = 1,
                       degree_cap: int = DEFAULT_DEGREE_CAP,
                       exact_expectation: Fraction | None = None,
                       exact_norm_squared: Fraction | None = None) -> ConsistencyReport:
    """Compare Monte Carlo estimates with the exact oracle.

    The two ``exact_*`` overrides replace the oracle values; they exist so a
    harness can feed a corrupted value and confirm that it is flagged.
    """
    if exact_expectation is None:
        exact_expectation = expectation_exact(F, degree_cap)
    if exact_norm_squared is None:
        exact_norm_squared = sobolev_norm_exact_p2(F, r, degree_cap).squared
    mom = estimate_moment(F, batch, workers)
    nrm = estimate_sobolev_norm(F, r, 2, batch, workers)
    return ConsistencyReport(
        seed=batch.seed, n=batch.n, m=batch.m, r=r,
        expectation_exact=Fraction(exact_expectation),
        expectation_mc=mom,
        expectation_z=z_score(mom.mean, mom.stderr, float(exact_expectation)),
        norm_squared_exact=Fraction(exact_norm_squared),
        norm_mc=nrm,
        norm_z=z_score(nrm.estimate, nrm.stderr, math.sqrt(exact_norm_squared)),
    )
