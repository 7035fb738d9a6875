"""Observables extracted from simulated trees, and goodness-of-fit reports.

The central objects are counting-window samples: for a tree on n vertices
with base level ``m0 = floor(log2 n)``, the window (j, B) counts vertices
whose degree sits at (exact) or above (tail) ``m0 + j`` and whose depth,
normalized with the full-degree constants, falls in the interval B.
Degrees below every window accumulate in an explicit underflow bucket so
per-tree totals reconcile to n.

Depth samples destined for a continuous-CDF comparison get a uniform
half-step jitter first (``z`` built from ``h + U - 1/2``): integer depths
have pmf mass about ``0.4 / sd``, so the raw empirical CDF sits a saw-tooth
of that half-height away from ANY continuous law, swamping the signal a
Kolmogorov-Smirnov comparison is after. Counting windows never jitter: they
use the literal integer depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .limits import CanonicalFDD, limit_params
from .trees import RecursiveTree, degrees, depths


def epsilon_offset(n: int) -> float:
    """Fractional part of log2(n)."""
    if n < 1:
        raise ValueError("n must be positive")
    return math.log2(n) - math.floor(math.log2(n))


def base_level(n: int) -> int:
    return math.floor(math.log2(n))


def subsequence_schedule(epsilon: float, l_min: int, l_max: int) -> list[int]:
    """Sizes n_l = round(2**(l + epsilon)) whose log2-fractional parts
    approach epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if l_min < 1 or l_max < l_min:
        raise ValueError("need 1 <= l_min <= l_max")
    if l_max + epsilon >= 62:
        raise ValueError("schedule exceeds the platform integer range")
    return [round(2.0 ** (l + epsilon)) for l in range(l_min, l_max + 1)]


# --------------------------------------------------------------------------- #
# Tree observables and counting windows
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TreeObservables:
    """Degree/depth arrays of one tree (index = label, entry 0 unused)."""

    n: int
    degree: np.ndarray
    depth: np.ndarray


def observables(tree: RecursiveTree) -> TreeObservables:
    return TreeObservables(n=tree.n, degree=degrees(tree), depth=depths(tree))


def normalize_depth(h, n: int, a: float = 1.0):
    """(h - mu_a ln n) / sqrt(sigma2_a ln n); works on scalars and arrays."""
    if n < 2:
        raise ValueError("normalization needs n >= 2")
    params = limit_params(a)
    ln_n = math.log(n)
    return (np.asarray(h, dtype=np.float64) - params.mu * ln_n) / math.sqrt(
        params.sigma2 * ln_n
    )


def jittered_normalize_depth(h, n: int, a: float, rng: np.random.Generator):
    """Normalized depth with uniform half-step jitter (for KS against a
    continuous reference)."""
    h = np.asarray(h, dtype=np.float64)
    return normalize_depth(h + rng.random(h.shape) - 0.5, n, a)


@dataclass(frozen=True)
class NormalizedDepthSample:
    raw_depth: int
    a: float
    z: float


def normalized_sample(h: int, n: int, a: float = 1.0) -> NormalizedDepthSample:
    return NormalizedDepthSample(raw_depth=h, a=a, z=float(normalize_depth(h, n, a)))


@dataclass(frozen=True)
class CountingMeasureSample:
    """Window counts of one tree: counts aligned with fdd.entries, plus the
    underflow bucket (vertices below every window's degree threshold).
    """

    n: int
    epsilon_n: float
    fdd: CanonicalFDD
    counts: tuple[int, ...]
    underflow: int

    @property
    def exact_counts(self) -> tuple[int, ...]:
        return tuple(c for c, e in zip(self.counts, self.fdd.entries) if not e.tail)

    @property
    def tail_counts(self) -> tuple[int, ...]:
        return tuple(c for c, e in zip(self.counts, self.fdd.entries) if e.tail)


def count_measures(obs: TreeObservables, fdd: CanonicalFDD) -> CountingMeasureSample:
    """Count vertices in each degree/depth window.

    Exact window (j, B): degree == m0 + j and normalized depth in B; tail
    window: degree >= m0 + j. Normalization always uses the full-degree
    constants (a = 1), and the integer depth is used as-is.
    """
    n = obs.n
    m0 = base_level(n)
    deg = obs.degree[1:]
    if n >= 2:
        z = normalize_depth(obs.depth[1:], n, a=1.0)
    else:
        z = np.zeros(1)
    counts = []
    for entry in fdd.entries:
        thresh = m0 + entry.level
        in_deg = deg >= thresh if entry.tail else deg == thresh
        iv = entry.interval
        in_depth = (z > iv.lo) & (z <= iv.hi)
        counts.append(int(np.count_nonzero(in_deg & in_depth)))
    floor_level = min(e.level for e in fdd.entries)
    underflow = int(np.count_nonzero(deg < m0 + floor_level))
    return CountingMeasureSample(
        n=n,
        epsilon_n=epsilon_offset(n),
        fdd=fdd,
        counts=tuple(counts),
        underflow=underflow,
    )


def falling_factorial(x, a: int):
    """(x)_a = x (x-1) ... (x-a+1), with (x)_0 = 1; vectorized over x."""
    if a < 0:
        raise ValueError("a must be non-negative")
    out = np.ones_like(np.asarray(x, dtype=np.float64))
    xv = np.asarray(x, dtype=np.float64)
    for t in range(a):
        out = out * (xv - t)
    return out


def factorial_moment_estimate(
    samples: Sequence[CountingMeasureSample], exponents: Sequence[int]
) -> float:
    """Replicate average of the product of falling factorials of the window
    counts, an unbiased estimate of the joint factorial moment."""
    if not samples:
        raise ValueError("at least one sample required")
    if sum(exponents) < 1:
        raise ValueError("exponents must sum to at least 1")
    total = 0.0
    for s in samples:
        prod = 1.0
        for c, a in zip(s.counts, exponents):
            prod *= float(falling_factorial(c, a))
        total += prod
    return total / len(samples)


def factorial_moment_from_counts(counts: np.ndarray, exponents: Sequence[int]) -> float:
    """Same estimator from a (replicates x windows) count matrix."""
    prod = np.ones(counts.shape[0])
    for col, a in enumerate(exponents):
        prod *= falling_factorial(counts[:, col], a)
    return float(prod.mean())


# --------------------------------------------------------------------------- #
# Goodness-of-fit statistics
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class GoFReport:
    kind: str  # "ks" | "tv" | "chi-square"
    value: float
    sample_size: int
    reference: str
    threshold: float | None = None

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("statistic must be non-negative")
        if self.kind in ("ks", "tv") and self.value > 1 + 1e-12:
            raise ValueError(f"{self.kind} statistic cannot exceed 1")

    @property
    def passed(self) -> bool | None:
        return None if self.threshold is None else bool(self.value < self.threshold)


def ks_statistic(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance between the empirical CDF and
    a reference CDF (vectorized callable)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise ValueError("need at least one sample")
    f = np.asarray(cdf(x), dtype=np.float64)
    grid = np.arange(1, x.size + 1) / x.size
    return float(np.maximum(grid - f, f - (grid - 1.0 / x.size)).max())


def tv_distance(p: dict, q: dict) -> float:
    """Total-variation distance 0.5 * sum |p - q| over the union support."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(float(p.get(k, 0.0)) - float(q.get(k, 0.0))) for k in keys)


def chi_square_stat(observed: dict, expected: dict, total: int) -> float:
    """Pearson chi-square of observed counts against expected probabilities
    (cells with expected probability 0 must have 0 observations)."""
    stat = 0.0
    for key in set(observed) | set(expected):
        exp = float(expected.get(key, 0.0)) * total
        obs = float(observed.get(key, 0))
        if exp == 0.0:
            if obs:
                raise ValueError(f"observed mass on impossible cell {key}")
            continue
        stat += (obs - exp) ** 2 / exp
    return stat


def empirical_pmf(values: np.ndarray) -> dict[int, float]:
    vals, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    total = counts.sum()
    return {int(v): int(c) / total for v, c in zip(vals, counts)}
