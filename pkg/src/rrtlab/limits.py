"""Closed-form limit laws for degree and depth statistics of recursive trees.

Everything in this module is a pure function of its arguments: normalization
constants for depth central limit theorems, Poisson means for the point
process of near-maximum degrees, binomial tail kernels, the Gaussian
smoothing identity checker, and the limiting law of the number of
maximum-degree vertices.

Conventions: ``log2`` means base-2 logarithm, ``ln`` natural logarithm.
Intervals are half-open ``(lo, hi]`` with ``lo = -inf`` and ``hi = +inf``
allowed (one of the three forms ``(-inf,b]``, ``(a,b]``, ``(a,inf)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from scipy import integrate
from scipy import special

LOG2E = math.log2(math.e)
LN2 = math.log(2.0)


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot certify the requested accuracy."""


def gaussian_cdf(x: float) -> float:
    """Standard Gaussian CDF via the complementary error function.

    Accurate to full double precision, which matters because moment
    predictions multiply many of these values together.
    """
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# --------------------------------------------------------------------------- #
# Intervals and canonical window families
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Interval:
    """Half-open interval ``(lo, hi]``; ``lo=-inf`` / ``hi=+inf`` allowed."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi}]")
        if math.isinf(self.lo) and self.lo > 0:
            raise ValueError("lower endpoint may not be +inf")
        if math.isinf(self.hi) and self.hi < 0:
            raise ValueError("upper endpoint may not be -inf")

    def contains(self, x: float) -> bool:
        return self.lo < x <= self.hi

    def gaussian_mass(self) -> float:
        """Standard Gaussian measure of the interval."""
        hi = 1.0 if math.isinf(self.hi) else gaussian_cdf(self.hi)
        lo = 0.0 if math.isinf(self.lo) else gaussian_cdf(self.lo)
        return hi - lo

    def disjoint_from(self, other: "Interval") -> bool:
        return self.hi <= other.lo or other.hi <= self.lo

    def __str__(self) -> str:
        lo = "-inf" if math.isinf(self.lo) else f"{self.lo:g}"
        hi = "inf" if math.isinf(self.hi) else f"{self.hi:g}"
        close = ")" if math.isinf(self.hi) else "]"
        return f"({lo},{hi}{close}"


REAL_LINE = Interval(-math.inf, math.inf)


@dataclass(frozen=True)
class FddEntry:
    """One window: a degree level and a depth interval.

    ``tail=False`` counts vertices at exactly this level, ``tail=True``
    counts vertices at this level or above.
    """

    level: int
    interval: Interval
    tail: bool = False

    def __str__(self) -> str:
        prefix = ">=" if self.tail else ""
        return f"{prefix}{self.level}:{self.interval}"


@dataclass(frozen=True)
class CanonicalFDD:
    """An ordered family of degree/depth windows forming a valid test family.

    Validity rules:
      * exact levels are allowed in any multiset, tail entries (if present)
        must all sit at one common level strictly above every exact level;
      * entries sharing a level must have pairwise disjoint intervals.

    Tail-only and exact-only families are both accepted.
    """

    entries: tuple[FddEntry, ...]

    def __init__(self, entries: Sequence[FddEntry]):
        object.__setattr__(self, "entries", tuple(entries))
        self._validate()

    def _validate(self) -> None:
        if not self.entries:
            raise ValueError("window family must contain at least one entry")
        tail_levels = {e.level for e in self.entries if e.tail}
        if len(tail_levels) > 1:
            raise ValueError(f"tail entries must share one level, got {sorted(tail_levels)}")
        exact_levels = [e.level for e in self.entries if not e.tail]
        if tail_levels and exact_levels and max(exact_levels) >= next(iter(tail_levels)):
            raise ValueError("every exact level must lie strictly below the tail level")
        by_level: dict[tuple[int, bool], list[Interval]] = {}
        for e in self.entries:
            by_level.setdefault((e.level, e.tail), []).append(e.interval)
        for (level, _), ivs in by_level.items():
            for i in range(len(ivs)):
                for j in range(i + 1, len(ivs)):
                    if not ivs[i].disjoint_from(ivs[j]):
                        raise ValueError(
                            f"entries at level {level} overlap: {ivs[i]} vs {ivs[j]}"
                        )

    @property
    def exact_entries(self) -> tuple[FddEntry, ...]:
        return tuple(e for e in self.entries if not e.tail)

    @property
    def tail_entries(self) -> tuple[FddEntry, ...]:
        return tuple(e for e in self.entries if e.tail)

    def __str__(self) -> str:
        return ",".join(str(e) for e in self.entries)


def _split_top_level(text: str) -> list[str]:
    """Split on commas that are not inside an interval bracket."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return [p.strip() for p in parts if p.strip()]


def _parse_endpoint(token: str) -> float:
    token = token.strip()
    if token in ("-inf", "-Inf", "-INF"):
        return -math.inf
    if token in ("inf", "+inf", "Inf", "INF"):
        return math.inf
    return float(token)


def parse_interval(text: str) -> Interval:
    text = text.strip()
    if not (text.startswith("(") and text[-1] in ")]"):
        raise ValueError(f"malformed interval {text!r}; expected (a,b], (-inf,b] or (a,inf)")
    lo_s, _, hi_s = text[1:-1].partition(",")
    if not _:
        raise ValueError(f"malformed interval {text!r}; missing comma")
    lo, hi = _parse_endpoint(lo_s), _parse_endpoint(hi_s)
    if math.isinf(hi) and text[-1] == "]":
        raise ValueError(f"unbounded-above interval must close with ')': {text!r}")
    if not math.isinf(hi) and text[-1] == ")":
        raise ValueError(f"bounded-above interval must close with ']': {text!r}")
    return Interval(lo, hi)


def parse_fdd(text: str) -> CanonicalFDD:
    """Parse a window-family string.

    Grammar: comma-separated entries ``level:interval``; a ``>=`` prefix on
    the level marks a tail entry. Example: ``"-1:(-inf,0],>=2:(0,inf)"``.
    """
    entries = []
    for part in _split_top_level(text):
        tail = part.startswith(">=")
        if tail:
            part = part[2:]
        level_s, sep, interval_s = part.partition(":")
        if not sep:
            raise ValueError(f"malformed entry {part!r}; expected level:interval")
        entries.append(FddEntry(int(level_s), parse_interval(interval_s), tail))
    return CanonicalFDD(entries)


# --------------------------------------------------------------------------- #
# Depth normalization constants
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class LimitParams:
    """Depth-normalization constants for vertices conditioned on degree
    at least ``a * log2(n)``: center ``mu * ln(n)``, spread ``sigma2 * ln(n)``.
    """

    a: float
    mu: float
    sigma2: float


def limit_params(a: float) -> LimitParams:
    """Constants ``mu_a = 1 - a*log2(e)/2`` and ``sigma2_a = 1 - a*log2(e)/4``.

    They satisfy ``2*sigma2_a = 1 + mu_a`` identically.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"degree fraction must lie in [0, 1], got {a}")
    return LimitParams(a=a, mu=1.0 - a * LOG2E / 2.0, sigma2=1.0 - a * LOG2E / 4.0)


def ppp_intensity(x: float) -> float:
    """Intensity ``2**(-x) * ln(2)`` of the limiting point process of
    centered degrees; its integral over ``[j, inf)`` is ``2**(-j)``.
    """
    return 2.0 ** (-x) * LN2


# --------------------------------------------------------------------------- #
# Poisson means and factorial-moment predictions
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class LimitPrediction:
    """Limiting Poisson means for each window of a family, at lattice
    offset ``epsilon``. The window counts are independent in the limit.
    """

    fdd: CanonicalFDD
    epsilon: float
    means: tuple[float, ...] = field(default=())

    def mean_for(self, entry: FddEntry) -> float:
        return self.means[self.fdd.entries.index(entry)]


def window_mean(entry: FddEntry, epsilon: float) -> float:
    """Limiting Poisson mean of one window's count.

    Exact level j: ``2**(-j + eps - 1) * mass``; tail at level j:
    ``2**(-j + eps) * mass`` (twice the exact mean at the same level).
    """
    mass = entry.interval.gaussian_mass()
    exponent = -entry.level + epsilon - (0.0 if entry.tail else 1.0)
    return 2.0**exponent * mass


def poisson_means(fdd: CanonicalFDD, epsilon: float) -> LimitPrediction:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"lattice offset must lie in [0, 1], got {epsilon}")
    means = tuple(window_mean(e, epsilon) for e in fdd.entries)
    return LimitPrediction(fdd=fdd, epsilon=epsilon, means=means)


def factorial_moment_prediction(
    fdd: CanonicalFDD, exponents: Sequence[int], epsilon: float
) -> float:
    """Limiting joint factorial moment ``E[prod (count_k)_(a_k)]``:
    the product over windows of ``mean_k ** a_k``.
    """
    if len(exponents) != len(fdd.entries):
        raise ValueError("one exponent per window entry required")
    if any(a < 0 for a in exponents) or sum(exponents) < 1:
        raise ValueError("exponents must be non-negative and sum to at least 1")
    prediction = poisson_means(fdd, epsilon)
    out = 1.0
    for mean, a in zip(prediction.means, exponents):
        out *= mean**a
    return out


# --------------------------------------------------------------------------- #
# Binomial tail kernels
# --------------------------------------------------------------------------- #

_EXACT_CDF_MAX_TRIALS = 1000


def binom_cdf_half(k: int, t: int) -> float:
    """P(Bin(t, 1/2) <= k).

    Exact big-integer summation up to 1000 trials; regularized incomplete
    beta beyond that.
    """
    if t < 0:
        raise ValueError("trial count must be non-negative")
    if k < 0:
        return 0.0
    if k >= t:
        return 1.0
    if t <= _EXACT_CDF_MAX_TRIALS:
        total = sum(math.comb(t, i) for i in range(k + 1))
        return total / (1 << t)
    return float(special.betainc(t - k, k + 1, 0.5))


def _binom_below(threshold: float, trials: int) -> float:
    """P(Bin(trials, 1/2) < threshold), honoring the strict inequality."""
    return binom_cdf_half(math.ceil(threshold) - 1, trials)


def g_fn(t: int, x: float, n: int) -> float:
    """P(Bin(t, 1/2) < x*sqrt(ln n) + ln n)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if n < 2:
        raise ValueError("n must be at least 2")
    return _binom_below(x * math.sqrt(math.log(n)) + math.log(n), t)


def g_tilde_fn(t: int, d: int, l: int) -> float:
    """P(Bin(t - d, 1/2) < l) when t >= d, else 0."""
    if min(t, d, l) < 0:
        raise ValueError("arguments must be non-negative")
    if t < d:
        return 0.0
    return _binom_below(l, t - d)


# --------------------------------------------------------------------------- #
# Gaussian smoothing identity
# --------------------------------------------------------------------------- #


class IntbResult(NamedTuple):
    lhs: float
    rhs: float
    residual: float


def intb_check(x: float, b: float, tol: float = 1e-7) -> IntbResult:
    """Evaluate both sides of ``E[Phi((sqrt(1+b^2) x - N)/b)] = Phi(x)``.

    The left side goes through adaptive quadrature over the standard
    Gaussian; the identity is exact, so the residual measures quadrature
    error only. ``tol`` gates the integrator's own (conservative) error
    estimate; observed residuals sit near machine precision.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    a = math.sqrt(1.0 + b * b)

    def integrand(z: float) -> float:
        return gaussian_cdf((a * x - z) / b) * math.exp(-z * z / 2.0) / math.sqrt(2 * math.pi)

    # Finite bracket wide enough that the integrand is flat outside: below -L
    # it equals 1 up to Phi(-10/b), above +L it vanishes. The transition point
    # a*x is passed to the integrator explicitly (steep for small b).
    span = 10.0 + abs(a * x)
    body, abserr = integrate.quad(
        integrand, -span, span, epsabs=1e-13, limit=300, points=[a * x]
    )
    lhs = body + gaussian_cdf(-span)  # lower tail, integrand ~ 1 there
    abserr += 2.0 * gaussian_cdf(-span)
    if abserr > tol:
        raise QuadratureError(
            f"quadrature error estimate {abserr:.3e} exceeds {tol:.1e} at x={x}, b={b}"
        )
    rhs = gaussian_cdf(x)
    return IntbResult(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs))


# --------------------------------------------------------------------------- #
# Law of the number of maximum-degree vertices
# --------------------------------------------------------------------------- #


class TruncatedValue(NamedTuple):
    value: float
    truncation_error: float


def m_eps_term(k: int, epsilon: float, m: int) -> float:
    """One lattice term ``exp(-2**(-m+eps)) * 2**(-(m+1-eps)k) / k!``,
    evaluated in log space so extreme m underflow cleanly to zero. The
    lattice periodicity ``term(k, 1, m) == term(k, 0, m-1)`` is exact.
    """
    log_term = -(2.0 ** (-m + epsilon)) - (m + 1 - epsilon) * k * LN2 - math.lgamma(k + 1)
    return 0.0 if log_term < -745.0 else math.exp(log_term)


def m_eps_pmf(k: int, epsilon: float, trunc: int = 60) -> TruncatedValue:
    """P(multiplicity of the maximum degree = k) in the limit, at lattice
    offset ``epsilon``: ``sum_m exp(-2**(-m+eps)) * 2**(-(m+1-eps)k) / k!``
    truncated to ``|m| <= trunc``, with a certified bound on the discarded
    tails (reported, never raised).

    The lower tail dies doubly exponentially, the upper tail geometrically
    with ratio ``2**-k``.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"lattice offset must lie in [0, 1], got {epsilon}")
    if trunc < 1:
        raise ValueError("trunc must be positive")
    value = math.fsum(m_eps_term(k, epsilon, m) for m in range(-trunc, trunc + 1))
    # Upper tail m > trunc: geometric ratio 2**-k <= 1/2.
    upper = m_eps_term(k, epsilon, trunc + 1) / (1.0 - 2.0**-k)
    # Lower tail m < -trunc: successive ratio 2**k * exp(-2**(-m+eps)) < 1/2
    # once 2**(-m) dwarfs k, which holds for every trunc >= 7.
    lower = 2.0 * m_eps_term(k, epsilon, -trunc - 1)
    return TruncatedValue(value=value, truncation_error=upper + lower)


def m_eps_pmf_total(epsilon: float, trunc: int = 60, k_max: int = 200) -> float:
    """Sum of the truncated pmf over k = 1..k_max (normalization check)."""
    return math.fsum(m_eps_pmf(k, epsilon, trunc).value for k in range(1, k_max + 1))
