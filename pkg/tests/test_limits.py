import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from rrtlab import limits
from rrtlab.limits import (
    CanonicalFDD,
    FddEntry,
    Interval,
    REAL_LINE,
    binom_cdf_half,
    factorial_moment_prediction,
    g_fn,
    g_tilde_fn,
    gaussian_cdf,
    intb_check,
    limit_params,
    m_eps_pmf,
    m_eps_pmf_total,
    m_eps_term,
    parse_fdd,
    poisson_means,
    ppp_intensity,
    window_mean,
)

# Frozen from an independent 60-digit summation of the lattice series.
GOLDEN_MULT_PMF = {
    (1, 0.0): 0.721352103336861969824622605353,
    (2, 0.0): 0.180350404178763342663802734754,
    (3, 0.0): 0.0601031739891599724769817996469,
    (1, 0.5): 0.721342937541387905361816354577,
}


class TestLimitParams:
    def test_degenerate_fraction(self):
        p = limit_params(0.0)
        assert p.mu == 1.0 and p.sigma2 == 1.0

    def test_full_fraction(self):
        p = limit_params(1.0)
        assert p.mu == pytest.approx(0.2786525, abs=5e-8)
        assert p.sigma2 == pytest.approx(0.6393262, abs=5e-8)

    @given(st.floats(0.0, 1.0))
    def test_linear_identity(self, a):
        p = limit_params(a)
        assert 2.0 * p.sigma2 - p.mu == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("a", [-0.1, 1.1, math.nan])
    def test_rejects_out_of_range(self, a):
        with pytest.raises(ValueError):
            limit_params(a)


class TestIntensity:
    def test_at_zero(self):
        assert ppp_intensity(0.0) == pytest.approx(math.log(2), abs=1e-12)

    def test_total_mass_right_of_zero(self):
        val, _ = integrate.quad(ppp_intensity, 0, math.inf)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_tail_integral_matches_closed_form(self):
        val, _ = integrate.quad(ppp_intensity, 3, math.inf)
        assert val == pytest.approx(0.125, abs=1e-10)


class TestIntervals:
    def test_mass_of_half_line(self):
        assert Interval(-math.inf, 0.0).gaussian_mass() == pytest.approx(0.5)

    def test_parse_forms(self):
        assert parse_fdd("0:(-inf,0]").entries[0].interval == Interval(-math.inf, 0.0)
        assert parse_fdd(">=2:(0,inf)").entries[0] == FddEntry(2, Interval(0.0, math.inf), True)
        two = parse_fdd("-1:(-1.5,2],>=3:(0,inf)")
        assert [e.level for e in two.entries] == [-1, 3]

    @pytest.mark.parametrize(
        "text", ["0:(1,1]", "0:[0,1]", "0:(0,inf]", "0:(-inf,0)", "junk", "0:0,1"]
    )
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            parse_fdd(text)

    def test_validation_rejects_overlap_at_same_level(self):
        with pytest.raises(ValueError):
            CanonicalFDD([FddEntry(0, REAL_LINE), FddEntry(0, Interval(-math.inf, 0.0))])

    def test_validation_rejects_exact_at_tail_level(self):
        with pytest.raises(ValueError):
            CanonicalFDD([FddEntry(1, REAL_LINE), FddEntry(1, REAL_LINE, True)])

    def test_validation_rejects_two_tail_levels(self):
        with pytest.raises(ValueError):
            CanonicalFDD(
                [FddEntry(1, REAL_LINE, True), FddEntry(2, Interval(0, math.inf), True)]
            )

    def test_disjoint_same_level_accepted(self):
        fdd = CanonicalFDD(
            [
                FddEntry(0, Interval(-math.inf, 0.0)),
                FddEntry(0, Interval(0.0, math.inf)),
                FddEntry(2, REAL_LINE, True),
            ]
        )
        assert len(fdd.exact_entries) == 2 and len(fdd.tail_entries) == 1

    @given(st.floats(-3, 3), st.floats(0.1, 3))
    def test_interval_mass_matches_cdf_difference(self, lo, width):
        iv = Interval(lo, lo + width)
        assert iv.gaussian_mass() == pytest.approx(
            gaussian_cdf(lo + width) - gaussian_cdf(lo), abs=1e-14
        )


class TestPoissonMeans:
    def test_tail_real_line_level_zero(self):
        pred = poisson_means(parse_fdd(">=0:(-inf,inf)"), 0.0)
        assert pred.means[0] == pytest.approx(1.0)

    def test_exact_real_line_level_zero(self):
        pred = poisson_means(parse_fdd("0:(-inf,inf)"), 0.0)
        assert pred.means[0] == pytest.approx(0.5)

    def test_exact_level_one_half_line(self):
        pred = poisson_means(parse_fdd("1:(-inf,0]"), 0.0)
        assert pred.means[0] == pytest.approx(0.125)

    @given(st.integers(-4, 4), st.floats(0.0, 1.0))
    def test_tail_is_twice_exact_at_same_level(self, j, eps):
        iv = Interval(-1.0, 2.0)
        tail = window_mean(FddEntry(j, iv, True), eps)
        exact = window_mean(FddEntry(j, iv, False), eps)
        assert tail == pytest.approx(2.0 * exact, rel=1e-12)

    def test_tail_splits_into_exact_plus_next_tail(self):
        iv = Interval(0.0, 1.0)
        for j in (-2, 0, 3):
            whole = window_mean(FddEntry(j, iv, True), 0.3)
            parts = window_mean(FddEntry(j, iv, False), 0.3) + window_mean(
                FddEntry(j + 1, iv, True), 0.3
            )
            assert whole == pytest.approx(parts, rel=1e-12)

    def test_epsilon_out_of_range(self):
        with pytest.raises(ValueError):
            poisson_means(parse_fdd("0:(-inf,0]"), 1.5)


class TestFactorialMomentPrediction:
    def test_single_tail_real_line(self):
        assert factorial_moment_prediction(parse_fdd(">=0:(-inf,inf)"), [1], 0.0) == pytest.approx(1.0)

    def test_marked_exact_square(self):
        fdd = parse_fdd("0:(-inf,0]")
        assert factorial_moment_prediction(fdd, [2], 0.0) == pytest.approx(0.0625)

    def test_reduces_to_unmarked_products(self):
        fdd = parse_fdd("0:(-inf,inf),1:(-inf,inf),>=2:(-inf,inf)")
        got = factorial_moment_prediction(fdd, [1, 2, 1], 0.25)
        eps = 0.25
        want = (2.0 ** (-1 + eps)) * (2.0 ** (-2 + eps)) ** 2 * (2.0 ** (-2 + eps))
        assert got == pytest.approx(want, rel=1e-12)

    def test_requires_aligned_exponents(self):
        with pytest.raises(ValueError):
            factorial_moment_prediction(parse_fdd("0:(-inf,0]"), [1, 1], 0.0)


class TestBinomialKernels:
    def test_exact_cdf_small(self):
        assert binom_cdf_half(1, 2) == pytest.approx(0.75)
        assert binom_cdf_half(-1, 5) == 0.0
        assert binom_cdf_half(5, 5) == 1.0

    @pytest.mark.parametrize("t", [999, 1000, 1001, 2000])
    def test_exact_and_beta_routes_agree(self, t):
        for k in (t // 2 - 30, t // 2, t // 2 + 30):
            assert binom_cdf_half(k, t) == pytest.approx(
                float(stats.binom.cdf(k, t, 0.5)), abs=1e-12
            )

    def test_g_fn_empty_binomial(self):
        assert g_fn(0, 0.0, 8) == 1.0  # threshold ln 8 > 0
        assert g_fn(0, -10.0, 8) == 0.0  # threshold below zero

    def test_g_fn_strict_inequality_at_integer_threshold(self):
        # kernel check: P(Bin(2,1/2) < 2) = 3/4
        assert limits._binom_below(2.0, 2) == pytest.approx(0.75)
        assert limits._binom_below(2.0000001, 2) == pytest.approx(1.0)

    def test_g_fn_gaussian_regime(self):
        t, n = 20_000, 55
        # threshold = t/2 + sqrt(t)/2 i.e. one binomial sd above the mean
        x = (t / 2 + math.sqrt(t) / 2 - math.log(n)) / math.sqrt(math.log(n))
        assert g_fn(t, x, n) == pytest.approx(gaussian_cdf(1.0), abs=0.01)

    def test_g_tilde_indicator(self):
        assert g_tilde_fn(1, 2, 5) == 0.0

    def test_g_tilde_reduction_at_zero_conditioning(self):
        assert g_tilde_fn(7, 0, 3) == limits._binom_below(3, 7)

    def test_g_tilde_hand_value(self):
        assert g_tilde_fn(5, 2, 2) == pytest.approx(0.5)

    @given(st.integers(0, 40), st.integers(0, 12), st.integers(0, 12))
    def test_g_tilde_monotone(self, t, d, l):
        assert g_tilde_fn(t, d, l) <= g_tilde_fn(t, d, l + 1) + 1e-15
        # The bare kernel is NOT monotone in d (fewer free trials raises the
        # below-l probability: t=1, l=1 gives 1/2 at d=0 but 1 at d=1); the
        # monotone object is the joint event weight 2**-d * kernel.
        assert (
            2.0 ** -(d + 1) * g_tilde_fn(t, d + 1, l)
            <= 2.0**-d * g_tilde_fn(t, d, l) + 1e-15
        )

    @given(st.integers(0, 60), st.floats(-3, 3))
    def test_g_fn_monotone_in_threshold(self, t, x):
        assert g_fn(t, x, 64) <= g_fn(t, x + 0.25, 64) + 1e-15


class TestIntbIdentity:
    def test_symmetry_point(self):
        for b in (0.25, 1.0, 4.0):
            res = intb_check(0.0, b)
            assert res.lhs == pytest.approx(0.5, abs=1e-9)

    @pytest.mark.parametrize("x,b", [(1.0, 1.0), (-2.0, 0.5)])
    def test_identity_examples(self, x, b):
        res = intb_check(x, b)
        assert res.residual < 1e-8
        assert res.rhs == pytest.approx(gaussian_cdf(x))

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            intb_check(0.0, 0.0)


class TestMultiplicityPmf:
    @pytest.mark.parametrize("key", sorted(GOLDEN_MULT_PMF))
    def test_golden_values(self, key):
        k, eps = key
        assert m_eps_pmf(k, eps).value == pytest.approx(GOLDEN_MULT_PMF[key], abs=1e-13)

    def test_positive_everywhere(self):
        assert all(m_eps_pmf(k, 0.33).value > 0 for k in range(1, 30))

    def test_normalization(self):
        assert m_eps_pmf_total(0.0) == pytest.approx(1.0, abs=1e-10)

    def test_truncation_error_reported_not_raised(self):
        val = m_eps_pmf(1, 0.0, trunc=5)
        assert val.truncation_error > 1e-6  # too small a window, loudly so

    @given(st.integers(1, 12), st.integers(-30, 30))
    def test_lattice_shift_is_exact(self, k, m):
        assert m_eps_term(k, 1.0, m) == m_eps_term(k, 0.0, m - 1)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            m_eps_pmf(0, 0.0)
        with pytest.raises(ValueError):
            m_eps_pmf(1, 2.0)
