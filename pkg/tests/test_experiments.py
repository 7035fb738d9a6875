import math
from fractions import Fraction

import numpy as np
import pytest

from rrtlab import experiments as ex
from rrtlab import coalescent, measures, oracle
from rrtlab.limits import FddEntry, Interval, REAL_LINE
from rrtlab.measures import base_level


WINDOWS = (
    FddEntry(0, REAL_LINE, True),
    FddEntry(1, REAL_LINE, True),
    FddEntry(0, REAL_LINE, False),
    FddEntry(0, Interval(-math.inf, 0.0), False),
)


class TestEngine:
    def test_replicate_rng_deterministic_and_distinct(self):
        a = ex.replicate_rng(7, 3).random(4)
        b = ex.replicate_rng(7, 3).random(4)
        c = ex.replicate_rng(7, 4).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_survey_worker_count_invariant(self):
        one = ex.run_degree_depth_survey(64, 600, seed=3, windows=WINDOWS, chunk_size=100)
        two = ex.run_degree_depth_survey(
            64, 600, seed=3, windows=WINDOWS, workers=2, chunk_size=100
        )
        assert np.array_equal(one.count_sums, two.count_sums)
        assert one.mult_hist == two.mult_hist
        assert one.argmax_depths == two.argmax_depths
        assert one.root_degree_sum == two.root_degree_sum

    def test_survey_chunking_invariant(self):
        a = ex.run_degree_depth_survey(64, 500, seed=4, windows=WINDOWS, chunk_size=7)
        b = ex.run_degree_depth_survey(64, 500, seed=4, windows=WINDOWS, chunk_size=500)
        assert np.array_equal(a.count_sums, b.count_sums)
        assert a.argmax_depths == b.argmax_depths

    def test_exponent_sets_validated(self):
        with pytest.raises(ValueError):
            ex.run_degree_depth_survey(64, 10, seed=0, windows=WINDOWS, exponent_sets=[(1,)])


class TestSurveyAgainstExactMarginals:
    def test_window_means_match_coalescent_formula(self):
        # E[count(degree >= m0+j)] = n 2^-(m0+j) P(S_n >= m0+j): the growth
        # route must reproduce the merge-log marginal exactly.
        n, reps = 128, 60_000
        summary = ex.run_degree_depth_survey(n, reps, seed=5, windows=WINDOWS)
        pmf = coalescent.selection_count_pmf(n)
        m0 = base_level(n)
        means, ses = summary.mean_counts(), summary.mean_count_se()

        def tail_exact(j):
            m = m0 + j
            return n * 2.0**-m * float(pmf[m:].sum())

        assert means[0] == pytest.approx(tail_exact(0), abs=5 * ses[0])
        assert means[1] == pytest.approx(tail_exact(1), abs=5 * ses[1])
        assert means[2] == pytest.approx(tail_exact(0) - tail_exact(1), abs=5 * ses[2])

    def test_root_degree_mean(self):
        n, reps = 128, 30_000
        summary = ex.run_degree_depth_survey(n, reps, seed=6, windows=WINDOWS)
        want = sum(1.0 / j for j in range(1, n))
        assert summary.mean_root_degree() == pytest.approx(want, abs=0.05)

    def test_window_report_rows(self):
        summary = ex.run_degree_depth_survey(64, 2000, seed=7, windows=WINDOWS)
        rows = ex.window_mean_report(summary, epsilon=0.0)
        assert [r.level for r in rows] == [0, 1, 0, 0]
        assert rows[0].predicted == pytest.approx(1.0)
        assert rows[3].predicted == pytest.approx(0.25)


class TestConditionalDepth:
    def test_marginal_matches_tracked_at_small_n(self, census):
        # same conditional law through two completely different simulators
        law = census(6).vertex_law(1)
        cond = {h: Fraction(0) for h in range(7)}
        norm = Fraction(0)
        for (d, h), mass in law.items():
            if d >= 1:
                cond[h] += mass
                norm += mass
        exact = {h: mass / norm for h, mass in cond.items() if mass}

        rep = ex.conditional_depth_experiment(6, 1, [0.0], [1], 200_000, seed=8)
        # threshold floor(0*log2 6) + 1 = 1
        assert rep.thresholds == (1,)
        # recover the integer depths through the a=0 normalization (jitter
        # shifts by less than half a lattice step, so rounding undoes it)
        h = np.round(rep.z * math.sqrt(math.log(6)) + math.log(6))
        for hv, mass in exact.items():
            assert np.mean(h == hv) == pytest.approx(float(mass), abs=0.02)
        assert rep.acceptance == pytest.approx(float(norm), abs=0.01)

    def test_tracked_route_agrees_with_marginal_route(self):
        n, reps = 256, 40_000
        m1 = ex.conditional_depth_experiment(n, 1, [0.5], [0], reps, seed=9)
        # the same conditioning through the group state machine
        g = [
            r
            for r in range(6000)
            if (res := coalescent.run_tracked(n, 1, ex.replicate_rng(10, r))).degree[0]
            >= m1.thresholds[0]
            and res is not None
        ]
        assert m1.method == "marginal-thinned"
        assert m1.status == "ok"
        # acceptance comparable to 2^-m within a factor accounting for P(S>=m)
        assert m1.acceptance_scaled == pytest.approx(1.0, abs=0.1)

    def test_k2_joint_depth_law_matches_census(self, census):
        exact: dict = {}
        for chain in oracle.enumerate_chains(5):
            r = coalescent.apply_chain(chain, tracked=(1, 2))
            key = (r.records[1].depth, r.records[2].depth)
            exact[key] = exact.get(key, 0) + 1
        total = sum(exact.values())
        rep = ex.conditional_depth_experiment(5, 2, [0.0, 0.0], [0, 0], 120_000, seed=11)
        ln5 = math.log(5)
        h = np.round(rep.z * math.sqrt(ln5) + ln5).astype(int)
        for (h1, h2), count in exact.items():
            got = np.mean((h[:, 0] == h1) & (h[:, 1] == h2))
            assert got == pytest.approx(count / total, abs=0.007), (h1, h2)

    def test_underpowered_status(self):
        rep = ex.conditional_depth_experiment(1 << 12, 1, [1.0], [2], 2_000, seed=12)
        assert rep.status == "underpowered"

    def test_min_retained_drives_trials(self):
        rep = ex.conditional_depth_experiment(
            4096, 1, [1.0], [0], None, seed=13, min_retained=300
        )
        assert rep.retained >= 300
        assert rep.acceptance_scaled == pytest.approx(1.0, abs=0.15)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            ex.conditional_depth_experiment(8, 2, [0.0], [0], 10, seed=0)
        with pytest.raises(ValueError):
            ex.conditional_depth_experiment(8, 1, [0.0], [0], None, seed=0)
        with pytest.raises(ValueError):
            ex.conditional_depth_experiment(8, 2, [0.0, 0.0], [0, 0], None, seed=0, min_retained=5)


class TestTruncationStudies:
    def test_h2_split_law_matches_exact(self):
        # h2 ~ Bin(|S cap [2..cutoff]|, 1/2) mixed over the exact segment law
        n, cutoff = 64, coalescent.default_cutoff(64)
        rows = ex.h2_negligibility_experiment([n], 150_000, seed=14, factor=0.5)
        lo_pmf = coalescent.selection_count_pmf(n, lo=2, hi=cutoff)
        thresh = 0.5 * math.sqrt(math.log(n))
        from scipy import stats as sstats

        want = sum(
            p * (1.0 - sstats.binom.cdf(math.ceil(thresh) - 1, s, 0.5))
            for s, p in enumerate(lo_pmf)
        )
        assert rows[0].probability == pytest.approx(want, abs=0.005)
        assert not rows[0].degenerate

    def test_h2_conditioned_variant_runs(self):
        rows = ex.h2_negligibility_experiment([256], 50_000, seed=15, factor=0.5, m=4)
        assert 0.0 <= rows[0].probability <= 2.0**-4

    def test_tau_matches_census_law(self, census):
        law = census(5).tau_law()
        reps = 60_000
        rep = ex.tau_experiment(5, 2, reps, seed=16)
        want = float(sum(mass for t, mass in law.items() if t > math.log(5) ** 2))
        assert rep.probability == pytest.approx(want, abs=0.01)

    def test_truncated_independence_report_small(self):
        # the truncated sizes center on 2 ln(n / ln^2 n), a full 4 ln ln n
        # below 2 ln n, so delta must be generous for the bulk event to have
        # mass at small n
        rep = ex.truncated_independence_report(256, 20_000, seed=17, delta=1.9)
        assert rep.tv.value < 0.1
        assert 0.5 < rep.bulk_fraction <= 1.0

    def test_truncated_independence_at_scale(self):
        rep = ex.truncated_independence_report(1 << 10, 60_000, seed=18, delta=1.5)
        assert rep.tv.value < 0.05
        assert rep.tv.sample_size > 10_000


class TestMultiplicityReport:
    def test_report_fields(self):
        summary = ex.run_degree_depth_survey(
            256, 20_000, seed=18, windows=(FddEntry(0, REAL_LINE, True),)
        )
        rep = ex.max_multiplicity_report(summary, epsilon=0.0, seed=18)
        assert rep.tv.kind == "tv" and rep.depth_ks.kind == "ks"
        assert abs(sum(rep.pmf_empirical.values()) - 1.0) < 1e-9
        assert rep.depth_ks.sample_size == len(summary.argmax_depths)
        # at n=256 the finite-size TV is visible but bounded
        assert rep.tv.value < 0.2


class TestMultiplicitySchedule:
    def test_schedule_wrapper(self):
        reports = ex.max_multiplicity_experiment([64, 128], 2000, seed=19, epsilon=0.0)
        assert [r.n for r in reports] == [64, 128]
        assert all(0.0 <= r.tv.value <= 1.0 for r in reports)


class TestConditionedH2Exact:
    def test_conditioned_h2_matches_segment_composition(self):
        # P(h2 >= t, deg >= m) composed exactly from the two segment laws:
        # the win prefix of length m consumes the earliest selections (the
        # above-cutoff segment first), leaving Bin(free, 1/2) late losses.
        from scipy import stats as sstats

        n, m, factor = 64, 2, 0.5
        cutoff = coalescent.default_cutoff(n)
        t = math.ceil(factor * math.sqrt(math.log(n)))
        lo_pmf = coalescent.selection_count_pmf(n, lo=2, hi=cutoff)
        hi_pmf = coalescent.selection_count_pmf(n, lo=cutoff + 1)
        want = 0.0
        for s_lo, p_lo in enumerate(lo_pmf):
            for s_hi, p_hi in enumerate(hi_pmf):
                if s_lo + s_hi < m:
                    continue
                free = max(s_lo - max(m - s_hi, 0), 0)
                want += p_lo * p_hi * 2.0**-m * (1.0 - sstats.binom.cdf(t - 1, free, 0.5))
        rows = ex.h2_negligibility_experiment([n], 400_000, seed=21, factor=factor, m=m)
        assert rows[0].probability == pytest.approx(want, abs=0.002)
