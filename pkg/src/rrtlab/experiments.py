"""Replicated Monte Carlo studies with deterministic, worker-count-invariant
seeding.

Every replicate r of a study with master seed s draws from its own stream
derived from (s, r), so results are byte-identical no matter how the
replicates are chunked across processes. Replicated summaries are mergeable
and are combined in replicate order.

Two simulation backends appear below. Tree surveys grow the full tree per
replicate (all degrees are needed). Depth/selection studies use the marginal
coalescent samplers, which realize only the steps touching the tracked
vertices; the equivalence of the two routes is checked exactly at small n by
the enumeration oracle, which is what licenses the fast route at n = 2**20.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import measures, trees
from .coalescent import (
    default_cutoff,
    run_tracked,
    sample_selection_counts,
    sample_selection_split,
)
from .limits import (
    REAL_LINE,
    CanonicalFDD,
    FddEntry,
    gaussian_cdf,
    limit_params,
    m_eps_pmf,
    window_mean,
)
from .measures import GoFReport, base_level, jittered_normalize_depth, ks_statistic

# Replicate indices must stay below this; the analysis stream sits above.
_ANALYSIS_STREAM = 1 << 48


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-replicate stream keyed by (seed, index); SFC64 keeps
    the tree-survey inner loop cheap."""
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(seed, spawn_key=(index,))))


def analysis_rng(seed: int) -> np.random.Generator:
    """Stream reserved for post-processing randomness (KS jitter)."""
    return replicate_rng(seed, _ANALYSIS_STREAM)


# --------------------------------------------------------------------------- #
# Full-tree degree/depth survey
# --------------------------------------------------------------------------- #


@dataclass
class SurveySummary:
    """Mergeable accumulator of one tree-survey run.

    ``count_sums[e]`` accumulates window e's count over replicates;
    ``fact_sums[s]`` the falling-factorial product of exponent set s;
    ``mult_hist`` the histogram of the number of maximum-degree vertices;
    ``argmax_depths`` the (raw, integer) depths of every maximum-degree
    vertex seen, in replicate order.

    Surveys count arbitrary window lists; the canonical-family constraints
    only matter for joint-law predictions, not for counting.
    """

    n: int
    windows: tuple[FddEntry, ...]
    exponent_sets: tuple[tuple[int, ...], ...]
    replicates: int = 0
    count_sums: np.ndarray = None
    count_sq_sums: np.ndarray = None
    fact_sums: np.ndarray = None
    fact_sq_sums: np.ndarray = None
    mult_hist: dict = field(default_factory=dict)
    top_offset_hist: dict = field(default_factory=dict)
    argmax_depths: list = field(default_factory=list)
    root_degree_sum: float = 0.0

    def __post_init__(self):
        width = len(self.windows)
        if self.count_sums is None:
            self.count_sums = np.zeros(width)
            self.count_sq_sums = np.zeros(width)
            self.fact_sums = np.zeros(len(self.exponent_sets))
            self.fact_sq_sums = np.zeros(len(self.exponent_sets))

    def merge(self, other: "SurveySummary") -> None:
        self.replicates += other.replicates
        self.count_sums += other.count_sums
        self.count_sq_sums += other.count_sq_sums
        self.fact_sums += other.fact_sums
        self.fact_sq_sums += other.fact_sq_sums
        for k, v in other.mult_hist.items():
            self.mult_hist[k] = self.mult_hist.get(k, 0) + v
        for k, v in other.top_offset_hist.items():
            self.top_offset_hist[k] = self.top_offset_hist.get(k, 0) + v
        self.argmax_depths.extend(other.argmax_depths)
        self.root_degree_sum += other.root_degree_sum

    # Derived quantities ---------------------------------------------------- #

    def mean_counts(self) -> np.ndarray:
        return self.count_sums / self.replicates

    def mean_count_se(self) -> np.ndarray:
        m = self.mean_counts()
        var = self.count_sq_sums / self.replicates - m * m
        return np.sqrt(np.maximum(var, 0.0) / self.replicates)

    def factorial_moment(self, set_index: int) -> float:
        return float(self.fact_sums[set_index] / self.replicates)

    def factorial_moment_se(self, set_index: int) -> float:
        m = self.factorial_moment(set_index)
        var = self.fact_sq_sums[set_index] / self.replicates - m * m
        return math.sqrt(max(var, 0.0) / self.replicates)

    def multiplicity_pmf(self) -> dict[int, float]:
        return {k: v / self.replicates for k, v in sorted(self.mult_hist.items())}

    def mean_root_degree(self) -> float:
        return self.root_degree_sum / self.replicates


_CANDIDATE_CAP = 200_000


def _survey_one(
    rng: np.random.Generator,
    n: int,
    m0: int,
    specs: list[tuple[int, bool, float, float]],
    min_thresh: int,
    exponent_sets,
    mu_ln: float,
    sd_ln: float,
    out: SurveySummary,
    scratch: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> None:
    if scratch is None:
        parents = trees.sample_parents(n, rng)
    else:
        # buffer-reusing parent draw: one allocation-free pass per replicate
        arange1n, fbuf, ibuf = scratch
        rng.random(out=fbuf)
        np.multiply(fbuf, arange1n, out=fbuf)
        np.copyto(ibuf, fbuf, casting="unsafe")
        ibuf += 1
        parents = ibuf
    deg = np.bincount(parents, minlength=n + 1)
    top = int(deg[1:].max())
    thr = min(min_thresh, top)
    cand = np.flatnonzero(deg >= thr)
    cand = cand[cand >= 1]
    if cand.size > _CANDIDATE_CAP:
        raise ValueError(
            "window thresholds reach too deep into the degree distribution "
            f"({cand.size} candidate vertices); use count_measures on full trees instead"
        )
    cdeg = deg[cand]
    cdep = np.empty(cand.size, dtype=np.int64)
    for idx, label in enumerate(cand):
        v, d = int(label), 0
        while v != 1:
            v = int(parents[v - 2])
            d += 1
        cdep[idx] = d
    z = (cdep - mu_ln) / sd_ln

    counts = np.empty(len(specs), dtype=np.int64)
    for e, (thresh, tail, lo, hi) in enumerate(specs):
        in_deg = cdeg >= thresh if tail else cdeg == thresh
        counts[e] = int(np.count_nonzero(in_deg & (z > lo) & (z <= hi)))

    out.count_sums += counts
    out.count_sq_sums += counts * counts
    for s, exps in enumerate(exponent_sets):
        prod = 1.0
        for e, a in exps:
            c = counts[e]
            for t in range(a):
                prod *= c - t
        out.fact_sums[s] += prod
        out.fact_sq_sums[s] += prod * prod

    is_top = cdeg == top
    mult = int(np.count_nonzero(is_top))
    out.mult_hist[mult] = out.mult_hist.get(mult, 0) + 1
    off = top - m0
    out.top_offset_hist[off] = out.top_offset_hist.get(off, 0) + 1
    out.argmax_depths.extend(int(d) for d in cdep[is_top])
    out.root_degree_sum += float(deg[1])
    out.replicates += 1


def _survey_chunk(args) -> SurveySummary:
    n, start, stop, seed, windows, exponent_sets = args
    m0 = base_level(n)
    params = limit_params(1.0)
    mu_ln = params.mu * math.log(n)
    sd_ln = math.sqrt(params.sigma2 * math.log(n))
    specs = [
        (m0 + e.level, e.tail, e.interval.lo, e.interval.hi) for e in windows
    ]
    min_thresh = min(s[0] for s in specs)
    sets = tuple(tuple(enumerate(es)) for es in exponent_sets)
    out = SurveySummary(n=n, windows=windows, exponent_sets=tuple(exponent_sets))
    scratch = (
        np.arange(1, n, dtype=np.float64),
        np.empty(n - 1, dtype=np.float64),
        np.empty(n - 1, dtype=np.int64),
    )
    for r in range(start, stop):
        _survey_one(
            replicate_rng(seed, r), n, m0, specs, min_thresh, sets, mu_ln, sd_ln, out,
            scratch,
        )
    return out


def run_degree_depth_survey(
    n: int,
    replicates: int,
    seed: int,
    windows: CanonicalFDD | Sequence[FddEntry],
    exponent_sets: Sequence[Sequence[int]] = (),
    workers: int = 1,
    chunk_size: int = 4096,
) -> SurveySummary:
    """Grow ``replicates`` independent trees of size n and accumulate window
    counts, factorial-moment products, and maximum-degree statistics.

    ``windows`` is any list of degree/depth windows (or a canonical family);
    ``exponent_sets`` are tuples aligned with it, each contributing one
    falling-factorial product estimator.
    """
    if isinstance(windows, CanonicalFDD):
        windows = windows.entries
    windows = tuple(windows)
    if n < 2:
        raise ValueError("survey needs n >= 2")
    if replicates < 1:
        raise ValueError("replicates must be positive")
    if replicates >= _ANALYSIS_STREAM:
        raise ValueError("replicate count exceeds the stream key space")
    for es in exponent_sets:
        if len(es) != len(windows):
            raise ValueError("each exponent set must align with the window list")
    chunks = [
        (n, start, min(start + chunk_size, replicates), seed, windows, tuple(map(tuple, exponent_sets)))
        for start in range(0, replicates, chunk_size)
    ]
    total = SurveySummary(n=n, windows=windows, exponent_sets=tuple(map(tuple, exponent_sets)))
    if workers <= 1:
        for args in chunks:
            total.merge(_survey_chunk(args))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_survey_chunk, chunks):
                total.merge(part)
    return total


@dataclass(frozen=True)
class WindowMeanRow:
    entry: str
    tail: bool
    level: int
    empirical: float
    standard_error: float
    predicted: float

    @property
    def relative_error(self) -> float:
        return abs(self.empirical - self.predicted) / self.predicted


def window_mean_report(summary: SurveySummary, epsilon: float) -> list[WindowMeanRow]:
    """Empirical window-count means against their limiting Poisson means."""
    means = summary.mean_counts()
    ses = summary.mean_count_se()
    rows = []
    for e, entry in enumerate(summary.windows):
        rows.append(
            WindowMeanRow(
                entry=str(entry),
                tail=entry.tail,
                level=entry.level,
                empirical=float(means[e]),
                standard_error=float(ses[e]),
                predicted=window_mean(entry, epsilon),
            )
        )
    return rows


@dataclass(frozen=True)
class MultiplicityReport:
    n: int
    epsilon: float
    replicates: int
    tv: GoFReport
    depth_ks: GoFReport
    pmf_empirical: dict
    pmf_limit: dict


def max_multiplicity_report(
    summary: SurveySummary,
    epsilon: float,
    seed: int,
    tv_threshold: float = 0.05,
    ks_threshold: float = 0.05,
    k_max: int = 40,
) -> MultiplicityReport:
    """Compare the observed law of the number of maximum-degree vertices to
    its limit, and the (jittered) normalized depths of those vertices to the
    standard Gaussian."""
    limit_pmf = {k: m_eps_pmf(k, epsilon).value for k in range(1, k_max + 1)}
    emp = summary.multiplicity_pmf()
    tv = GoFReport(
        kind="tv",
        value=measures.tv_distance(emp, limit_pmf),
        sample_size=summary.replicates,
        reference=f"max-multiplicity limit law (eps={epsilon:g})",
        threshold=tv_threshold,
    )
    depths = np.asarray(summary.argmax_depths, dtype=np.float64)
    z = jittered_normalize_depth(depths, summary.n, 1.0, analysis_rng(seed))
    ks = GoFReport(
        kind="ks",
        value=ks_statistic(z, _phi_vec),
        sample_size=int(depths.size),
        reference="standard Gaussian",
        threshold=ks_threshold,
    )
    return MultiplicityReport(
        n=summary.n,
        epsilon=epsilon,
        replicates=summary.replicates,
        tv=tv,
        depth_ks=ks,
        pmf_empirical=emp,
        pmf_limit=limit_pmf,
    )


def _phi_vec(x: np.ndarray) -> np.ndarray:
    return np.vectorize(gaussian_cdf)(x)


def max_multiplicity_experiment(
    n_schedule: Sequence[int],
    replicates: int,
    seed: int,
    epsilon: float,
    workers: int = 1,
) -> list[MultiplicityReport]:
    """Maximum-degree multiplicity and argmax depths along a size schedule,
    each size compared to the limiting law at lattice offset ``epsilon``."""
    reports = []
    for idx, n in enumerate(n_schedule):
        summary = run_degree_depth_survey(
            n,
            replicates,
            seed + idx,
            windows=(FddEntry(0, REAL_LINE, True),),
            workers=workers,
        )
        reports.append(max_multiplicity_report(summary, epsilon, seed + idx))
    return reports


# --------------------------------------------------------------------------- #
# Conditional depth experiments
# --------------------------------------------------------------------------- #


@dataclass
class CondDepthReport:
    """Normalized-depth study of vertices {1..k}, optionally conditioned on
    per-vertex degree thresholds floor(a_i log2 n) + b_i.

    ``acceptance_scaled`` multiplies the acceptance frequency by
    2**(sum of clamped thresholds); it approaches 1 when the degree events
    become independent fair-coin prefixes.
    """

    n: int
    k: int
    a: tuple[float, ...]
    b: tuple[int, ...]
    thresholds: tuple[int, ...]
    method: str
    trials: int
    retained: int
    status: str
    ks: list[GoFReport]
    correlations: dict
    z: np.ndarray  # retained x k, jitter applied

    @property
    def acceptance(self) -> float:
        return self.retained / self.trials if self.trials else 0.0

    @property
    def acceptance_scaled(self) -> float:
        return self.acceptance * 2.0 ** sum(self.thresholds)


def degree_threshold(n: int, a: float, b: int) -> int:
    """floor(a * log2 n) + b, clamped at 0 (negative thresholds always hold)."""
    return max(0, math.floor(a * math.log2(n)) + b)


def conditional_depth_experiment(
    n: int,
    k: int,
    a: Sequence[float],
    b: Sequence[int],
    replicates: int | None,
    seed: int,
    min_retained: int | None = None,
    max_trials: int | None = None,
    underpowered_floor: int = 100,
    ks_threshold: float | None = None,
) -> CondDepthReport:
    """Depths of the tracked vertices given their degree conditions hold.

    k = 1 uses the marginal route: the degree condition is an independent
    fair-coin prefix of length m given the selection count reaches m, so
    trials are thinned by an exact Binomial(trials, 2**-m) draw and retained
    when the selection count allows the prefix; the retained depth is
    1-coin-for-1 the number of losses in the remaining flips. k >= 2 runs
    the tracked group simulation and retains by literal rejection.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if len(a) != k or len(b) != k:
        raise ValueError("a and b must have length k")
    if not all(0.0 <= ai <= 1.0 for ai in a):
        raise ValueError("degree fractions must lie in [0, 1]")
    if replicates is None and min_retained is None:
        raise ValueError("give replicates or min_retained")
    thresholds = tuple(degree_threshold(n, ai, bi) for ai, bi in zip(a, b))

    if k == 1:
        return _conditional_marginal(
            n, a, b, thresholds, replicates, min_retained, max_trials, seed,
            underpowered_floor, ks_threshold,
        )
    if min_retained is not None:
        raise ValueError("min_retained is only supported for k = 1")
    return _conditional_tracked(
        n, k, a, b, thresholds, replicates, seed, underpowered_floor, ks_threshold
    )


def _finish_report(
    n, k, a, b, thresholds, method, trials, retained_h, seed,
    underpowered_floor, ks_threshold,
) -> CondDepthReport:
    retained = retained_h.shape[0]
    status = "ok" if retained >= underpowered_floor else "underpowered"
    jrng = analysis_rng(seed)
    ks_reports: list[GoFReport] = []
    z = np.empty_like(retained_h, dtype=np.float64)
    for i in range(k):
        z[:, i] = jittered_normalize_depth(retained_h[:, i], n, a[i], jrng)
        if retained:
            ks_reports.append(
                GoFReport(
                    kind="ks",
                    value=ks_statistic(z[:, i], _phi_vec),
                    sample_size=retained,
                    reference="standard Gaussian",
                    threshold=ks_threshold,
                )
            )
    correlations = {}
    if retained >= 2:
        raw = np.column_stack(
            [measures.normalize_depth(retained_h[:, i], n, a[i]) for i in range(k)]
        )
        for i in range(k):
            for j in range(i + 1, k):
                correlations[(i + 1, j + 1)] = float(np.corrcoef(raw[:, i], raw[:, j])[0, 1])
    return CondDepthReport(
        n=n,
        k=k,
        a=tuple(a),
        b=tuple(b),
        thresholds=thresholds,
        method=method,
        trials=trials,
        retained=retained,
        status=status,
        ks=ks_reports,
        correlations=correlations,
        z=z,
    )


def _conditional_marginal(
    n, a, b, thresholds, replicates, min_retained, max_trials, seed,
    underpowered_floor, ks_threshold,
) -> CondDepthReport:
    m = thresholds[0]
    rng = replicate_rng(seed, 0)
    accept_p = 2.0**-m
    if min_retained is not None:
        batch = max(int(min_retained / accept_p / 16), 4096)
        if max_trials is None:
            max_trials = int(min_retained / accept_p * 8) + batch
    else:
        batch = replicates
        max_trials = replicates

    kept: list[np.ndarray] = []
    trials = 0
    retained = 0
    while trials < max_trials:
        this = min(batch, max_trials - trials)
        trials += this
        passes = int(rng.binomial(this, accept_p)) if m > 0 else this
        if passes:
            s = sample_selection_counts(n, passes, rng)
            s = s[s >= m]
            kept.append(rng.binomial(s - m, 0.5))
            retained += s.size
        if min_retained is not None and retained >= min_retained:
            break
    h = np.concatenate(kept) if kept else np.empty(0, dtype=np.int64)
    return _finish_report(
        n, 1, a, b, thresholds, "marginal-thinned", trials, h.reshape(-1, 1), seed,
        underpowered_floor, ks_threshold,
    )


def _conditional_tracked(
    n, k, a, b, thresholds, replicates, seed, underpowered_floor, ks_threshold
) -> CondDepthReport:
    rows = []
    for r in range(replicates):
        res = run_tracked(n, k, replicate_rng(seed, r))
        if all(res.degree[i] >= thresholds[i] for i in range(k)):
            rows.append(res.depth.copy())
    h = np.vstack(rows) if rows else np.empty((0, k), dtype=np.int64)
    return _finish_report(
        n, k, a, b, thresholds, "tracked", replicates, h, seed,
        underpowered_floor, ks_threshold,
    )


def depth_clt_experiment(
    n: int, replicates: int, seed: int, ks_threshold: float | None = None
) -> CondDepthReport:
    """Unconditioned depth of one vertex (the a = b = 0 case)."""
    return conditional_depth_experiment(
        n, 1, [0.0], [0], replicates, seed, ks_threshold=ks_threshold
    )


# --------------------------------------------------------------------------- #
# Truncation studies: partial depths and co-selection times
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class H2Row:
    n: int
    cutoff: int
    threshold: float
    probability: float
    mc_sigma: float
    degenerate: bool


def h2_negligibility_experiment(
    ns: Sequence[int],
    replicates: int,
    seed: int,
    factor: float = 0.5,
    m: int = 0,
) -> list[H2Row]:
    """P(late depth gain >= factor * sqrt(ln n) [and degree >= m]), per n.

    The late gain is the depth acquired at steps <= ceil(ln^2 n). With a
    degree condition the forced win-prefix consumes the earliest selections,
    shortening the late segment's free coins accordingly.
    """
    rows = []
    for idx, n in enumerate(ns):
        rng = replicate_rng(seed, idx)
        cutoff = default_cutoff(n)
        s_lo, s_hi = sample_selection_split(n, replicates, rng, cutoff)
        if m > 0:
            s = s_lo + s_hi
            pass_coins = rng.random(replicates) < 2.0**-m
            ok = pass_coins & (s >= m)
            free_lo = np.maximum(s_lo - np.maximum(m - s_hi, 0), 0)
            h2 = np.where(ok, rng.binomial(free_lo, 0.5), 0)
            hits = (h2 >= factor * math.sqrt(math.log(n))) & ok
        else:
            h2 = rng.binomial(s_lo, 0.5)
            hits = h2 >= factor * math.sqrt(math.log(n))
        p = float(np.mean(hits))
        rows.append(
            H2Row(
                n=n,
                cutoff=cutoff,
                threshold=factor * math.sqrt(math.log(n)),
                probability=p,
                mc_sigma=math.sqrt(max(p * (1 - p), 1e-12) / replicates),
                degenerate=cutoff >= n,
            )
        )
    return rows


@dataclass(frozen=True)
class TauReport:
    n: int
    k: int
    replicates: int
    cutoff: float
    probability: float  # P(last co-selection step > ln^2 n)
    mc_sigma: float
    bound: float  # 2 k^2 / ln^2 n


def tau_experiment(n: int, k: int, replicates: int, seed: int) -> TauReport:
    """Tail of the last step at which two of the k tracked vertices were
    selected together, against its 2k^2/ln^2(n) bound."""
    if k < 2:
        raise ValueError("k must be at least 2")
    cutoff = math.log(n) ** 2
    hits = 0
    for r in range(replicates):
        res = run_tracked(n, k, replicate_rng(seed, r))
        if res.co_select_max > cutoff:
            hits += 1
    p = hits / replicates
    return TauReport(
        n=n,
        k=k,
        replicates=replicates,
        cutoff=cutoff,
        probability=p,
        mc_sigma=math.sqrt(max(p * (1 - p), 1e-12) / replicates),
        bound=2.0 * k * k / cutoff,
    )


@dataclass(frozen=True)
class IndependenceReport:
    n: int
    k: int
    replicates: int
    bulk_fraction: float
    tv: GoFReport


def truncated_independence_report(
    n: int,
    replicates: int,
    seed: int,
    delta: float = 1.0,
    bins: int = 6,
    threshold: float = 0.05,
) -> IndependenceReport:
    """Joint law of the two truncated selection-set sizes restricted to the
    bulk event (disjoint late-step selections, sizes within delta*ln(n) of
    2 ln(n)) against the product of its marginals, as a binned TV distance.
    """
    cutoff = default_cutoff(n)
    ln_n = math.log(n)
    u1 = np.empty(replicates, dtype=np.int64)
    u2 = np.empty(replicates, dtype=np.int64)
    bulk = np.zeros(replicates, dtype=bool)
    for r in range(replicates):
        res = run_tracked(n, 2, replicate_rng(seed, r), cutoff=cutoff)
        u1[r], u2[r] = res.sel_upper
        sizes_ok = all(abs(s - 2 * ln_n) <= delta * ln_n for s in res.sel_upper)
        bulk[r] = sizes_ok and res.co_select_max <= cutoff
    b1, b2 = u1[bulk], u2[bulk]
    edges = np.quantile(np.concatenate([b1, b2]), np.linspace(0, 1, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    i1 = np.searchsorted(edges, b1, side="left").clip(1, bins) - 1
    i2 = np.searchsorted(edges, b2, side="left").clip(1, bins) - 1
    joint = np.zeros((bins, bins))
    np.add.at(joint, (i1, i2), 1.0)
    joint /= joint.sum()
    prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    tv = GoFReport(
        kind="tv",
        value=0.5 * float(np.abs(joint - prod).sum()),
        sample_size=int(bulk.sum()),
        reference="product of truncated selection-size marginals",
        threshold=threshold,
    )
    return IndependenceReport(
        n=n, k=2, replicates=replicates, bulk_fraction=float(bulk.mean()), tv=tv
    )
