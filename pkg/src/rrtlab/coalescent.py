"""Discrete Kingman coalescent on labeled forests, as a merge log.

The chain starts from n singleton trees (step n) and at each step i = n..2
merges two uniformly chosen tree roots, with a fair coin fixing the edge
direction; after n-1 merges a single rooted tree remains. The merge log is
the full record (pair indices + coins). From it we derive:

  * the final tree with its original labels;
  * the relabeling by edge-addition order and the induced increasing tree
    (an n!-to-1, measure-preserving reduction onto recursive trees);
  * per-vertex selection records: the steps at which a vertex's tree was
    chosen, and the subset of those that increased its depth;
  * truncated selection sets / partial depths at a step cutoff, and the last
    co-selection step of a group of tracked vertices.

Two simulation routes are provided and cross-checked by the test suite:
``run_kingman`` materializes the whole forest (exact, O(n log n)), while the
``sample_*`` / ``run_tracked`` family simulates only the marginal seen by a
fixed set of tracked vertices, by jumping between their selection steps with
a closed-form inversion. The marginal route is what makes n = 2**20 with
10**5 replicates affordable.

Selection-step facts used throughout (verified exactly at small n by the
enumeration oracle): a fixed vertex's tree is chosen at step i with
probability 2/i, independently across steps; given the selection count, the
coin outcomes are independent and fair, the depth is the number of lost
coins, and the degree is the initial winning streak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .trees import RecursiveTree


class ChainStateError(RuntimeError):
    """Raised when an operation needs a complete merge log and got less."""


def default_cutoff(n: int) -> int:
    """Step index ceil(ln(n)**2) separating early from late merges."""
    if n < 1:
        raise ValueError("n must be positive")
    return math.ceil(math.log(n) ** 2) if n > 1 else 0


def expected_selection_mean(n: int) -> float:
    """Expected size of a selection set: sum of 2/i for i = 2..n."""
    return float(np.sum(2.0 / np.arange(2, n + 1))) if n >= 2 else 0.0


# --------------------------------------------------------------------------- #
# Chain record types
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class CoalescentChain:
    """Merge log: entry j covers step i = n - j (i = n down to 2) and holds
    (a, b, coin) with 1 <= a < b <= i indexing the step's forest components
    in increasing order of smallest label. coin = 1 directs the new edge
    toward component a's root (a's root stays a root), 0 toward b's.
    """

    n: int
    merges: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.merges) != max(self.n - 1, 0):
            raise ChainStateError(
                f"chain on {self.n} labels needs {self.n - 1} merges, got {len(self.merges)}"
            )
        for j, (a, b, coin) in enumerate(self.merges):
            i = self.n - j
            if not (1 <= a < b <= i):
                raise ValueError(f"step {i}: pair ({a}, {b}) out of range")
            if coin not in (0, 1):
                raise ValueError(f"step {i}: coin must be 0 or 1")

    def steps(self) -> Iterable[tuple[int, int, int, int]]:
        """Yield (step, a, b, coin) with step descending from n to 2."""
        for j, (a, b, coin) in enumerate(self.merges):
            yield self.n - j, a, b, coin


@dataclass(frozen=True)
class ForestState:
    """Forest after the merges above ``step`` have been applied: exactly
    ``step`` components, listed as (smallest label, root label) in increasing
    order of smallest label, plus the partial parent map built so far.
    """

    n: int
    step: int
    components: tuple[tuple[int, int], ...]
    parent: np.ndarray

    def depth_of(self, v: int) -> int:
        d, p = 0, v
        while self.parent[p] != 0:
            p = int(self.parent[p])
            d += 1
        return d


@dataclass(frozen=True)
class SelectionRecord:
    """Steps at which a tracked vertex's tree was chosen to merge.

    ``kappa_steps`` is the subset where the added edge pointed away from the
    vertex's tree root, i.e. where the whole tree (the vertex included)
    gained one unit of depth; the vertex's final depth equals
    ``len(kappa_steps)``.
    """

    n: int
    vertex: int
    steps: tuple[int, ...]
    kappa_steps: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.steps)

    @property
    def depth(self) -> int:
        return len(self.kappa_steps)


@dataclass(frozen=True)
class TruncatedSelection:
    """Split of a selection record at a step cutoff.

    ``upper`` holds the selection steps strictly above the cutoff; ``h1``
    counts depth gains above the cutoff (depth already acquired when only
    ``cutoff`` trees remain), ``h2`` the remainder, so h1 + h2 is the final
    depth. ``degenerate`` flags cutoffs at or above n, where the split
    carries no information.
    """

    vertex: int
    cutoff: int
    upper: tuple[int, ...]
    h1: int
    h2: int
    degenerate: bool = False


def partial_depths(record: SelectionRecord, cutoff: int | None = None) -> TruncatedSelection:
    """Split ``record`` at ``cutoff`` (default ceil(ln(n)**2))."""
    if cutoff is None:
        cutoff = default_cutoff(record.n)
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    upper = tuple(s for s in record.steps if s > cutoff)
    h1 = sum(1 for s in record.kappa_steps if s > cutoff)
    return TruncatedSelection(
        vertex=record.vertex,
        cutoff=cutoff,
        upper=upper,
        h1=h1,
        h2=record.depth - h1,
        degenerate=cutoff >= record.n,
    )


def tau_k(records: dict[int, SelectionRecord], k: int) -> int:
    """Largest step at which two distinct vertices of {1..k} were selected
    simultaneously; 1 if that never happens (so every threshold test
    ``tau <= t`` treats the empty case as trivially below).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    missing = [v for v in range(1, k + 1) if v not in records]
    if missing:
        raise ValueError(f"selection records missing for vertices {missing}")
    tau = 1
    for v in range(1, k + 1):
        sv = set(records[v].steps)
        for w in range(v + 1, k + 1):
            common = sv.intersection(records[w].steps)
            if common:
                tau = max(tau, max(common))
    return tau


# --------------------------------------------------------------------------- #
# Full-forest simulation
# --------------------------------------------------------------------------- #


class _Fenwick:
    """Binary indexed tree supporting prefix sums and select over {1..n}."""

    def __init__(self, n: int):
        self.n = n
        self.tree = [0] * (n + 1)
        self.log = n.bit_length()

    def add(self, i: int, delta: int) -> None:
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def select(self, k: int) -> int:
        """Smallest index whose prefix sum reaches k (k >= 1)."""
        pos = 0
        for shift in range(self.log, -1, -1):
            nxt = pos + (1 << shift)
            if nxt <= self.n and self.tree[nxt] < k:
                pos = nxt
                k -= self.tree[nxt]
        return pos + 1


class _Forest:
    """Disjoint forest over {1..n}: union-find plus, per component, its root
    label and smallest label, with order-statistics lookup of the alive
    smallest labels (components are addressed by rank of smallest label).
    """

    def __init__(self, n: int):
        self.n = n
        self.dsu = list(range(n + 1))
        self.root = list(range(n + 1))
        self.small = list(range(n + 1))
        self.rank = [0] * (n + 1)
        self.bit = _Fenwick(n)
        for v in range(1, n + 1):
            self.bit.add(v, 1)

    def find(self, v: int) -> int:
        dsu = self.dsu
        while dsu[v] != v:
            dsu[v] = dsu[dsu[v]]
            v = dsu[v]
        return v

    def component_at(self, index: int) -> int:
        """Representative of the index-th component (1-based, ordered by
        smallest label)."""
        return self.find(self.bit.select(index))

    def components(self) -> list[tuple[int, int]]:
        out = []
        for idx in range(1, self.bit_count() + 1):
            rep = self.component_at(idx)
            out.append((self.small[rep], self.root[rep]))
        return out

    def bit_count(self) -> int:
        total = 0
        i = self.n
        while i > 0:
            total += self.bit.tree[i]
            i -= i & (-i)
        return total

    def merge(self, rep_a: int, rep_b: int, coin: int) -> tuple[int, int]:
        """Join two components; coin = 1 keeps ``rep_a``'s root. Returns the
        (tail_root, head_root) labels of the edge added (tail -> head)."""
        head = self.root[rep_a] if coin == 1 else self.root[rep_b]
        tail = self.root[rep_b] if coin == 1 else self.root[rep_a]
        keep_small = min(self.small[rep_a], self.small[rep_b])
        drop_small = max(self.small[rep_a], self.small[rep_b])
        self.bit.add(drop_small, -1)
        if self.rank[rep_a] < self.rank[rep_b]:
            rep_a, rep_b = rep_b, rep_a
        self.dsu[rep_b] = rep_a
        if self.rank[rep_a] == self.rank[rep_b]:
            self.rank[rep_a] += 1
        self.root[rep_a] = head
        self.small[rep_a] = keep_small
        return tail, head


@dataclass
class ChainResult:
    tree: RecursiveTree
    records: dict[int, SelectionRecord]
    snapshots: dict[int, ForestState]
    edge_tails: list[tuple[int, int, int]]  # (step, tail_root, head_root)


def apply_chain(
    chain: CoalescentChain,
    tracked: Sequence[int] = (),
    snapshot_steps: Sequence[int] = (),
) -> ChainResult:
    """Replay a merge log; also used by the enumeration oracle, so random and
    exhaustive paths share one implementation.
    """
    n = chain.n
    tracked = sorted(set(tracked))
    for v in tracked:
        if not 1 <= v <= n:
            raise ValueError(f"tracked label {v} out of range 1..{n}")
    want_snapshot = set(snapshot_steps)

    forest = _Forest(n)
    parent = np.zeros(n + 1, dtype=np.int64)
    steps_of = {v: [] for v in tracked}
    kappa_of = {v: [] for v in tracked}
    snapshots: dict[int, ForestState] = {}
    edge_tails: list[tuple[int, int, int]] = []

    for i, a, b, coin in chain.steps():
        if i in want_snapshot:
            snapshots[i] = ForestState(
                n=n, step=i, components=tuple(forest.components()), parent=parent.copy()
            )
        rep_a = forest.component_at(a)
        rep_b = forest.component_at(b)
        winner = rep_a if coin == 1 else rep_b
        for v in tracked:
            rep_v = forest.find(v)
            if rep_v == rep_a or rep_v == rep_b:
                steps_of[v].append(i)
                if rep_v != winner:
                    kappa_of[v].append(i)
        tail, head = forest.merge(rep_a, rep_b, coin)
        parent[tail] = head
        edge_tails.append((i, tail, head))

    root = forest.root[forest.find(1)] if n >= 1 else 1
    tree = RecursiveTree(n=n, parent=parent, root=root)
    records = {
        v: SelectionRecord(
            n=n,
            vertex=v,
            steps=tuple(reversed(steps_of[v])),
            kappa_steps=tuple(reversed(kappa_of[v])),
        )
        for v in tracked
    }
    return ChainResult(tree=tree, records=records, snapshots=snapshots, edge_tails=edge_tails)


def sample_chain(n: int, rng: np.random.Generator) -> CoalescentChain:
    """Draw a merge log: pair uniform among the i(i-1)/2 choices, coin fair,
    all independent."""
    if n < 1:
        raise ValueError("n must be positive")
    merges = []
    for i in range(n, 1, -1):
        a = int(rng.integers(1, i + 1))
        b = int(rng.integers(1, i))
        if b >= a:
            b += 1
        if a > b:
            a, b = b, a
        coin = int(rng.integers(0, 2))
        merges.append((a, b, coin))
    return CoalescentChain(n=n, merges=tuple(merges))


def run_kingman(
    n: int,
    rng: np.random.Generator,
    tracked: Sequence[int] = (),
    snapshot_steps: Sequence[int] = (),
) -> tuple[CoalescentChain, RecursiveTree, dict[int, SelectionRecord]]:
    """Sample a chain and replay it. Returns the merge log, the final tree
    with original labels, and selection records for the tracked vertices.
    """
    chain = sample_chain(n, rng)
    result = apply_chain(chain, tracked=tracked, snapshot_steps=snapshot_steps)
    return chain, result.tree, result.records


# --------------------------------------------------------------------------- #
# Relabeling bijection
# --------------------------------------------------------------------------- #


def sigma_relabel(chain: CoalescentChain) -> np.ndarray:
    """Permutation sending the final root to 1 and the tail of the edge added
    at step s to s; labels then decrease along leaf-to-root paths.

    Returned as an array ``sigma`` with ``sigma[v]`` the new label of v.
    """
    result = apply_chain(chain)
    sigma = np.zeros(chain.n + 1, dtype=np.int64)
    sigma[result.tree.root] = 1
    for step, tail, _ in result.edge_tails:
        sigma[tail] = step
    return sigma


def phi(chain: CoalescentChain) -> RecursiveTree:
    """Relabel the chain's final tree by edge-addition order, producing an
    increasing tree on {1..n} rooted at 1."""
    result = apply_chain(chain)
    sigma = np.zeros(chain.n + 1, dtype=np.int64)
    sigma[result.tree.root] = 1
    for step, tail, _ in result.edge_tails:
        sigma[tail] = step
    parent = np.zeros(chain.n + 1, dtype=np.int64)
    old_parent = result.tree.parent
    for v in range(1, chain.n + 1):
        if v != result.tree.root:
            parent[sigma[v]] = sigma[old_parent[v]]
    return RecursiveTree(n=chain.n, parent=parent, root=1)


# --------------------------------------------------------------------------- #
# Marginal (tracked-only) simulation
# --------------------------------------------------------------------------- #
#
# For c tracked components the probability that the step-i pair misses all of
# them is (i-c)(i-c-1) / (i(i-1)), so the no-hit survival from step J down to
# step j telescopes into a ratio of falling factorials:
#
#     Q(j) = prod_{t=0..c-1} (j-1-t)(j-2-t) / ((J-t)(J-1-t))
#
# Q is the CDF shifted by one (P(next hit <= j) = Q(j+1)), and Q(c+1) = 0, so
# a hit at or above step c+1 is certain. Inverting Q jumps straight from one
# hit to the next.


def _survival(j: np.ndarray | float, start: np.ndarray | float, c: int):
    """Q(j): probability of no hit at any step in [j, start]."""
    out = 1.0
    for t in range(c):
        out = out * ((j - 1.0 - t) * (j - 2.0 - t)) / ((start - t) * (start - 1.0 - t))
    return out


def _next_hit_vec(start: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized next-hit inversion for one tracked component (c = 1):
    the hit step H satisfies H(H-1) >= u * start(start-1) minimally."""
    d = start * (start - 1.0)
    h = np.ceil((1.0 + np.sqrt(1.0 + 4.0 * u * d)) / 2.0)
    # float-boundary repair: enforce (h-1)(h-2) < u*d <= h(h-1)
    ud = u * d
    h = np.where((h - 1.0) * (h - 2.0) >= ud, h - 1.0, h)
    h = np.where(h * (h - 1.0) < ud, h + 1.0, h)
    return np.clip(h, 2.0, start)


def _next_hit_scalar(start: int, c: int, u: float) -> int:
    """Next-hit inversion for c tracked components via binary search over
    the monotone survival Q."""
    if start < 2:
        raise ValueError("no steps remain")
    lo, hi = 2, start  # answer in [2, start]; Q(j+1) >= u defines it
    while lo < hi:
        mid = (lo + hi) // 2
        if _survival(mid + 1.0, float(start), c) >= u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def sample_selection_counts(
    n: int,
    replicates: int,
    rng: np.random.Generator,
    lo: int = 2,
    hi: int | None = None,
) -> np.ndarray:
    """Number of selection steps of one tracked vertex falling in [lo, hi],
    per replicate (hi defaults to n). Exact marginal sampling by inversion.
    """
    if n < 1:
        raise ValueError("n must be positive")
    hi = n if hi is None else min(hi, n)
    counts = np.zeros(replicates, dtype=np.int64)
    if hi < max(lo, 2) or replicates == 0:
        return counts
    pos = np.full(replicates, float(hi))
    active = np.ones(replicates, dtype=bool)
    floor = float(max(lo, 2))
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        u = rng.random(idx.size)
        hit = _next_hit_vec(pos[idx], u)
        good = hit >= floor
        counts[idx[good]] += 1
        pos[idx] = hit - 1.0
        active[idx] = good & (pos[idx] >= floor)
    return counts


def sample_selection_split(
    n: int, replicates: int, rng: np.random.Generator, cutoff: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Per-replicate sizes (|S ∩ [2..cutoff]|, |S above cutoff|) for one
    tracked vertex; cutoff defaults to ceil(ln(n)**2)."""
    if cutoff is None:
        cutoff = default_cutoff(n)
    s_hi = sample_selection_counts(n, replicates, rng, lo=cutoff + 1)
    s_lo = sample_selection_counts(n, replicates, rng, lo=2, hi=cutoff)
    return s_lo, s_hi


def sample_degree_depth(
    n: int, replicates: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Exact joint (degree, depth) sample of one vertex of the final tree.

    Given the selection count S, the coins at the selection steps are fair
    and independent: degree = leading win streak, depth = total losses.
    """
    s = sample_selection_counts(n, replicates, rng)
    g = rng.geometric(0.5, size=replicates) - 1  # wins before the first loss
    degree = np.minimum(g, s)
    cut = degree < s  # a loss actually occurred
    remaining = np.where(cut, s - degree - 1, 0)
    depth = np.where(cut, 1 + rng.binomial(remaining, 0.5), 0)
    return degree.astype(np.int64), depth.astype(np.int64)


@dataclass(frozen=True)
class SelectionLawReport:
    n: int
    vertex: int
    replicates: int
    pmf: dict[int, float]
    mean: float
    expected_mean: float


def selection_set_law_check(
    n: int, v: int, replicates: int, rng: np.random.Generator
) -> SelectionLawReport:
    """Empirical law of the selection-set size of vertex v (the law does not
    depend on the label: labels play no role in the pair choices).
    """
    if not 1 <= v <= n:
        raise ValueError(f"vertex {v} out of range 1..{n}")
    if replicates < 1:
        raise ValueError("replicates must be positive")
    counts = sample_selection_counts(n, replicates, rng)
    values, freq = np.unique(counts, return_counts=True)
    pmf = {int(val): int(c) / replicates for val, c in zip(values, freq)}
    return SelectionLawReport(
        n=n,
        vertex=v,
        replicates=replicates,
        pmf=pmf,
        mean=float(counts.mean()),
        expected_mean=expected_selection_mean(n),
    )


def selection_count_pmf(n: int, lo: int = 2, hi: int | None = None, support_cap: int | None = None):
    """Exact law of the selection count over steps [lo, hi]: the sum of
    independent Bernoulli(2/i). Dynamic program over i; the support is
    capped twelve standard deviations past the mean (any discarded mass is
    far below double-precision resolution of the answers).
    """
    hi = n if hi is None else min(hi, n)
    lo = max(lo, 2)
    if hi < lo:
        return np.array([1.0])
    probs = 2.0 / np.arange(lo, hi + 1)
    mean, var = probs.sum(), (probs * (1 - probs)).sum()
    if support_cap is None:
        support_cap = min(len(probs), int(mean + 12.0 * math.sqrt(var) + 6))
    pmf = np.zeros(support_cap + 1)
    pmf[0] = 1.0
    for p in probs:
        pmf[1:] = pmf[1:] * (1.0 - p) + pmf[:-1] * p
        pmf[0] *= 1.0 - p
    return pmf


# --------------------------------------------------------------------------- #
# Tracked-group state machine (k >= 1 vertices jointly)
# --------------------------------------------------------------------------- #


@dataclass
class TrackedResult:
    """Joint observables of the tracked vertices {1..k} from one replicate.

    Arrays are indexed by vertex - 1. ``h1`` counts depth gains above the
    cutoff, ``h2`` at or below it; ``co_select_max`` is the largest step at
    which two tracked vertices were selected together (1 if never).
    """

    n: int
    k: int
    cutoff: int
    sel_count: np.ndarray
    sel_upper: np.ndarray
    degree: np.ndarray
    depth: np.ndarray
    h1: np.ndarray
    co_select_max: int = 1

    @property
    def h2(self) -> np.ndarray:
        return self.depth - self.h1


def run_tracked(
    n: int, k: int, rng: np.random.Generator, cutoff: int | None = None
) -> TrackedResult:
    """Simulate the coalescent marginal of vertices {1..k}: only the steps
    hitting a tracked component are realized; untracked trees are never
    materialized. Distributionally identical to tracking {1..k} through
    ``run_kingman`` (the suite checks this against exhaustive enumeration).
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if cutoff is None:
        cutoff = default_cutoff(n)

    members: list[list[int]] = [[v] for v in range(1, k + 1)]
    root_of: list[int | None] = [v for v in range(1, k + 1)]
    sel = np.zeros(k, dtype=np.int64)
    sel_hi = np.zeros(k, dtype=np.int64)
    degree = np.zeros(k, dtype=np.int64)
    depth = np.zeros(k, dtype=np.int64)
    h1 = np.zeros(k, dtype=np.int64)
    co_max = 1

    pos = n
    while pos >= 2:
        c = len(members)
        if pos <= c + 1:
            # with at most one untracked tree left every step hits; the
            # telescoped survival would divide by zero here
            i = pos
        else:
            i = _next_hit_scalar(pos, c, float(rng.random()))
        above = i > cutoff
        # Classify the hit: one tracked pair (weight 1 each) or one tracked
        # group against one of the i - c untracked trees (weight i - c each).
        pair_weight = c * (c - 1) // 2
        total = pair_weight + c * (i - c)
        r = rng.random() * total
        if r < pair_weight:
            gi, gj = _unrank_pair(int(r), c)
            if len(members[gi]) + len(members[gj]) >= 2:
                co_max = max(co_max, i)
            win, lose = (gi, gj) if rng.integers(0, 2) == 1 else (gj, gi)
            for v in members[gi] + members[gj]:
                sel[v - 1] += 1
                if above:
                    sel_hi[v - 1] += 1
            for v in members[lose]:
                depth[v - 1] += 1
                if above:
                    h1[v - 1] += 1
            if root_of[win] is not None:
                degree[root_of[win] - 1] += 1
            members[win].extend(members[lose])
            del members[lose], root_of[lose]
        else:
            g = int((r - pair_weight) // (i - c))
            if len(members[g]) >= 2:
                co_max = max(co_max, i)
            for v in members[g]:
                sel[v - 1] += 1
                if above:
                    sel_hi[v - 1] += 1
            if rng.integers(0, 2) == 1:
                if root_of[g] is not None:
                    degree[root_of[g] - 1] += 1
            else:
                for v in members[g]:
                    depth[v - 1] += 1
                    if above:
                        h1[v - 1] += 1
                root_of[g] = None
        pos = i - 1

    return TrackedResult(
        n=n,
        k=k,
        cutoff=cutoff,
        sel_count=sel,
        sel_upper=sel_hi,
        degree=degree,
        depth=depth,
        h1=h1,
        co_select_max=co_max,
    )


def _unrank_pair(r: int, c: int) -> tuple[int, int]:
    """r-th unordered pair (i < j) of {0..c-1} in lexicographic order."""
    i = 0
    block = c - 1
    while r >= block:
        r -= block
        i += 1
        block -= 1
    return i, i + 1 + r
