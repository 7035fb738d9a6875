"""Exhaustive small-n enumeration: exact laws, counts, and bijection checks.

Everything here is integer counting over a complete universe (all increasing
trees on {1..n}, or all merge logs: pair sequences crossed with coin vectors)
with probabilities returned as ``fractions.Fraction``. These exact laws are the
ground truth the randomized simulators and the marginal samplers are tested
against.

Universe sizes: (n-1)! increasing trees; n!(n-1)! oriented merge logs
(the per-step pair count i(i-1)/2 times 2 coin values, multiplied over
i = 2..n). Enumeration is capped at n = 8 for trees and n = 6 for chains;
beyond that the universes stop paying for themselves.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from . import trees as trees_mod
from .coalescent import CoalescentChain, apply_chain, phi
from .trees import RecursiveTree, tree_from_choices

MAX_TREE_N = 8
MAX_CHAIN_N = 6

Pmf = dict  # value -> Fraction


def increasing_tree_count(n: int) -> int:
    return math.factorial(n - 1)


def chain_count(n: int) -> int:
    return math.factorial(n) * math.factorial(n - 1)


def enumerate_increasing_trees(n: int) -> Iterator[RecursiveTree]:
    """All (n-1)! increasing trees on {1..n} (parent(v) < v, root 1)."""
    if not 1 <= n <= MAX_TREE_N:
        raise ValueError(f"tree enumeration supports 1 <= n <= {MAX_TREE_N}")
    for choices in itertools.product(*(range(1, k + 1) for k in range(1, n))):
        yield tree_from_choices(choices)


def enumerate_chains(n: int) -> Iterator[CoalescentChain]:
    """All n!(n-1)! merge logs: every pair sequence crossed with every coin
    vector."""
    if not 1 <= n <= MAX_CHAIN_N:
        raise ValueError(f"chain enumeration supports 1 <= n <= {MAX_CHAIN_N}")
    per_step = []
    for i in range(n, 1, -1):
        pairs = [(a, b) for a in range(1, i + 1) for b in range(a + 1, i + 1)]
        per_step.append([(a, b, coin) for (a, b) in pairs for coin in (0, 1)])
    for merges in itertools.product(*per_step):
        yield CoalescentChain(n=n, merges=merges)


# --------------------------------------------------------------------------- #
# One-pass census over the chain universe
# --------------------------------------------------------------------------- #


@dataclass
class ChainCensus:
    """Aggregates from one sweep over every merge log on {1..n}.

    All counters are integers out of ``total`` equally likely chains;
    ``selection_*`` counters are per tracked vertex, and the truncated
    selection law is keyed by the tuple of per-vertex step tuples above
    ``cutoff``.
    """

    n: int
    tracked: tuple[int, ...]
    cutoff: int
    total: int = 0
    fiber: dict = field(default_factory=dict)  # phi-tree key -> chain count
    vertex_joint: dict = field(default_factory=dict)  # v -> {(deg, dep): count}
    selection_size: dict = field(default_factory=dict)  # v -> {size: count}
    joint_size_depth: dict = field(default_factory=dict)  # v -> {(size, dep): c}
    joint_degrees: dict = field(default_factory=dict)  # (d_1..d_k): count
    multiset: dict = field(default_factory=dict)  # sorted (deg, dep) tuple -> c
    upper_sets: dict = field(default_factory=dict)  # (steps>cutoff per v) -> c
    tau: dict = field(default_factory=dict)  # co-selection max step -> count

    def vertex_law(self, v: int) -> Pmf:
        return _normalize(self.vertex_joint[v], self.total)

    def selection_law(self, v: int) -> Pmf:
        return _normalize(self.selection_size[v], self.total)

    def multiset_law(self) -> Pmf:
        return _normalize(self.multiset, self.total)

    def joint_degree_law(self) -> Pmf:
        return _normalize(self.joint_degrees, self.total)

    def upper_set_law(self) -> Pmf:
        return _normalize(self.upper_sets, self.total)

    def tau_law(self) -> Pmf:
        return _normalize(self.tau, self.total)


def _normalize(counter: dict, total: int) -> Pmf:
    return {key: Fraction(c, total) for key, c in sorted(counter.items())}


def chain_census(n: int, tracked: Iterable[int] = (), cutoff: int = 0) -> ChainCensus:
    """Sweep the whole chain universe once, collecting every exact law the
    test suite needs. ``tracked`` defaults to all of {1..n}."""
    tracked = tuple(tracked) if tracked else tuple(range(1, n + 1))
    census = ChainCensus(n=n, tracked=tracked, cutoff=cutoff)
    for v in tracked:
        census.vertex_joint[v] = {}
        census.selection_size[v] = {}
        census.joint_size_depth[v] = {}

    for chain in enumerate_chains(n):
        result = apply_chain(chain, tracked=tracked)
        census.total += 1

        deg = trees_mod.degrees(result.tree)
        dep = trees_mod.depths(result.tree)

        key = phi(chain).key()
        census.fiber[key] = census.fiber.get(key, 0) + 1

        pairs = tuple(sorted((int(deg[v]), int(dep[v])) for v in range(1, n + 1)))
        census.multiset[pairs] = census.multiset.get(pairs, 0) + 1

        for v in tracked:
            rec = result.records[v]
            dv, hv = int(deg[v]), int(dep[v])
            if hv != rec.depth:
                raise AssertionError("depth disagrees with kappa count")
            _bump(census.vertex_joint[v], (dv, hv))
            _bump(census.selection_size[v], rec.size)
            _bump(census.joint_size_depth[v], (rec.size, hv))

        degs = tuple(int(deg[v]) for v in tracked)
        _bump(census.joint_degrees, degs)

        uppers = tuple(
            tuple(s for s in result.records[v].steps if s > cutoff) for v in tracked
        )
        _bump(census.upper_sets, uppers)

        co = 1
        for ia in range(len(tracked)):
            steps_a = set(result.records[tracked[ia]].steps)
            for ib in range(ia + 1, len(tracked)):
                common = steps_a.intersection(result.records[tracked[ib]].steps)
                if common:
                    co = max(co, max(common))
        _bump(census.tau, co)

    return census


def _bump(counter: dict, key) -> None:
    counter[key] = counter.get(key, 0) + 1


# --------------------------------------------------------------------------- #
# Independent closed-form laws (the other side of each cross-check)
# --------------------------------------------------------------------------- #


def binom_cdf_fraction(k: int, t: int) -> Fraction:
    """P(Bin(t, 1/2) <= k) as an exact rational."""
    if k < 0:
        return Fraction(0)
    if k >= t:
        return Fraction(1)
    return Fraction(sum(math.comb(t, i) for i in range(k + 1)), 1 << t)


def bernoulli_sum_pmf(probs: Iterable[Fraction]) -> Pmf:
    """Exact law of a sum of independent Bernoulli variables."""
    pmf = {0: Fraction(1)}
    for p in probs:
        nxt: dict[int, Fraction] = {}
        for val, mass in pmf.items():
            if p != 1:
                nxt[val] = nxt.get(val, Fraction(0)) + mass * (1 - p)
            if p != 0:
                nxt[val + 1] = nxt.get(val + 1, Fraction(0)) + mass * p
        pmf = nxt
    return dict(sorted(pmf.items()))


def selection_size_pmf_exact(n: int, lo: int = 2, hi: int | None = None) -> Pmf:
    """Law of the selection count over steps [lo, hi]: independent
    Bernoulli(2/i) summands; the closed-form route, no enumeration."""
    hi = n if hi is None else min(hi, n)
    return bernoulli_sum_pmf(Fraction(2, i) for i in range(max(lo, 2), hi + 1))


def rrt_vertex_degree_pmf(n: int, v: int) -> Pmf:
    """Degree law of vertex v in the sequentially grown tree: one Bernoulli
    (1/j) per later arrival j+1, j = v..n-1. (The j = 1 term for v = 1 is
    Bernoulli(1): vertex 2 always attaches to the root.)"""
    if not 1 <= v <= n:
        raise ValueError("vertex out of range")
    return bernoulli_sum_pmf(Fraction(1, j) for j in range(v, n))


def min_geometric_pmf(size_pmf: Pmf) -> Pmf:
    """Law of min(G, S): G geometric(1/2) on {0,1,2,...} independent of the
    selection count S. P(G = g) = 2**-(g+1)."""
    out: dict[int, Fraction] = {}
    for s, mass in size_pmf.items():
        for d in range(s):
            out[d] = out.get(d, Fraction(0)) + mass * Fraction(1, 2 ** (d + 1))
        out[s] = out.get(s, Fraction(0)) + mass * Fraction(1, 2**s)
    return dict(sorted(out.items()))


def exact_degree_depth_law(n: int, v: int) -> Pmf:
    """Exact joint (degree, depth) law of one vertex of the merge-log tree,
    as rationals over the full chain universe (n <= 6)."""
    if not 1 <= v <= n:
        raise ValueError("vertex out of range")
    return chain_census(n, tracked=(v,)).vertex_law(v)


def degree_depth_identity_sides(census: ChainCensus, v: int, k: int, l: int):
    """Both sides of P(deg >= k, depth <= l) for a tracked vertex: the
    enumerated left side, and 2**-k * P(Bin(S - k, 1/2) <= l, S >= k) with
    S the enumerated selection-size law."""
    lhs = sum(
        mass
        for (d, h), mass in census.vertex_law(v).items()
        if d >= k and h <= l
    )
    rhs = Fraction(0)
    for size, mass in census.selection_law(v).items():
        if size >= k:
            rhs += mass * binom_cdf_fraction(l, size - k)
    rhs *= Fraction(1, 2**k)
    return Fraction(lhs), rhs


def depth_given_size_is_binomial(census: ChainCensus, v: int) -> bool:
    """Exact check that depth | selection size = s is Bin(s, 1/2)."""
    joint = _normalize(census.joint_size_depth[v], census.total)
    size_law = census.selection_law(v)
    for (s, h), mass in joint.items():
        want = size_law[s] * Fraction(math.comb(s, h), 2**s)
        if mass != want:
            return False
    return True


# --------------------------------------------------------------------------- #
# Tree-side laws
# --------------------------------------------------------------------------- #


@dataclass
class TreeCensus:
    n: int
    total: int = 0
    multiset: dict = field(default_factory=dict)
    label_joint: dict = field(default_factory=dict)  # (deg, dep) summed over v
    vertex_joint: dict = field(default_factory=dict)  # v -> {(deg, dep): count}
    degree_marginal: dict = field(default_factory=dict)  # v -> {deg: count}

    def multiset_law(self) -> Pmf:
        return _normalize(self.multiset, self.total)

    def uniform_label_law(self) -> Pmf:
        """Joint (degree, depth) of a uniformly random label of a uniformly
        random increasing tree."""
        return _normalize(self.label_joint, self.total * self.n)

    def vertex_degree_law(self, v: int) -> Pmf:
        return _normalize(self.degree_marginal[v], self.total)


def tree_census(n: int) -> TreeCensus:
    census = TreeCensus(n=n)
    for v in range(1, n + 1):
        census.vertex_joint[v] = {}
        census.degree_marginal[v] = {}
    for tree in enumerate_increasing_trees(n):
        census.total += 1
        deg = trees_mod.degrees(tree)
        dep = trees_mod.depths(tree)
        pairs = tuple(sorted((int(deg[v]), int(dep[v])) for v in range(1, n + 1)))
        census.multiset[pairs] = census.multiset.get(pairs, 0) + 1
        for v in range(1, n + 1):
            key = (int(deg[v]), int(dep[v]))
            _bump(census.label_joint, key)
            _bump(census.vertex_joint[v], key)
            _bump(census.degree_marginal[v], int(deg[v]))
    return census


# --------------------------------------------------------------------------- #
# Bijection verification
# --------------------------------------------------------------------------- #

MAX_VERIFY_N = 5


@dataclass
class PhiReport:
    n: int
    chain_total: int
    tree_total: int
    expected_chains: int
    expected_trees: int
    expected_fiber: int
    ok: bool
    failures: list[str] = field(default_factory=list)


def verify_phi(n: int, census: ChainCensus | None = None) -> PhiReport:
    """Check the relabeling map hits every increasing tree with fibers of
    exactly n! chains, i.e. pushes the uniform chain law to the uniform
    tree law."""
    if not 1 <= n <= MAX_VERIFY_N:
        raise ValueError(f"verify_phi supports 1 <= n <= {MAX_VERIFY_N}")
    if census is None:
        census = chain_census(n, tracked=(1,))
    report = PhiReport(
        n=n,
        chain_total=census.total,
        tree_total=len(census.fiber),
        expected_chains=chain_count(n),
        expected_trees=increasing_tree_count(n),
        expected_fiber=math.factorial(n),
        ok=True,
    )
    if census.total != report.expected_chains:
        report.failures.append(
            f"chain universe has {census.total} elements, expected {report.expected_chains}"
        )
    tree_keys = {t.key() for t in enumerate_increasing_trees(n)}
    missing = tree_keys - set(census.fiber)
    extra = set(census.fiber) - tree_keys
    if missing:
        report.failures.append(f"{len(missing)} increasing trees never produced: {sorted(missing)[:3]}")
    if extra:
        report.failures.append(f"images outside the increasing trees: {sorted(extra)[:3]}")
    bad_fibers = {k: c for k, c in census.fiber.items() if c != report.expected_fiber}
    if bad_fibers:
        sample = list(bad_fibers.items())[:3]
        report.failures.append(f"non-uniform fibers (tree, count): {sample}")
    report.ok = not report.failures
    return report


# --------------------------------------------------------------------------- #
# Golden-file emission
# --------------------------------------------------------------------------- #

GOLDEN_SCHEMA = "rrtlab-golden/1"


def golden_payload(max_n: int = 5) -> dict:
    """Exact vertex-1 laws and counts for n = 2..max_n, JSON-serializable."""
    payload = {"schema": GOLDEN_SCHEMA, "laws": {}}
    for n in range(2, max_n + 1):
        census = chain_census(n, tracked=(1,))
        payload["laws"][str(n)] = {
            "chain_count": census.total,
            "tree_count": increasing_tree_count(n),
            "vertex1_degree_depth": [
                [d, h, mass.numerator, mass.denominator]
                for (d, h), mass in census.vertex_law(1).items()
            ],
            "selection_size": [
                [s, mass.numerator, mass.denominator]
                for s, mass in census.selection_law(1).items()
            ],
        }
    return payload


def write_golden(path, max_n: int = 5) -> None:
    with open(path, "w") as fh:
        json.dump(golden_payload(max_n), fh, indent=1, sort_keys=True)
        fh.write("\n")
