"""Rooted labeled trees on {1..n} and the sequential random recursive tree.

Degree convention used everywhere in this package: the degree of a vertex is
its number of CHILDREN (edges toward the root do not count), and the depth of
the root is 0. This matches the growth dynamics (the degree of v counts how many later
arrivals chose v) but differs from the graph-theoretic degree of non-root
vertices by one.

Trees are stored as a parent array indexed by label; entry 0 and the root's
entry are 0. One integer per vertex keeps n = 2**24 within a couple hundred
megabytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np


@dataclass(frozen=True)
class RecursiveTree:
    """Rooted labeled tree on {1..n} as a parent map.

    parent[v] is the parent label of v for v != root, parent[root] = 0,
    parent[0] unused. Trees produced by sequential growth are *increasing*:
    parent[v] < v for every v >= 2, and the root is 1.
    """

    n: int
    parent: np.ndarray
    root: int = 1

    @classmethod
    def from_parent_map(cls, n: int, parent: dict[int, int] | np.ndarray, root: int = 1):
        arr = np.zeros(n + 1, dtype=np.int64)
        if isinstance(parent, dict):
            for v, p in parent.items():
                arr[v] = p
        else:
            arr[: len(parent)] = parent
        arr[root] = 0
        return cls(n=n, parent=arr, root=root)

    def is_increasing(self) -> bool:
        v = np.arange(2, self.n + 1)
        return self.root == 1 and bool(np.all(self.parent[v] < v))

    def validate(self) -> None:
        """Check the parent map is a tree rooted at self.root (raises)."""
        if self.n < 1:
            raise ValueError("tree must have at least one vertex")
        if not 1 <= self.root <= self.n:
            raise ValueError("root label out of range")
        if self.parent.shape[0] != self.n + 1:
            raise ValueError("parent array must have length n + 1")
        if self.parent[self.root] != 0:
            raise ValueError("root must have parent 0")
        for v in range(1, self.n + 1):
            if v == self.root:
                continue
            p = int(self.parent[v])
            if not 1 <= p <= self.n or p == v:
                raise ValueError(f"vertex {v} has invalid parent {p}")
        if np.any(depths(self) < 0):
            raise ValueError("parent links do not all reach the root")

    def edges(self) -> Iterable[tuple[int, int]]:
        """Yield (child, parent) pairs."""
        for v in range(1, self.n + 1):
            if v != self.root:
                yield v, int(self.parent[v])

    def key(self) -> tuple:
        """Hashable canonical encoding (for enumeration bookkeeping)."""
        return (self.n, self.root, tuple(int(p) for p in self.parent[1:]))


class VertexStats(NamedTuple):
    vertex: int
    degree: int
    depth: int


def sample_parents(n: int, rng: np.random.Generator) -> np.ndarray:
    """Parent choices of the sequential construction: entry k (0-based,
    k = 0..n-2) is the parent of vertex k+2, uniform on {1..k+1}.
    """
    u = rng.random(n - 1)
    return (u * np.arange(1, n)).astype(np.int64) + 1


def tree_from_choices(choices) -> RecursiveTree:
    """Build the increasing tree determined by explicit parent choices
    (choices[k] in {1..k+1} is the parent of vertex k+2).
    """
    choices = np.asarray(choices, dtype=np.int64)
    n = len(choices) + 1
    upper = np.arange(1, n)
    if n > 1 and (np.any(choices < 1) or np.any(choices > upper)):
        raise ValueError("choice k must lie in {1..k+1}")
    parent = np.zeros(n + 1, dtype=np.int64)
    parent[2:] = choices
    return RecursiveTree(n=n, parent=parent, root=1)


def grow_rrt(n: int, rng: np.random.Generator) -> RecursiveTree:
    """Grow a random recursive tree on {1..n}: vertex k+1 attaches to a
    uniformly random vertex of {1..k}, independently for each k.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if n == 1:
        return RecursiveTree(n=1, parent=np.zeros(2, dtype=np.int64), root=1)
    return tree_from_choices(sample_parents(n, rng))


def degrees(tree: RecursiveTree) -> np.ndarray:
    """Child counts per label, index 0 unused."""
    if tree.n == 1:
        return np.zeros(2, dtype=np.int64)
    children = np.delete(np.arange(1, tree.n + 1), tree.root - 1)
    return np.bincount(tree.parent[children], minlength=tree.n + 1)


def depths(tree: RecursiveTree) -> np.ndarray:
    """Edge distance to the root per label, index 0 unused; -1 marks vertices
    that do not reach the root (only possible for invalid input).
    """
    n = tree.n
    out = np.full(n + 1, -1, dtype=np.int64)
    out[0] = 0
    out[tree.root] = 0
    if tree.is_increasing():
        # parent[v] < v, so one ascending pass settles every vertex.
        par = tree.parent
        for v in range(2, n + 1):
            out[v] = out[par[v]] + 1
        return out
    # General labeling: breadth-first from the root over a child adjacency.
    order = np.argsort(tree.parent[1:], kind="stable") + 1
    starts = np.searchsorted(tree.parent[order], np.arange(n + 2))
    frontier = [tree.root]
    while frontier:
        nxt = []
        for u in frontier:
            for idx in range(starts[u], starts[u + 1]):
                c = int(order[idx])
                if out[c] < 0:
                    out[c] = out[u] + 1
                    nxt.append(c)
        frontier = nxt
    return out


def stats(tree: RecursiveTree) -> list[VertexStats]:
    """Per-vertex (degree, depth) records in label order."""
    deg = degrees(tree)
    dep = depths(tree)
    return [VertexStats(v, int(deg[v]), int(dep[v])) for v in range(1, tree.n + 1)]


def max_degree_set(tree: RecursiveTree) -> tuple[int, set[int]]:
    """Maximum degree and the set of labels attaining it."""
    deg = degrees(tree)[1:]
    top = int(deg.max())
    return top, set((np.flatnonzero(deg == top) + 1).tolist())


def ordered_degree_depth(
    tree: RecursiveTree, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """(degree, depth) pairs sorted by degree descending; ties are ordered by
    a uniformly random permutation drawn from ``rng`` (the pair moves as a
    unit, so depth marks travel with their degrees).
    """
    deg = degrees(tree)[1:]
    dep = depths(tree)[1:]
    tiebreak = rng.permutation(tree.n)
    order = np.lexsort((tiebreak, -deg))
    return [(int(deg[i]), int(dep[i])) for i in order]
