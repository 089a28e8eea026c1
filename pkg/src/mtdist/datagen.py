"""Generators: X3C hardness gadgets, saddle-swap pairs, synthetic ensembles
and random valid trees.

All generators are deterministic given their seed and build trees directly
from edge lengths.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .merge_tree import AbstractMergeTree, require_valid, tree_from_lengths

__all__ = [
    "X3CInstance",
    "EnsembleSpec",
    "x3c_trees",
    "x3c_node_counts",
    "base_gadget",
    "element_gadget",
    "has_exact_cover",
    "sample_x3c",
    "make_ensemble",
    "ensemble_budget",
    "make_saddle_swap_pair",
    "random_tree",
]


class _Builder:
    """Accumulates ``parents`` and up-edge ``lengths`` for tree_from_lengths."""

    def __init__(self):
        self.parents: list[int | None] = [None]
        self.lengths: list[float] = [0.0]

    def add(self, parent: int, length: float) -> int:
        self.parents.append(parent)
        self.lengths.append(float(length))
        return len(self.parents) - 1

    def gadget(self, parent: int, m: int, split: int | None = None, up: float = 1.0) -> int:
        r = self.add(parent, up)
        for i in range(1, m + 1):
            if i == split:
                mid = self.add(r, i)
                self.add(mid, i)
                self.add(mid, 1.0)
            else:
                self.add(r, 2 * i)
        return r

    def build(self, root_scalar=0.0) -> AbstractMergeTree:
        return tree_from_lengths(self.parents, self.lengths, root_scalar)


# X3C ---------------------------------------------------------------------------

@dataclass(frozen=True)
class X3CInstance:
    """Universe ``{1..m}`` and a collection of 3-element sets."""

    m: int
    sets: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(x) for x in s)) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        problems = self.violations()
        if problems:
            raise ValueError("invalid X3C instance: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.m <= 0 or self.m % 3:
            out.append(f"m must be a positive multiple of 3, got {self.m}")
        if not self.sets:
            out.append("at least one set is required")
        for s in self.sets:
            if len(set(s)) != 3:
                out.append(f"set {s} does not have three distinct elements")
            if any(not 1 <= x <= self.m for x in s):
                out.append(f"set {s} leaves the universe 1..{self.m}")
        for x in range(1, self.m + 1):
            c = sum(x in s for s in self.sets)
            if c > 3:
                out.append(f"element {x} lies in {c} sets (at most 3 allowed)")
        return out

    @property
    def n(self) -> int:
        return len(self.sets)

    @property
    def k(self) -> int:
        return self.m // 3

    @property
    def threshold(self) -> float:
        return 3 * self.n - 2 * self.k


def base_gadget(m: int) -> AbstractMergeTree:
    """``G`` as a standalone tree: a unit root edge above ``m`` leaves of length 2i."""
    b = _Builder()
    b.gadget(0, m)
    return b.build()


def element_gadget(m: int, i: int) -> AbstractMergeTree:
    """``G_i``: edge ``e_i`` split in halves with a unit side leaf."""
    if not 1 <= i <= m:
        raise ValueError("element index out of range")
    b = _Builder()
    b.gadget(0, m, split=i)
    return b.build()


def x3c_trees(instance: X3CInstance) -> tuple[AbstractMergeTree, AbstractMergeTree]:
    """Build the two reduction trees for an X3C instance.

    With a single set the node below the root edge of ``T1`` would have one
    child; it is dissolved and the two unit edges merge into one edge of
    length 2, which keeps ``|T1|``.
    """
    m, n, k = instance.m, instance.n, instance.k
    b1 = _Builder()
    if n == 1:
        spine, up = 0, 2.0
    else:
        spine, up = b1.add(0, 1.0), 1.0
    for s in instance.sets:
        h = b1.add(spine, up)
        for i in s:
            b1.gadget(h, m, split=i)
    b2 = _Builder()
    spine2 = b2.add(0, 1.0)
    for i in range(1, m + 1):
        b2.gadget(spine2, m, split=i)
    for _ in range(n - k):
        h = b2.add(spine2, 1.0)
        for _ in range(3):
            b2.gadget(h, m)
    return require_valid(b1.build()), require_valid(b2.build())


def x3c_node_counts(m: int, n: int) -> tuple[int, int]:
    k = m // 3
    n1 = 2 + n * (1 + 3 * (m + 3)) - (1 if n == 1 else 0)
    n2 = 2 + m * (m + 3) + (n - k) * (1 + 3 * (m + 1))
    return n1, n2


def has_exact_cover(m: int, sets: Sequence[Sequence[int]]) -> bool:
    """Exhaustive exact cover search (backtracking on the smallest element)."""
    sets = [frozenset(s) for s in sets]

    def rec(uncovered: frozenset, avail: list) -> bool:
        if not uncovered:
            return True
        x = min(uncovered)
        for idx, s in enumerate(avail):
            if x in s and s <= uncovered:
                if rec(uncovered - s, avail[idx + 1:] + avail[:idx]):
                    return True
        return False

    return rec(frozenset(range(1, m + 1)), sets)


def _fits(counts, s):
    return all(counts[x] < 3 for x in s)


def sample_x3c(m: int, n: int, planted_cover: bool, seed: int = 0, max_tries: int = 10000) -> X3CInstance:
    if m <= 0 or m % 3:
        raise ValueError("m must be a positive multiple of 3")
    k = m // 3
    if n < k:
        raise ValueError(f"need n >= m/3 sets (got n={n}, m={m})")
    if not planted_cover and m > 12:
        raise ValueError("no-cover instances are verified exhaustively; m must be at most 12")
    rng = np.random.default_rng(seed)
    triples = list(itertools.combinations(range(1, m + 1), 3))
    for _ in range(max_tries):
        counts = dict.fromkeys(range(1, m + 1), 0)
        sets = []
        if planted_cover:
            perm = rng.permutation(np.arange(1, m + 1))
            for j in range(k):
                s = tuple(sorted(int(x) for x in perm[3 * j:3 * j + 3]))
                sets.append(s)
                for x in s:
                    counts[x] += 1
        ok = True
        while len(sets) < n:
            fresh = [t for t in triples if _fits(counts, t) and t not in sets]
            pool = fresh or [t for t in triples if _fits(counts, t)]
            if not pool:
                ok = False
                break
            s = pool[rng.integers(len(pool))]
            sets.append(s)
            for x in s:
                counts[x] += 1
        if not ok:
            continue
        order = rng.permutation(len(sets))
        inst = X3CInstance(m, tuple(sets[i] for i in order))
        if planted_cover or not has_exact_cover(m, inst.sets):
            return inst
    raise ValueError(f"could not sample an instance with m={m}, n={n}, planted={planted_cover}")


# saddle swap -------------------------------------------------------------------

def make_saddle_swap_pair(lengths: Sequence[float] = (1, 1, 4, 4, 2)):
    """Two trees that differ only in which branch feature C merges into.

    ``lengths = (root, swap, a, b, c)``.  In ``T1`` the inner saddle (reached
    by the swap edge) carries features A and B and C hangs from the upper
    saddle; in ``T2`` the inner saddle carries B and C and A hangs from the
    upper saddle.  The edge length multisets agree.
    """
    root, swap, a, b, c = (float(x) for x in lengths)
    if min(root, swap, a, b, c) <= 0:
        raise ValueError("all lengths must be positive")
    # nodes: 0 root, 1 upper saddle, 2 inner saddle, 3 A, 4 B, 5 C
    t1 = tree_from_lengths([None, 0, 1, 2, 2, 1], [0, root, swap, a, b, c])
    t2 = tree_from_lengths([None, 0, 1, 1, 2, 2], [0, root, swap, a, b, c])
    return t1, t2


# ensembles ---------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of a synthetic ensemble.

    ``heights`` are the main peak heights above the root.  For the
    horizontal kind, ``swap`` is the length of the edge between the two
    nested saddles.  Noise is uniform in ``[-amplitude, +amplitude]``.
    """

    kind: str = "horizontal"
    member_count: int = 20
    heights: tuple[float, ...] | None = None
    amplitude: float | None = None
    seed: int = 0
    swap: float = 0.5
    side_lengths: tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)

    def resolved(self) -> "EnsembleSpec":
        if self.kind not in ("vertical", "horizontal"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        h = self.heights or ((10.0, 9.0, 8.0, 7.0) if self.kind == "vertical" else (10.0, 8.0, 6.0))
        amp = self.amplitude if self.amplitude is not None else (1.0 if self.kind == "vertical" else 0.1)
        return EnsembleSpec(self.kind, self.member_count, tuple(float(x) for x in h), float(amp),
                            self.seed, self.swap, tuple(self.side_lengths))

    def to_dict(self) -> dict:
        return asdict(self.resolved())


_H_ROOT = 2.0


def _horizontal_lengths(spec: EnsembleSpec):
    ha, hb, hc = spec.heights
    s = spec.swap
    # upper saddle at height 2, inner saddle at 2 + s
    return ha - _H_ROOT - s, hb - _H_ROOT - s, hc - _H_ROOT - s


def _check_horizontal(spec: EnsembleSpec):
    ha, hb, hc = spec.heights
    if not ha > hb > hc:
        raise ValueError("horizontal heights must be strictly decreasing")
    amp, s = spec.amplitude, spec.swap
    legs = _horizontal_lengths(spec)
    # each peak height moves by at most three perturbed edges
    margin = min(ha - hb, hb - hc)
    if amp < 0 or not (amp < s and amp < min(legs) and 6 * amp < margin and amp < _H_ROOT):
        raise ValueError(
            f"amplitude {amp} would break validity or the height order "
            f"(need < {min(s, min(legs), margin / 6, _H_ROOT)})"
        )


def _vertical_layout(spec: EnsembleSpec):
    """Return parents, base lengths and the indices of the perturbed main leaves."""
    p1, p2, p3, p4 = spec.heights
    # 0 root(0) 1 saddle(1) 2 saddle(2) 3 saddle(3); leaves: P1 under 1, P3 under 2, P4 under 3
    scal = [0.0, 1.0, 2.0, 3.0]
    parents = [None, 0, 1, 2]
    leaves = {}
    leaves["P1"] = len(parents); parents.append(1); scal.append(p1)
    leaves["P3"] = len(parents); parents.append(2); scal.append(p3)
    leaves["P4"] = len(parents); parents.append(3); scal.append(p4)
    # branch of P2: a chain of five saddles with side peaks
    prev = 3
    for j, side in enumerate(spec.side_lengths):
        h = 3.5 + j
        node = len(parents); parents.append(prev); scal.append(h)
        leaf = len(parents); parents.append(node); scal.append(h + side)
        prev = node
    leaves["P2"] = len(parents); parents.append(prev); scal.append(p2)
    lengths = [0.0] + [scal[v] - scal[parents[v]] for v in range(1, len(parents))]
    return parents, lengths, [leaves[k] for k in ("P1", "P2", "P3", "P4")]


def make_ensemble(spec: EnsembleSpec) -> list[AbstractMergeTree]:
    spec = spec.resolved()
    rng = np.random.default_rng(spec.seed)
    amp = spec.amplitude
    members = []
    if spec.kind == "horizontal":
        _check_horizontal(spec)
        la, lb, lc = _horizontal_lengths(spec)
        for i in range(spec.member_count):
            noise = rng.uniform(-amp, amp, size=5) if amp > 0 else np.zeros(5)
            L = np.array([_H_ROOT, spec.swap, la, lb, lc]) + noise
            # nodes: 0 root, 1 upper saddle, 2 inner saddle, 3 A, 4 B, 5 C
            if i % 2 == 0:
                parents = [None, 0, 1, 2, 1, 2]  # inner saddle joins A and C
            else:
                parents = [None, 0, 1, 1, 2, 2]  # inner saddle joins B and C
            members.append(tree_from_lengths(parents, [0.0, *L]))
        return members
    if len(spec.heights) != 4:
        raise ValueError("vertical ensembles use four main peak heights")
    parents, lengths, main = _vertical_layout(spec)
    min_leg = min(lengths[v] for v in main)
    if amp < 0 or amp >= min_leg:
        raise ValueError(f"amplitude {amp} would break validity (need < {min_leg})")
    for _ in range(spec.member_count):
        L = list(lengths)
        noise = rng.uniform(-amp, amp, size=len(main)) if amp > 0 else np.zeros(len(main))
        for v, e in zip(main, noise):
            L[v] += float(e)
        members.append(tree_from_lengths(parents, L))
    return members


def ensemble_budget(spec: EnsembleSpec) -> float:
    """Worst-case relabel budget B: the summed ranges of all perturbed edges."""
    spec = spec.resolved()
    n_edges = 5 if spec.kind == "horizontal" else 4
    return 2 * spec.amplitude * n_edges


# random trees -------------------------------------------------------------------

def random_tree(rng, max_nodes: int = 8, min_nodes: int = 2, integer_lengths: bool = False,
                low: float = 0.5, high: float = 5.0) -> AbstractMergeTree:
    """Random valid tree with between ``min_nodes`` and ``max_nodes`` nodes.

    Growth steps either split a leaf into a saddle with two leaves or add a
    leaf to an existing saddle.  Three-node trees do not exist, so a target
    of 3 becomes 2.
    """
    rng = np.random.default_rng(rng)
    if max_nodes < 1:
        raise ValueError("max_nodes must be positive")
    target = int(rng.integers(min_nodes, max_nodes + 1))
    if target == 1:
        return AbstractMergeTree.empty()
    parents: list[int | None] = [None, 0]
    while len(parents) < target:
        room = target - len(parents)
        leaves = [v for v in range(1, len(parents)) if v not in parents]
        inner = [v for v in range(1, len(parents)) if v in parents]
        if room >= 2 and (not inner or rng.random() < 0.5):
            leaf = leaves[int(rng.integers(len(leaves)))]
            parents += [leaf, leaf]
        elif inner:
            parents.append(inner[int(rng.integers(len(inner)))])
        else:
            break
    if integer_lengths:
        lengths = rng.integers(1, 5, size=len(parents) - 1).astype(float)
    else:
        lengths = rng.uniform(low, high, size=len(parents) - 1)
    return tree_from_lengths(parents, [0.0, *lengths])
