"""Deformation edits, edit mappings and their cost, and an exhaustive oracle.

Edits act on edge lengths.  An edge is named by its child node, so
``Relabel(v, x)`` sets the length of the edge above ``v`` to ``x``.

Mapping cost
------------
Given a mapping, every unmapped node is *pruned* (exactly one child subtree
still contains a mapped node) or *charged*.  The *run* of a mapped non-root
node is its up-edge extended through consecutive pruned ancestors.  Runs of
mapped pairs are relabelled into each other, and every edge that lies in no
run is deleted (in T1) or inserted (in T2) at full length::

    cost = sum |run1(a) - run2(b)| + (|T1| - sum run1) + (|T2| - sum run2)
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .merge_tree import AbstractMergeTree, InvalidTreeError, require_valid, trees_isomorphic, validate
from .result import OPTIMAL, SolveResult

__all__ = [
    "Relabel",
    "Contract",
    "Insert",
    "EditError",
    "InvalidMappingError",
    "SizeCapError",
    "EditMapping",
    "MappingCostBreakdown",
    "apply_edit",
    "sequence_cost",
    "check_mapping",
    "classify_unmapped",
    "mapping_cost",
    "brute_force_distance",
    "enumerate_mappings",
    "realize_mapping",
]

TOL = 1e-9


class EditError(ValueError):
    """An edit does not apply to the given tree."""


class InvalidMappingError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid edit mapping: " + "; ".join(self.violations))


class SizeCapError(ValueError):
    """Input exceeds the exhaustive oracle's node cap."""


# edit operations -----------------------------------------------------------

@dataclass(frozen=True)
class Relabel:
    node: int
    new_length: float


@dataclass(frozen=True)
class Contract:
    node: int


@dataclass(frozen=True)
class Insert:
    """Inverse of a contraction.

    Exactly one form applies:

    * ``split`` given: cut the edge above ``split`` at distance ``split_at``
      below ``parent`` (which must be the parent of ``split``) and hang a new
      leaf of ``length`` from the cut point;
    * ``adopt`` given: a new inner node of up-length ``length`` under
      ``parent`` takes over the listed children (at least two, not all);
    * otherwise: a new leaf of ``length`` under ``parent``.
    """

    parent: int
    length: float
    split: int | None = None
    split_at: float | None = None
    adopt: tuple[int, ...] = ()


class _Work:
    """Editable tree with stable node ids, used to apply edit sequences."""

    def __init__(self, tree: AbstractMergeTree):
        self.root = tree.root
        self.parent = {v: p for v, p in enumerate(tree.parents)}
        self.length = {v: float(tree.up_length[v]) for v in range(tree.n_nodes)}
        self.kids = {v: set(tree.children[v]) for v in range(tree.n_nodes)}
        self.next_id = tree.n_nodes

    def _check_len(self, x):
        if not x > 0:
            raise EditError(f"edge length must be positive, got {x!r}")

    def _node(self, v):
        if v not in self.parent:
            raise EditError(f"node {v} does not exist")
        return v

    def relabel(self, v, new_length):
        self._node(v)
        if v == self.root:
            raise EditError("the root has no up-edge")
        self._check_len(new_length)
        cost = abs(self.length[v] - new_length)
        self.length[v] = float(new_length)
        return cost

    def contract(self, v):
        """Remove the edge above ``v``; returns ``(cost, inverse record)``."""
        self._node(v)
        p = self.parent.get(v)
        if p is None:
            raise EditError("the root has no up-edge to contract")
        cost = self.length[v]
        if self.kids[v]:
            if p == self.root:
                raise EditError("contracting an inner edge below the root would give the root two children")
            moved = tuple(sorted(self.kids[v]))
            for c in moved:
                self.parent[c] = p
                self.kids[p].add(c)
            self.kids[p].discard(v)
            self._drop(v)
            return cost, ("inner", v, p, moved, cost)
        self.kids[p].discard(v)
        self._drop(v)
        if p != self.root and len(self.kids[p]) == 1:
            (s,) = self.kids[p]
            g = self.parent[p]
            lp = self.length[p]
            self.length[s] += lp
            self.parent[s] = g
            self.kids[g].discard(p)
            self.kids[g].add(s)
            self._drop(p)
            return cost, ("prune", v, p, s, cost, lp)
        return cost, ("leaf", v, p, cost)

    def _drop(self, v):
        del self.parent[v], self.length[v], self.kids[v]

    def insert(self, parent, length, adopt=(), new_id=None):
        self._node(parent)
        self._check_len(length)
        nid = self.next_id if new_id is None else new_id
        if nid in self.parent:
            raise EditError(f"node id {nid} already in use")
        if adopt:
            adopt = tuple(adopt)
            if len(adopt) < 2 or any(self.parent.get(c) != parent for c in adopt):
                raise EditError("adopt needs at least two children of the parent")
            if len(adopt) == len(self.kids[parent]):
                raise EditError("adopting every child would leave the parent with one child")
            self._add(nid, parent, length)
            for c in adopt:
                self.kids[parent].discard(c)
                self.parent[c] = nid
                self.kids[nid].add(c)
            self.next_id = max(self.next_id, nid + 1)
            return length, (nid,)
        if parent == self.root and self.kids[parent]:
            raise EditError("the root already has a child")
        if parent != self.root and not self.kids[parent]:
            raise EditError("a new leaf under a leaf would create a degree-one node")
        self._add(nid, parent, length)
        self.next_id = max(self.next_id, nid + 1)
        return length, (nid,)

    def insert_split(self, split, split_at, length, saddle_id, leaf_id):
        p = self.parent[split]
        if not 0 < split_at < self.length[split]:
            raise EditError("split point must lie strictly inside the edge")
        self._check_len(length)
        self._add(saddle_id, p, split_at)
        self.kids[p].discard(split)
        self.parent[split] = saddle_id
        self.kids[saddle_id].add(split)
        self.length[split] -= split_at
        self._add(leaf_id, saddle_id, length)
        self.next_id = max(self.next_id, saddle_id + 1, leaf_id + 1)
        return length

    def _add(self, v, p, length):
        self.parent[v] = p
        self.length[v] = float(length)
        self.kids[v] = set()
        self.kids[p].add(v)

    def nodes(self):
        return sorted(self.parent)

    def to_tree(self, root_scalar=0.0):
        order = self.nodes()
        new_id = {v: i for i, v in enumerate(order)}
        scal = {}
        stack = [self.root]
        scal[self.root] = root_scalar
        while stack:
            v = stack.pop()
            for c in self.kids[v]:
                scal[c] = scal[v] + self.length[c]
                stack.append(c)
        return AbstractMergeTree(
            tuple(scal[v] for v in order),
            tuple(None if self.parent[v] is None else new_id[self.parent[v]] for v in order),
        )


def apply_edit(tree: AbstractMergeTree, op) -> AbstractMergeTree:
    """Apply one edit and return the resulting tree.

    Removed nodes shift higher ids down by one; inserted nodes receive the
    next free ids (saddle first, then leaf, for split inserts).
    """
    return _apply(tree, op)[0]


def _apply(tree, op):
    require_valid(tree)
    w = _Work(tree)
    if isinstance(op, Relabel):
        cost = w.relabel(op.node, op.new_length)
    elif isinstance(op, Contract):
        cost, _ = w.contract(op.node)
    elif isinstance(op, Insert):
        if op.split is not None:
            if w.parent.get(op.split) != op.parent:
                raise EditError(f"{op.parent} is not the parent of {op.split}")
            cost = w.insert_split(op.split, op.split_at if op.split_at is not None else -1.0,
                                  op.length, w.next_id, w.next_id + 1)
        else:
            cost, _ = w.insert(op.parent, op.length, adopt=op.adopt)
    else:
        raise TypeError(f"not an edit operation: {op!r}")
    out = w.to_tree(tree.scalars[tree.root])
    problems = validate(out)
    if problems:  # pragma: no cover - guarded by the checks above
        raise EditError("edit produced an invalid tree: " + "; ".join(problems))
    return out, cost


def sequence_cost(tree: AbstractMergeTree, ops: Sequence) -> float:
    """Total cost of applying ``ops`` in order, starting from ``tree``."""
    total = 0.0
    for i, op in enumerate(ops):
        try:
            tree, cost = _apply(tree, op)
        except EditError as exc:
            raise EditError(f"operation {i} ({op!r}) is not applicable: {exc}") from None
        total += cost
    return total


def edit_path(tree: AbstractMergeTree, ops: Sequence) -> tuple[AbstractMergeTree, float]:
    """Like :func:`sequence_cost` but also returns the final tree."""
    total = 0.0
    for op in ops:
        tree, cost = _apply(tree, op)
        total += cost
    return tree, total


# mappings -------------------------------------------------------------------

@dataclass(frozen=True)
class EditMapping:
    pairs: frozenset

    def __init__(self, pairs: Iterable[tuple[int, int]]):
        object.__setattr__(self, "pairs", frozenset((int(a), int(b)) for a, b in pairs))

    def sorted_pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.pairs))

    def transpose(self) -> "EditMapping":
        return EditMapping((b, a) for a, b in self.pairs)

    def __iter__(self):
        return iter(self.sorted_pairs())

    def __len__(self):
        return len(self.pairs)


def _pairs_of(mapping) -> list[tuple[int, int]]:
    if isinstance(mapping, EditMapping):
        return list(mapping.sorted_pairs())
    return sorted((int(a), int(b)) for a, b in mapping)


def check_mapping(t1: AbstractMergeTree, t2: AbstractMergeTree, mapping) -> list[str]:
    """List violations of the edit mapping conditions (empty when valid)."""
    pairs = _pairs_of(mapping)
    out = []
    for a, b in pairs:
        if not (0 <= a < t1.n_nodes and 0 <= b < t2.n_nodes):
            out.append(f"pair ({a},{b}) references a missing node")
    if out:
        return out
    firsts = [a for a, _ in pairs]
    seconds = [b for _, b in pairs]
    if len(set(firsts)) != len(firsts) or len(set(seconds)) != len(seconds):
        out.append("not one-to-one")
    if (t1.root, t2.root) not in pairs:
        out.append("roots are not paired")
    A1, A2 = t1.ancestor_matrix, t2.ancestor_matrix
    for (a, b), (x, y) in itertools.combinations(pairs, 2):
        if A1[a, x] != A2[b, y] or A1[x, a] != A2[y, b]:
            out.append(f"pairs ({a},{b}) and ({x},{y}) break ancestor preservation")
    return out


def _require_mapping(t1, t2, mapping):
    require_valid(t1)
    require_valid(t2)
    problems = check_mapping(t1, t2, mapping)
    if problems:
        raise InvalidMappingError(problems)
    return _pairs_of(mapping)


def _survivors(tree: AbstractMergeTree, mapped: set) -> tuple[list[int], list[bool]]:
    """Per node: number of children whose subtree holds a mapped node, and liveness."""
    live = [False] * tree.n_nodes
    count = [0] * tree.n_nodes
    for v in reversed(tree.preorder):
        for c in tree.children[v]:
            if live[c]:
                count[v] += 1
        live[v] = v in mapped or count[v] > 0
    return count, live


def classify_unmapped(tree: AbstractMergeTree, mapping_side: Iterable[int]) -> list[str]:
    """Status of every node: ``mapped``, ``pruned`` (one survivor) or ``charged``."""
    mapped = set(mapping_side)
    count, _ = _survivors(tree, mapped)
    return [
        "mapped" if v in mapped else ("pruned" if count[v] == 1 else "charged")
        for v in range(tree.n_nodes)
    ]


def _runs(tree: AbstractMergeTree, status: list[str]) -> tuple[dict[int, float], set[int]]:
    """Run length of every mapped non-root node, and the nodes whose up-edge lies in a run."""
    up = tree.up_length
    runs, covered = {}, set()
    for v in range(tree.n_nodes):
        if status[v] != "mapped" or v == tree.root:
            continue
        parts = [float(up[v])]
        covered.add(v)
        w = tree.parents[v]
        while status[w] == "pruned":
            parts.append(float(up[w]))
            covered.add(w)
            w = tree.parents[w]
        runs[v] = math.fsum(parts)
    return runs, covered


@dataclass
class MappingCostBreakdown:
    """Cost of a mapping split into relabel, deletion (T1) and insertion (T2) parts.

    Every part, and ``total``, is an exactly rounded sum of per-edge terms, so
    the total does not depend on summation order.  In particular the cost of
    a mapping equals, bit for bit, the cost of its transpose.
    """

    relabel_total: float
    deleted_total_T1: float
    inserted_total_T2: float
    runs1: dict = field(default_factory=dict)
    runs2: dict = field(default_factory=dict)
    status1: list = field(default_factory=list)
    status2: list = field(default_factory=list)
    terms: tuple = ()

    @property
    def total(self) -> float:
        return math.fsum(self.terms)

    def __float__(self):
        return self.total


def mapping_cost(t1: AbstractMergeTree, t2: AbstractMergeTree, mapping, check: bool = True) -> MappingCostBreakdown:
    pairs = _require_mapping(t1, t2, mapping) if check else _pairs_of(mapping)
    s1 = classify_unmapped(t1, (a for a, _ in pairs))
    s2 = classify_unmapped(t2, (b for _, b in pairs))
    (r1, c1), (r2, c2) = _runs(t1, s1), _runs(t2, s2)
    relabel = [abs(r1[a] - r2[b]) for a, b in pairs if a != t1.root]
    deleted = [float(t1.up_length[v]) for v in range(t1.n_nodes) if v != t1.root and v not in c1]
    inserted = [float(t2.up_length[v]) for v in range(t2.n_nodes) if v != t2.root and v not in c2]
    return MappingCostBreakdown(math.fsum(relabel), math.fsum(deleted), math.fsum(inserted),
                                r1, r2, s1, s2, tuple(relabel + deleted + inserted))


# exhaustive oracle ------------------------------------------------------------

def enumerate_mappings(t1: AbstractMergeTree, t2: AbstractMergeTree):
    """Yield every valid edit mapping (roots paired) as a sorted pair list."""
    order = [v for v in t1.preorder if v != t1.root]
    targets = [v for v in range(t2.n_nodes) if v != t2.root]
    A1, A2 = t1.ancestor_matrix, t2.ancestor_matrix
    chosen: list[tuple[int, int]] = []
    used = set()

    def rec(i):
        if i == len(order):
            yield sorted([(t1.root, t2.root)] + chosen)
            return
        u = order[i]
        yield from rec(i + 1)
        for v in targets:
            if v in used:
                continue
            ok = True
            for x, y in chosen:
                if A1[x, u] != A2[y, v] or A1[u, x] != A2[v, y]:
                    ok = False
                    break
            if ok:
                chosen.append((u, v))
                used.add(v)
                yield from rec(i + 1)
                chosen.pop()
                used.discard(v)

    yield from rec(0)


def brute_force_distance(t1: AbstractMergeTree, t2: AbstractMergeTree, max_nodes: int = 10) -> SolveResult:
    """Exact distance by enumerating every edit mapping.

    Ties between optimal mappings are broken towards the lexicographically
    smallest sorted pair list.
    """
    require_valid(t1)
    require_valid(t2)
    if t1.n_nodes > max_nodes or t2.n_nodes > max_nodes:
        raise SizeCapError(
            f"oracle is capped at {max_nodes} nodes per tree (got {t1.n_nodes} and {t2.n_nodes})"
        )
    start = time.perf_counter()
    best, best_pairs, count = np.inf, None, 0
    for pairs in enumerate_mappings(t1, t2):
        count += 1
        c = mapping_cost(t1, t2, pairs, check=False).total
        if c < best - TOL:
            best, best_pairs = c, pairs
        elif c <= best + TOL and pairs < best_pairs:
            best, best_pairs = min(best, c), pairs
    value = mapping_cost(t1, t2, best_pairs, check=False).total
    return SolveResult(
        value=value,
        status=OPTIMAL,
        witness=tuple(best_pairs),
        lower_bound=value,
        stats={"mappings": count, "wall_time": time.perf_counter() - start},
    )


# realizing a mapping as an explicit edit sequence ------------------------------

@dataclass
class Realization:
    cost: float
    mapping_cost: float
    final_tree: AbstractMergeTree
    n_ops: int
    matches_target: bool


def _reduce_to_core(tree: AbstractMergeTree, mapped: set, w: _Work, log: list, checker):
    """Delete everything a mapping does not keep.

    Returns ``(role, placeholders, virtual)``: ``role`` maps each mapped node
    to its current id, ``placeholders`` maps mapped nodes that kept a dead
    leaf to that leaf, and ``virtual`` is the root's child when it must stay
    as an unmapped saddle.
    """
    _, live = _survivors(tree, mapped)
    role = {v: v for v in mapped}
    cost = 0.0

    def do_contract(v):
        nonlocal cost
        c, rec = w.contract(v)
        cost += c
        log.append(rec)
        checker()
        return rec

    def live_kids(v):
        return [c for c in w.kids[v] if live[c]]

    # Phase 1: unmapped saddles where two surviving branches meet are
    # contracted, cascading upwards, except directly below the root.
    changed = True
    while changed:
        changed = False
        for v in sorted(w.parent, key=lambda x: tree.pre_index[x]):
            if v == w.root or v in mapped or not live[v] or w.parent[v] == w.root:
                continue
            if len(live_kids(v)) >= 2:
                do_contract(v)
                changed = True
                break
    virtual = None
    (top,) = w.kids[w.root] if w.kids[w.root] else (None,)
    if top is not None and top not in mapped and len(live_kids(top)) >= 2:
        virtual = top

    # Phase 2: delete dead subtrees, top-down over surviving nodes.
    def shrink_to_leaf(d):
        """Delete inside the dead subtree at ``d`` until one leaf edge is left."""
        cur = d
        while w.kids[cur]:
            leaf = min(x for x in _walk(w, cur) if not w.kids[x])
            rec = do_contract(leaf)
            if rec[0] == "prune" and rec[2] == cur:
                cur = rec[3]
        return cur

    placeholders = {}
    queue = [w.root]
    while queue:
        x = queue.pop(0)
        dead = sorted(c for c in w.kids[x] if not live[c])
        lk = sorted(live_kids(x))
        if x in mapped and x != w.root and not lk:
            # x ends as a leaf: the last dead leaf is merged into x's edge
            leaves = [shrink_to_leaf(d) for d in dead]
            for leaf in leaves[:-1]:
                rec = do_contract(leaf)
                if rec[0] == "prune":
                    role[x] = rec[3]
            continue
        if x in mapped and x != w.root and len(lk) == 1 and dead:
            placeholders[x] = shrink_to_leaf(dead[0])
            dead = dead[1:]
        for d in dead:
            do_contract(shrink_to_leaf(d))
        queue.extend(lk)
    return role, placeholders, virtual, cost


def _walk(w, v):
    out, stack = [], [v]
    while stack:
        x = stack.pop()
        out.append(x)
        stack.extend(w.kids[x])
    return out


def realize_mapping(t1: AbstractMergeTree, t2: AbstractMergeTree, mapping, check_each_step: bool = True) -> Realization:
    """Build and apply an explicit edit sequence transforming ``t1`` into ``t2``.

    The sequence deletes what the mapping leaves unmatched in ``t1``,
    relabels matched runs, and replays the deletions of ``t2`` backwards as
    insertions.  Its cost never exceeds the mapping cost.
    """
    pairs = _require_mapping(t1, t2, mapping)
    m12 = dict(pairs)
    w1, w2 = _Work(t1), _Work(t2)

    def checker_for(w):
        if not check_each_step:
            return lambda: None

        def chk():
            problems = validate(w.to_tree())
            if problems:
                raise EditError("intermediate tree invalid: " + "; ".join(problems))
        return chk

    log1, log2 = [], []
    role1, ph1, virt1, cost1 = _reduce_to_core(t1, set(m12), w1, log1, checker_for(w1))
    role2, ph2, virt2, _ = _reduce_to_core(t2, set(m12.values()), w2, log2, checker_for(w2))
    n_ops = len(log1)
    total = cost1
    # translation from current ids in w2 to current ids in w1
    trans = {w2.root: w1.root}
    for a, b in pairs:
        trans[role2[b]] = role1[a]
    if (virt1 is None) != (virt2 is None):
        raise EditError("contracted trees differ at the root")  # pragma: no cover
    if virt1 is not None:
        trans[virt2] = virt1
    chk1 = checker_for(w1)
    # relabel runs
    for v2, v1 in trans.items():
        if v2 == w2.root:
            continue
        if abs(w1.length[v1] - w2.length[v2]) > 0:
            total += w1.relabel(v1, w2.length[v2])
            n_ops += 1
            chk1()
    if set(ph1) != set(_inv(m12).get(b) for b in ph2):
        raise EditError("placeholder structure differs")  # pragma: no cover
    # swap placeholders: insert the target one, then contract ours
    for a, leaf1 in sorted(ph1.items()):
        leaf2 = ph2[m12[a]]
        c, (nid,) = w1.insert(role1[a], w2.length[leaf2])
        total += c
        trans[leaf2] = nid
        chk1()
        c, _ = w1.contract(leaf1)
        total += c
        chk1()
        n_ops += 2
    # replay t2's deletions backwards
    for rec in reversed(log2):
        kind = rec[0]
        if kind == "leaf":
            _, v, p, length = rec
            c, (nid,) = w1.insert(trans[p], length)
            trans[v] = nid
        elif kind == "prune":
            _, v, p, s, length, lp = rec
            sid, lid = w1.next_id, w1.next_id + 1
            c = w1.insert_split(trans[s], lp, length, sid, lid)
            trans[p], trans[v] = sid, lid
        else:
            _, v, p, moved, length = rec
            c, (nid,) = w1.insert(trans[p], length, adopt=tuple(trans[m] for m in moved))
            trans[v] = nid
        total += c
        n_ops += 1
        chk1()
    final = w1.to_tree(t2.scalars[t2.root])
    target_cost = mapping_cost(t1, t2, pairs, check=False).total
    return Realization(total, target_cost, final, n_ops, trees_isomorphic(final, t2, 1e-7))


def _inv(d):
    return {v: k for k, v in d.items()}
