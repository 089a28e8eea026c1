"""Abstract merge trees: construction, validation, label views and simplification.

A tree is stored as two parallel tuples, ``scalars`` and ``parents``, indexed
by dense integer node ids ``0..n-1``.  Trees are immutable; every operation
returns a new tree.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "AbstractMergeTree",
    "TreePath",
    "EdgeLengthView",
    "TreeFormatError",
    "InvalidTreeError",
    "validate",
    "total_persistence",
    "edge_lengths",
    "scalars_from_lengths",
    "enumerate_paths",
    "epsilon_collapse",
    "leaf_simplify",
    "load_tree",
    "save_tree",
    "tree_from_json",
    "tree_to_json",
]


class TreeFormatError(ValueError):
    """Raised when node/parent data does not describe a rooted tree."""


class InvalidTreeError(ValueError):
    """Raised when a rooted tree violates the abstract merge tree conditions."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid merge tree: " + "; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class AbstractMergeTree:
    """Rooted, unordered, scalar-labelled tree.

    Only the forest structure is checked on construction (ids in range, no
    cycles).  Use :func:`validate` for the merge tree conditions.
    """

    scalars: tuple[float, ...]
    parents: tuple[int | None, ...]

    def __post_init__(self):
        scalars = tuple(float(s) for s in self.scalars)
        parents = tuple(None if p is None else int(p) for p in self.parents)
        object.__setattr__(self, "scalars", scalars)
        object.__setattr__(self, "parents", parents)
        n = len(scalars)
        if n == 0:
            raise TreeFormatError("a tree needs at least one node")
        if len(parents) != n:
            raise TreeFormatError("scalars and parents differ in length")
        for v, p in enumerate(parents):
            if p is not None and not 0 <= p < n:
                raise TreeFormatError(f"node {v}: parent {p} out of range")
            if p == v:
                raise TreeFormatError(f"node {v} is its own parent: not a tree")
            if not math.isfinite(scalars[v]):
                raise TreeFormatError(f"node {v}: non-finite scalar")
        # cycle detection by walking up with a visited colouring
        state = [0] * n
        for v in range(n):
            path = []
            u = v
            while u is not None and state[u] == 0:
                state[u] = 1
                path.append(u)
                u = parents[u]
            if u is not None and state[u] == 1:
                raise TreeFormatError("parent cycle: not a tree")
            for w in path:
                state[w] = 2
        if sum(p is None for p in parents) == 0:
            raise TreeFormatError("no root: not a tree")

    # construction helpers -------------------------------------------------

    @classmethod
    def from_parent_map(cls, scalars: Mapping[int, float], parents: Mapping[int, int | None]):
        n = len(scalars)
        if set(scalars) != set(range(n)) or set(parents) != set(range(n)):
            raise TreeFormatError("node ids must be 0..n-1 without gaps")
        return cls(tuple(scalars[i] for i in range(n)), tuple(parents[i] for i in range(n)))

    @classmethod
    def empty(cls, scalar: float = 0.0) -> "AbstractMergeTree":
        """The empty tree: one node, no edges."""
        return cls((scalar,), (None,))

    # structure -----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.scalars)

    def __len__(self):
        return len(self.scalars)

    @cached_property
    def root(self) -> int:
        return self.parents.index(None)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in self.scalars]
        for v, p in enumerate(self.parents):
            if p is not None:
                ch[p].append(v)
        return tuple(tuple(c) for c in ch)

    @property
    def is_empty(self) -> bool:
        return self.n_nodes == 1

    def is_leaf(self, v: int) -> bool:
        return not self.children[v] and v != self.root

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.n_nodes) if self.is_leaf(v))

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Edges as ``(child, parent)`` pairs, ordered by child id."""
        return tuple((v, p) for v, p in enumerate(self.parents) if p is not None)

    @cached_property
    def up_length(self) -> np.ndarray:
        """Length of the edge above each node (0 for the root)."""
        out = np.zeros(self.n_nodes)
        for v, p in self.edges:
            out[v] = self.scalars[v] - self.scalars[p]
        return out

    @cached_property
    def preorder(self) -> tuple[int, ...]:
        """Depth-first preorder, children visited by ascending id."""
        order = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(sorted(self.children[v], reverse=True))
        return tuple(order)

    @cached_property
    def _intervals(self) -> tuple[np.ndarray, np.ndarray]:
        pos = np.empty(self.n_nodes, dtype=int)
        for i, v in enumerate(self.preorder):
            pos[v] = i
        end = pos + 1
        for v in reversed(self.preorder):
            for c in self.children[v]:
                end[v] = max(end[v], end[c])
        return pos, end

    @property
    def pre_index(self) -> np.ndarray:
        return self._intervals[0]

    @property
    def subtree_end(self) -> np.ndarray:
        """Exclusive end of each node's subtree in :attr:`preorder`."""
        return self._intervals[1]

    def is_ancestor(self, u: int, v: int) -> bool:
        """True if ``u`` is a strict ancestor of ``v``."""
        pos, end = self._intervals
        return pos[u] < pos[v] < end[u]

    @cached_property
    def ancestor_matrix(self) -> np.ndarray:
        """Boolean matrix ``A[u, v]``: u is a strict ancestor of v."""
        pos, end = self._intervals
        return (pos[:, None] < pos[None, :]) & (pos[None, :] < end[:, None])

    def ancestors(self, v: int) -> list[int]:
        """Strict ancestors of ``v``, nearest first."""
        out = []
        p = self.parents[v]
        while p is not None:
            out.append(p)
            p = self.parents[p]
        return out

    def subtree(self, v: int) -> tuple[int, ...]:
        """Nodes of the subtree rooted at ``v`` in preorder (``v`` first)."""
        pos, end = self._intervals
        return self.preorder[pos[v]:end[v]]

    @cached_property
    def subtree_persistence(self) -> np.ndarray:
        """Sum of edge lengths strictly below each node."""
        up = self.up_length
        out = np.zeros(self.n_nodes)
        for v in reversed(self.preorder):
            for c in self.children[v]:
                out[v] += out[c] + up[c]
        return out

    @cached_property
    def depth(self) -> np.ndarray:
        """Scalar offset of every node from the root."""
        r = self.scalars[self.root]
        return np.asarray(self.scalars) - r

    @property
    def total_persistence(self) -> float:
        return float(self.up_length.sum())

    # value semantics -------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, AbstractMergeTree):
            return NotImplemented
        return self.scalars == other.scalars and self.parents == other.parents

    def __hash__(self):
        return hash((self.scalars, self.parents))

    def __repr__(self):
        return f"AbstractMergeTree(n_nodes={self.n_nodes}, root={self.root})"

    def scaled(self, alpha: float) -> "AbstractMergeTree":
        """Scale all edge lengths by ``alpha`` keeping the root scalar."""
        r = self.scalars[self.root]
        return AbstractMergeTree(tuple(r + alpha * (s - r) for s in self.scalars), self.parents)

    def relabel_nodes(self, order: Sequence[int]) -> "AbstractMergeTree":
        """Return the tree with node ``order[i]`` renamed to ``i``."""
        new_id = {old: i for i, old in enumerate(order)}
        return AbstractMergeTree(
            tuple(self.scalars[o] for o in order),
            tuple(None if self.parents[o] is None else new_id[self.parents[o]] for o in order),
        )


@dataclass(frozen=True)
class TreePath:
    """Downward path ``vertices[0] -> ... -> vertices[-1]``."""

    vertices: tuple[int, ...]
    length: float

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]


@dataclass(frozen=True)
class EdgeLengthView:
    shape: tuple[int | None, ...]
    length: Mapping[tuple[int, int], float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.length.values()))


# validation ----------------------------------------------------------------

def validate(tree: AbstractMergeTree) -> list[str]:
    """Return a list of violated merge tree conditions (empty when valid)."""
    problems = []
    roots = [v for v, p in enumerate(tree.parents) if p is None]
    if len(roots) != 1:
        problems.append(f"expected exactly one root, found {len(roots)}")
        return problems
    if tree.is_empty:
        return problems
    r = roots[0]
    if len(tree.children[r]) != 1:
        problems.append(f"root degree != 1 (root {r} has {len(tree.children[r])} children)")
    for v in range(tree.n_nodes):
        if v != r and len(tree.children[v]) == 1:
            problems.append(f"inner node degree 1 at node {v}")
    for c, p in tree.edges:
        if not tree.scalars[c] > tree.scalars[p]:
            problems.append(
                f"edge ({c},{p}): child scalar {tree.scalars[c]!r} not above parent {tree.scalars[p]!r}"
            )
    return problems


def require_valid(tree: AbstractMergeTree) -> AbstractMergeTree:
    problems = validate(tree)
    if problems:
        raise InvalidTreeError(problems)
    return tree


def total_persistence(tree: AbstractMergeTree) -> float:
    require_valid(tree)
    return tree.total_persistence


def edge_lengths(tree: AbstractMergeTree) -> EdgeLengthView:
    require_valid(tree)
    lengths = {(c, p): tree.scalars[c] - tree.scalars[p] for c, p in tree.edges}
    return EdgeLengthView(tree.parents, lengths)


def scalars_from_lengths(
    shape: Sequence[int | None] | EdgeLengthView,
    lengths: Mapping[tuple[int, int], float] | None = None,
    root_scalar: float = 0.0,
) -> AbstractMergeTree:
    """Place the root at ``root_scalar`` and accumulate lengths downwards."""
    if isinstance(shape, EdgeLengthView):
        lengths = shape.length if lengths is None else lengths
        shape = shape.shape
    parents = tuple(shape)
    if lengths is None:
        raise TypeError("edge lengths are required")
    for e, length in lengths.items():
        if not length > 0:
            raise ValueError(f"edge {e}: length must be positive, got {length!r}")
    skeleton = AbstractMergeTree(tuple(0.0 for _ in parents), parents)
    scalars = [0.0] * len(parents)
    for v in skeleton.preorder:
        p = parents[v]
        if p is None:
            scalars[v] = float(root_scalar)
        else:
            try:
                scalars[v] = scalars[p] + lengths[(v, p)]
            except KeyError:
                raise ValueError(f"missing length for edge ({v},{p})") from None
    return AbstractMergeTree(tuple(scalars), parents)


def tree_from_lengths(parents: Sequence[int | None], lengths: Sequence[float], root_scalar: float = 0.0):
    """Shorthand: ``lengths[v]`` is the length of the edge above ``v``."""
    return scalars_from_lengths(
        parents, {(v, p): lengths[v] for v, p in enumerate(parents) if p is not None}, root_scalar
    )


# paths ---------------------------------------------------------------------

def enumerate_paths(tree: AbstractMergeTree) -> list[TreePath]:
    """All downward paths with at least one edge, ordered by (start, end) preorder."""
    require_valid(tree)
    out = []
    for s in tree.preorder:
        for e in tree.subtree(s)[1:]:
            verts = [e]
            while verts[-1] != s:
                verts.append(tree.parents[verts[-1]])
            out.append(TreePath(tuple(reversed(verts)), tree.scalars[e] - tree.scalars[s]))
    return out


# simplification ------------------------------------------------------------

def _contract_inner(parents: list, alive: list, up: list, v: int):
    """Merge inner node ``v`` into its parent keeping all other edge lengths."""
    p = parents[v]
    for c in range(len(parents)):
        if alive[c] and parents[c] == v:
            parents[c] = p
    alive[v] = False


def _rebuild(parents: list, alive: list, up: list, root_scalar: float) -> AbstractMergeTree:
    keep = [v for v in range(len(parents)) if alive[v]]
    new_id = {v: i for i, v in enumerate(keep)}
    new_parents = [None if parents[v] is None else new_id[parents[v]] for v in keep]
    lengths = {(new_id[v], new_id[parents[v]]): up[v] for v in keep if parents[v] is not None}
    return scalars_from_lengths(new_parents, lengths, root_scalar)


def epsilon_collapse(tree: AbstractMergeTree, epsilon_relative: float) -> AbstractMergeTree:
    """Contract inner edges shorter than ``epsilon_relative`` times the scalar range.

    Edges directly below the root are never contracted.  Contraction keeps the
    parent's scalar and preserves the lengths of all remaining edges.
    """
    require_valid(tree)
    if not 0 <= epsilon_relative < 1:
        raise ValueError("epsilon_relative must lie in [0, 1)")
    if epsilon_relative == 0 or tree.is_empty:
        return tree
    threshold = epsilon_relative * (max(tree.scalars) - min(tree.scalars))
    parents = list(tree.parents)
    up = [float(x) for x in tree.up_length]
    alive = [True] * tree.n_nodes
    root = tree.root
    changed = True
    while changed:
        changed = False
        for v in range(tree.n_nodes):
            if not alive[v] or v == root or parents[v] == root:
                continue
            has_child = any(alive[c] and parents[c] == v for c in range(tree.n_nodes))
            if has_child and up[v] < threshold:
                _contract_inner(parents, alive, up, v)
                changed = True
                break
    return _rebuild(parents, alive, up, tree.scalars[root])


def leaf_simplify(tree: AbstractMergeTree, tau: float) -> AbstractMergeTree:
    """Remove leaf edges shorter than ``tau``, shortest first.

    A saddle left with a single child is pruned and its two edges merged.  The
    last remaining branch below the root is never removed.
    """
    require_valid(tree)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    n = tree.n_nodes
    parents = list(tree.parents)
    up = [float(x) for x in tree.up_length]
    alive = [True] * n
    root = tree.root

    def kids(v):
        return [c for c in range(n) if alive[c] and parents[c] == v]

    while True:
        leaves = [v for v in range(n) if alive[v] and v != root and not kids(v)]
        cand = [v for v in leaves if up[v] < tau and parents[v] != root]
        if not cand:
            break
        v = min(cand, key=lambda x: (up[x], x))
        p = parents[v]
        alive[v] = False
        rest = kids(p)
        if len(rest) == 1 and p != root:
            c = rest[0]
            up[c] += up[p]
            parents[c] = parents[p]
            alive[p] = False
    return _rebuild(parents, alive, up, tree.scalars[root])


# serialization ---------------------------------------------------------------

def tree_to_json(tree: AbstractMergeTree) -> dict:
    return {
        "nodes": [
            {"id": v, "scalar": tree.scalars[v], "parent": tree.parents[v]}
            for v in range(tree.n_nodes)
        ]
    }


def tree_from_json(data, check: bool = True) -> AbstractMergeTree:
    if not isinstance(data, dict) or not isinstance(data.get("nodes"), list):
        raise TreeFormatError('expected an object with a "nodes" list')
    scalars, parents = {}, {}
    for i, rec in enumerate(data["nodes"]):
        if not isinstance(rec, dict):
            raise TreeFormatError(f"nodes[{i}]: expected an object")
        for key in ("id", "scalar", "parent"):
            if key not in rec:
                raise TreeFormatError(f"nodes[{i}]: missing field {key!r}")
        nid, scalar, parent = rec["id"], rec["scalar"], rec["parent"]
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise TreeFormatError(f"nodes[{i}].id: expected int, got {nid!r}")
        if not isinstance(scalar, (int, float)) or isinstance(scalar, bool):
            raise TreeFormatError(f"nodes[{i}].scalar: expected number, got {scalar!r}")
        if parent is not None and (not isinstance(parent, int) or isinstance(parent, bool)):
            raise TreeFormatError(f"nodes[{i}].parent: expected int or null, got {parent!r}")
        if nid in scalars:
            raise TreeFormatError(f"nodes[{i}]: duplicate id {nid}")
        scalars[nid] = float(scalar)
        parents[nid] = parent
    roots = [v for v, p in parents.items() if p is None]
    if len(roots) != 1:
        raise TreeFormatError(f"expected exactly one null parent, found {len(roots)}: not a tree")
    tree = AbstractMergeTree.from_parent_map(scalars, parents)
    if check:
        require_valid(tree)
    return tree


def save_tree(tree: AbstractMergeTree, path) -> None:
    # json uses repr() for floats, which round-trips exactly
    Path(path).write_text(json.dumps(tree_to_json(tree), indent=1) + "\n", encoding="utf-8")


def load_tree(path, check: bool = True) -> AbstractMergeTree:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return tree_from_json(data, check=check)


def trees_isomorphic(t1: AbstractMergeTree, t2: AbstractMergeTree, tol: float = 1e-9) -> bool:
    """Labelled isomorphism on edge lengths (rounded to ``tol``)."""

    def canon(t, v):
        kids = sorted(canon(t, c) for c in t.children[v])
        return (round(float(t.up_length[v]) / tol) if tol else float(t.up_length[v]), tuple(kids))

    return canon(t1, t1.root) == canon(t2, t2.root)


def iter_subtree_edges(tree: AbstractMergeTree, v: int) -> Iterable[tuple[int, int]]:
    for c in tree.subtree(v)[1:]:
        yield c, tree.parents[c]
