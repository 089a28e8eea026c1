"""0/1 integer program for the edit distance, its pruning, and the reencoding loop.

Variable families (role tags in parentheses):

* ``m_u_v`` (``m``): node ``u`` of T1 is mapped to node ``v`` of T2.
* ``d1_u`` / ``d2_v`` (``d``): the node is unmapped.
* ``dh1_u`` (``dhat``): the node and its whole subtree are unmapped.  Leaves
  reuse their ``d`` variable.
* ``db1_u`` (``dbar``): the node is unmapped with exactly one child branch
  that still holds a mapped node, i.e. it gets pruned away.
* ``a1_u`` (``aux``): at least two child branches hold a mapped node.
* ``p1_s_e`` (``p``): every node strictly between ``s`` and ``e`` is pruned
  and ``s`` itself is not, so ``s`` is the first surviving ancestor of ``e``.
* ``pm_s1_e1_s2_e2`` (``pm``): the run ``s1 -> e1`` is matched to ``s2 -> e2``.

The objective is ``|T1| + |T2| - sum 2 min(l1, l2) pm``.  Every edge not
covered by a matched run counts in full, and every matched run pair pays the
difference of its lengths.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import edit_model
from ._search import Budget, BudgetExhausted, PairSolver
from .merge_tree import AbstractMergeTree, require_valid
from .result import OPTIMAL, UPPER_BOUND_ONLY, SolveResult

TOL = 1e-9
ROLES = ("m", "d", "dhat", "dbar", "p", "pm", "aux")


@dataclass(frozen=True)
class EncodeConfig:
    """Switches and limits for encoding and for the reencoding loop.

    With ``deterministic_budget_mode`` the loop budgets are node counts
    (``initial_node_budget`` growing by ``backoff_factor``) instead of
    seconds, so results do not depend on machine speed.  The recursive
    subtree solves used for pruning then also stop after
    ``recursion_node_limit`` expansions, which makes encoding itself
    reproducible.
    """

    enable_leaf_symmetry: bool = True
    enable_root_symmetry: bool = True
    enable_pruning: bool = True
    initial_time_limit: float = 10.0
    backoff_factor: float = 2.0
    total_budget: float = 600.0
    deterministic_budget_mode: bool = False
    initial_node_budget: int = 20000
    total_node_budget: int = 5_000_000
    recursion_time_limit: float = 1.0
    recursion_node_limit: int = 20000

    def __post_init__(self):
        for name in ("initial_time_limit", "total_budget", "recursion_time_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if min(self.initial_node_budget, self.total_node_budget, self.recursion_node_limit) <= 0:
            raise ValueError("node budgets must be positive")
        if not self.backoff_factor >= 1:
            raise ValueError("backoff_factor must be >= 1")


@dataclass(frozen=True)
class Var:
    name: str
    role: str
    key: tuple


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple  # ((var index, coefficient), ...)
    sense: str  # "<=", ">=" or "="
    rhs: float

    def activity(self, x) -> float:
        return sum(c * x[i] for i, c in self.terms)

    def satisfied(self, x, tol: float = 1e-6) -> bool:
        a = self.activity(x)
        if self.sense == "<=":
            return a <= self.rhs + tol
        if self.sense == ">=":
            return a >= self.rhs - tol
        return abs(a - self.rhs) <= tol


@dataclass(frozen=True)
class PathPair:
    """A candidate run pairing ``(s1 -> e1)`` in T1 with ``(s2 -> e2)`` in T2."""

    s1: int
    e1: int
    s2: int
    e2: int

    @property
    def ends(self):
        return self.e1, self.e2


@dataclass(frozen=True)
class PruningBounds:
    """Lower-bound pieces for any mapping that uses one run pairing."""

    path_cost: float = 0.0
    forced_prune_deletions: float = 0.0
    subtree_bound: float = 0.0
    complement_bound: float = 0.0

    @property
    def total(self) -> float:
        return self.path_cost + self.forced_prune_deletions + self.subtree_bound + self.complement_bound


@dataclass
class IpInstance:
    t1: AbstractMergeTree
    t2: AbstractMergeTree
    config: EncodeConfig
    variables: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)  # var index -> coefficient
    constant: float = 0.0
    upper_bound: float | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {v.name: i for i, v in enumerate(self.variables)}

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        return self._index[name]

    def names(self, role: str) -> list[str]:
        return [v.name for v in self.variables if v.role == role]

    def pm_pairs(self) -> list[PathPair]:
        return [PathPair(*v.key) for v in self.variables if v.role == "pm"]

    def allowed_pairs(self) -> set[tuple[int, int]]:
        """Node pairs that still carry at least one run pairing."""
        return {(v.key[1], v.key[3]) for v in self.variables if v.role == "pm"}

    # evaluation ---------------------------------------------------------------

    def vector(self, assignment: dict) -> np.ndarray:
        x = np.zeros(self.n_vars)
        for name, val in assignment.items():
            x[self._index[name]] = val
        return x

    def evaluate(self, x) -> float:
        return self.constant + sum(c * x[i] for i, c in self.objective.items())

    def first_violation(self, x, tol: float = 1e-6):
        for con in self.constraints:
            if not con.satisfied(x, tol):
                return con
        return None

    def check(self, assignment) -> list[str]:
        """Names of all constraints the assignment violates."""
        x = assignment if isinstance(assignment, np.ndarray) else self.vector(assignment)
        bad = [v.name for i, v in enumerate(self.variables) if min(abs(x[i]), abs(x[i] - 1)) > 1e-6]
        return [f"{n} not binary" for n in bad] + [c.name for c in self.constraints if not c.satisfied(x)]

    def decode(self, x) -> list[tuple[int, int]]:
        """Mapping pairs selected by the ``m`` variables."""
        return sorted(v.key for i, v in enumerate(self.variables) if v.role == "m" and x[i] > 0.5)

    def assignment_from_mapping(self, pairs) -> dict:
        """Values of every variable induced by a valid mapping.

        Run pairings that were dropped from the instance simply do not
        appear, so the objective may exceed the mapping cost in that case.
        """
        t1, t2 = self.t1, self.t2
        pairs = set(map(tuple, pairs))
        mapped1 = {a for a, _ in pairs}
        mapped2 = {b for _, b in pairs}
        img = dict(pairs)
        state = {}
        for side, t, mapped in ((1, t1, mapped1), (2, t2, mapped2)):
            status = edit_model.classify_unmapped(t, mapped)
            dh = {}
            for v in reversed(t.preorder):
                dh[v] = v not in mapped and all(dh[c] for c in t.children[v])
            state[side] = (status, dh, mapped)
        out = {}
        for v in self.variables:
            r, k = v.role, v.key
            if r == "m":
                val = (k[0], k[1]) in pairs
            elif r in ("d", "dhat", "dbar", "aux"):
                side, node = k
                status, dh, mapped = state[side]
                t = t1 if side == 1 else t2
                if r == "d":
                    val = node not in mapped
                elif r == "dhat":
                    val = dh[node]
                elif r == "dbar":
                    val = status[node] == "pruned"
                else:
                    val = sum(not dh[c] for c in t.children[node]) >= 2
            elif r == "p":
                side, s, e = k
                val = _p_value(t1 if side == 1 else t2, state[side][0], s, e)
            elif r == "pm":
                s1, e1, s2, e2 = k
                val = (img.get(e1) == e2 and _p_value(t1, state[1][0], s1, e1)
                       and _p_value(t2, state[2][0], s2, e2))
            else:  # pragma: no cover - roles are fixed
                raise ValueError(r)
            out[v.name] = int(bool(val))
        return out

    # export -------------------------------------------------------------------

    def to_arrays(self):
        """(c, A as dense array, lower row bounds, upper row bounds)."""
        n = self.n_vars
        c = np.zeros(n)
        for i, w in self.objective.items():
            c[i] = w
        A = np.zeros((len(self.constraints), n))
        lo = np.full(len(self.constraints), -np.inf)
        hi = np.full(len(self.constraints), np.inf)
        for r, con in enumerate(self.constraints):
            for i, w in con.terms:
                A[r, i] += w
            if con.sense in ("<=", "="):
                hi[r] = con.rhs
            if con.sense in (">=", "="):
                lo[r] = con.rhs
        return c, A, lo, hi

    def dump(self) -> str:
        """Readable listing ordered by variable role, then ids."""
        lines = [f"minimize {_fmt(self.constant)}"]
        for i in sorted(self.objective, key=lambda i: self._sort_key(self.variables[i])):
            lines.append(f"  {_signed(self.objective[i])} {self.variables[i].name}")
        lines.append("subject to")
        for con in self.constraints:
            body = " ".join(f"{_signed(c)} {self.variables[i].name}" for i, c in con.terms)
            lines.append(f"  {con.name}: {body} {con.sense} {_fmt(con.rhs)}")
        lines.append("binary")
        for v in sorted(self.variables, key=self._sort_key):
            lines.append(f"  {v.name}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def _sort_key(v: Var):
        return ROLES.index(v.role), v.key


def _fmt(x: float) -> str:
    return repr(float(x))


def _signed(c: float) -> str:
    return f"+{_fmt(c)}" if c >= 0 else _fmt(c)


def _p_value(t, status, s, e) -> bool:
    x = t.parents[e]
    while x != s:
        if status[x] != "pruned":
            return False
        x = t.parents[x]
    return status[s] != "pruned"


# bounds ---------------------------------------------------------------------

class BoundOracle:
    """Caches the pieces of :class:`PruningBounds` for one tree pair.

    Recursive distances are computed at most once per node pair, so repeated
    encodings against shrinking upper bounds see identical numbers and the
    surviving variable sets are nested.
    """

    def __init__(self, t1, t2, config: EncodeConfig):
        self.t1, self.t2, self.config = t1, t2, config
        self.sub1 = t1.subtree_persistence
        self.sub2 = t2.subtree_persistence
        self.norm1 = t1.total_persistence
        self.norm2 = t2.total_persistence
        self._forced = {}
        self._sub = {}
        self._comp = {}
        self._pair_solver = PairSolver(t1, t2)

    def forced(self, side, s, e) -> float:
        key = (side, s, e)
        if key not in self._forced:
            t = self.t1 if side == 1 else self.t2
            sub, up = t.subtree_persistence, t.up_length
            total, prev, x = 0.0, e, t.parents[e]
            while x != s:
                total += sum(up[c] + sub[c] for c in t.children[x] if c != prev)
                prev, x = x, t.parents[x]
            self._forced[key] = float(total)
        return self._forced[key]

    def _limited(self, solver: PairSolver, a, b, crude):
        if self.config.deterministic_budget_mode:
            solver.budget = Budget(node_limit=self.config.recursion_node_limit)
        else:
            solver.budget = Budget(self.config.recursion_time_limit)
        try:
            return float(max(crude, solver.distance(a, b)))
        except BudgetExhausted:
            return crude

    def subtree(self, e1, e2) -> float:
        key = (e1, e2)
        if key not in self._sub:
            crude = float(abs(self.sub1[e1] - self.sub2[e2]))
            self._sub[key] = self._limited(self._pair_solver, e1, e2, crude)
        return self._sub[key]

    def _branch(self, t, s, e) -> float:
        """Persistence of the child branch of ``s`` that contains ``e``, with its up-edge."""
        c = e
        while t.parents[c] != s:
            c = t.parents[c]
        return float(t.up_length[c] + t.subtree_persistence[c])

    def complement(self, q: PathPair) -> float:
        """Persistence difference of everything outside the two path branches.

        Run partners of nodes outside a path branch lie outside the other
        path branch as well, so the mapping restricted to these regions pays
        at least this difference.
        """
        key = (q.s1, q.e1, q.s2, q.e2)
        if key not in self._comp:
            r1 = self.norm1 - self._branch(self.t1, q.s1, q.e1)
            r2 = self.norm2 - self._branch(self.t2, q.s2, q.e2)
            self._comp[key] = float(abs(r1 - r2))
        return self._comp[key]

    def crude(self, q: PathPair) -> PruningBounds:
        l1 = self.t1.scalars[q.e1] - self.t1.scalars[q.s1]
        l2 = self.t2.scalars[q.e2] - self.t2.scalars[q.s2]
        return PruningBounds(
            path_cost=float(abs(l1 - l2)),
            forced_prune_deletions=self.forced(1, q.s1, q.e1) + self.forced(2, q.s2, q.e2),
            subtree_bound=float(abs(self.sub1[q.e1] - self.sub2[q.e2])),
            complement_bound=self.complement(q),
        )

    def bounds(self, q: PathPair, upper_bound: float | None = None) -> PruningBounds:
        """Full bounds; the recursive subtree solve is skipped once the crude ones exceed ``upper_bound``."""
        b = self.crude(q)
        if upper_bound is not None and b.total > upper_bound + TOL:
            return b
        return PruningBounds(b.path_cost, b.forced_prune_deletions, self.subtree(q.e1, q.e2), b.complement_bound)


def compute_pruning_bounds(t1, t2, pm_id, config: EncodeConfig | None = None) -> PruningBounds:
    """All four bound components for the run pairing ``pm_id = (s1, e1, s2, e2)``."""
    q = pm_id if isinstance(pm_id, PathPair) else PathPair(*pm_id)
    return BoundOracle(t1, t2, config or EncodeConfig()).bounds(q)


# encoding -------------------------------------------------------------------

class _Builder:
    def __init__(self):
        self.vars = []
        self.idx = {}
        self.cons = []

    def var(self, name, role, key):
        if name not in self.idx:
            self.idx[name] = len(self.vars)
            self.vars.append(Var(name, role, key))
        return self.idx[name]

    def con(self, name, terms, sense, rhs):
        self.cons.append(Constraint(name, tuple(terms), sense, float(rhs)))


def _paths(t: AbstractMergeTree):
    for s in t.preorder:
        for e in t.subtree(s)[1:]:
            yield s, e


def encode(t1, t2, config: EncodeConfig | None = None, upper_bound: float | None = None,
           oracle: BoundOracle | None = None, keep: set | None = None) -> IpInstance:
    """Build the integer program for ``t1`` against ``t2``.

    ``keep`` optionally restricts the run pairings to a previous instance's
    survivors so that reencoding never grows the variable set.
    """
    config = config or EncodeConfig()
    require_valid(t1)
    require_valid(t2)
    t0 = time.perf_counter()
    if oracle is None and config.enable_pruning and upper_bound is not None:
        oracle = BoundOracle(t1, t2, config)

    leaf1 = [t1.is_leaf(v) and v != t1.root for v in range(t1.n_nodes)]
    leaf2 = [t2.is_leaf(v) and v != t2.root for v in range(t2.n_nodes)]
    pm_list = []
    dropped = {"leaf_symmetry": 0, "root_symmetry": 0, "pruning": 0}
    P1, P2 = list(_paths(t1)), list(_paths(t2))
    for s1, e1 in P1:
        for s2, e2 in P2:
            q = PathPair(s1, e1, s2, e2)
            if keep is not None and q not in keep:
                continue
            if config.enable_leaf_symmetry and leaf1[e1] != leaf2[e2]:
                dropped["leaf_symmetry"] += 1
                continue
            if config.enable_root_symmetry and (s1 == t1.root) != (s2 == t2.root):
                dropped["root_symmetry"] += 1
                continue
            if oracle is not None and config.enable_pruning and upper_bound is not None:
                if oracle.bounds(q, upper_bound).total > upper_bound + TOL:
                    dropped["pruning"] += 1
                    continue
            pm_list.append(q)

    B = _Builder()
    n1, n2 = t1.n_nodes, t2.n_nodes
    m = {}
    for u in range(n1):
        for v in range(n2):
            m[u, v] = B.var(f"m_{u}_{v}", "m", (u, v))
    B.con("root_pair", [(m[t1.root, t2.root], 1.0)], "=", 1)
    for u in range(n1):
        B.con(f"row_{u}", [(m[u, v], 1.0) for v in range(n2)], "<=", 1)
    for v in range(n2):
        B.con(f"col_{v}", [(m[u, v], 1.0) for u in range(n1)], "<=", 1)
    anc1, anc2 = t1.ancestor_matrix, t2.ancestor_matrix
    keys = [(u, v) for u in range(n1) for v in range(n2)]
    for i, (u, v) in enumerate(keys):
        for x, y in keys[i + 1:]:
            if u == x or v == y:
                continue
            if anc1[u, x] != anc2[v, y] or anc1[x, u] != anc2[y, v]:
                B.con(f"anc_{u}_{v}_{x}_{y}", [(m[u, v], 1.0), (m[x, y], 1.0)], "<=", 1)

    d, dh, db = {}, {}, {}
    for side, t, n in ((1, t1, n1), (2, t2, n2)):
        for w in range(n):
            idx = d[side, w] = B.var(f"d{side}_{w}", "d", (side, w))
            row = [(m[w, o], 1.0) for o in range(n2)] if side == 1 else [(m[o, w], 1.0) for o in range(n1)]
            B.con(f"def_d{side}_{w}", [(idx, 1.0)] + row, "=", 1)
        for w in reversed(t.preorder):
            kids = t.children[w]
            if not kids:
                dh[side, w] = d[side, w]
                continue
            if w == t.root:
                continue
            h = dh[side, w] = B.var(f"dh{side}_{w}", "dhat", (side, w))
            B.con(f"dh_le_d{side}_{w}", [(h, 1.0), (d[side, w], -1.0)], "<=", 0)
            for c in kids:
                B.con(f"dh_le_child{side}_{w}_{c}", [(h, 1.0), (dh[side, c], -1.0)], "<=", 0)
            B.con(f"dh_ge{side}_{w}", [(h, 1.0), (d[side, w], -1.0)] + [(dh[side, c], -1.0) for c in kids],
                  ">=", -len(kids))
            k = len(kids)
            a = B.var(f"a{side}_{w}", "aux", (side, w))
            b = db[side, w] = B.var(f"db{side}_{w}", "dbar", (side, w))
            hk = [(dh[side, c], -1.0) for c in kids]
            # survivors s = k - sum dh_c; a = [s >= 2]
            B.con(f"aux_hi{side}_{w}", hk + [(a, -(k - 1.0))], "<=", 1 - k)
            B.con(f"aux_lo{side}_{w}", hk + [(a, -2.0)], ">=", -k)
            B.con(f"db_le_d{side}_{w}", [(b, 1.0), (d[side, w], -1.0)], "<=", 0)
            B.con(f"db_le_one{side}_{w}", [(b, 1.0), (a, 1.0)], "<=", 1)
            B.con(f"db_le_some{side}_{w}", [(b, 1.0)] + [(dh[side, c], 1.0) for c in kids], "<=", k)
            B.con(f"db_ge{side}_{w}", [(b, 1.0), (d[side, w], -1.0), (a, 1.0), (h, 1.0)], ">=", 0)

    pvar = {}

    def p_of(side, t, s, e):
        key = (side, s, e)
        if key in pvar:
            return pvar[key]
        idx = pvar[key] = B.var(f"p{side}_{s}_{e}", "p", key)
        interior = []
        x = t.parents[e]
        while x != s:
            interior.append(x)
            x = t.parents[x]
        for x in interior:
            B.con(f"p_in{side}_{s}_{e}_{x}", [(idx, 1.0), (db[side, x], -1.0)], "<=", 0)
        terms = [(idx, 1.0)] + [(db[side, x], -1.0) for x in interior]
        rhs = -len(interior) + 1
        if (side, s) in db:
            B.con(f"p_top{side}_{s}_{e}", [(idx, 1.0), (db[side, s], 1.0)], "<=", 1)
            terms.append((db[side, s], 1.0))
        B.con(f"p_ge{side}_{s}_{e}", terms, ">=", rhs)
        return idx

    objective = {}
    for q in pm_list:
        i1 = p_of(1, t1, q.s1, q.e1)
        i2 = p_of(2, t2, q.s2, q.e2)
        name = f"pm_{q.s1}_{q.e1}_{q.s2}_{q.e2}"
        idx = B.var(name, "pm", (q.s1, q.e1, q.s2, q.e2))
        B.con(f"{name}_m", [(idx, 1.0), (m[q.e1, q.e2], -1.0)], "<=", 0)
        B.con(f"{name}_p1", [(idx, 1.0), (i1, -1.0)], "<=", 0)
        B.con(f"{name}_p2", [(idx, 1.0), (i2, -1.0)], "<=", 0)
        l1 = t1.scalars[q.e1] - t1.scalars[q.s1]
        l2 = t2.scalars[q.e2] - t2.scalars[q.s2]
        objective[idx] = -2.0 * min(l1, l2)

    inst = IpInstance(t1, t2, config, B.vars, B.cons, objective,
                      t1.total_persistence + t2.total_persistence, upper_bound)
    inst.stats = {
        "n_vars": inst.n_vars,
        "n_constraints": len(inst.constraints),
        "n_pm": len(pm_list),
        "n_paths": (len(P1), len(P2)),
        "dropped": dropped,
        "encode_time": time.perf_counter() - t0,
    }
    return inst


# greedy incumbent -------------------------------------------------------------

def greedy_mapping(t1, t2) -> tuple[float, list[tuple[int, int]]]:
    """Cheap valid mapping: roots plus leaves paired by decreasing height.

    Leaves are never ancestors of one another, so any one-to-one leaf pairing
    together with the root pair is a valid mapping.  Every prefix of the
    sorted pairing is tried and the cheapest one is returned.
    """
    roots = (t1.root, t2.root)
    best_pairs = [roots] if t1.n_nodes and t2.n_nodes else []
    best = t1.total_persistence + t2.total_persistence
    l1 = sorted((v for v in t1.leaves if v != t1.root), key=lambda v: (-t1.depth[v], v))
    l2 = sorted((v for v in t2.leaves if v != t2.root), key=lambda v: (-t2.depth[v], v))
    pairs = [roots]
    for a, b in zip(l1, l2):
        pairs.append((a, b))
        cost = edit_model.mapping_cost(t1, t2, pairs, check=False).total
        if cost < best - TOL:
            best, best_pairs = cost, list(pairs)
    return best, sorted(best_pairs)


# reencoding loop ----------------------------------------------------------------

def reencode_loop(t1, t2, config: EncodeConfig | None = None, backend=None) -> SolveResult:
    """Solve with exponentially growing budgets, re-encoding after each improvement.

    ``backend(instance, time_limit=..., node_limit=...)`` returns a
    :class:`SolveResult`; the default is the built-in search.
    """
    from .solve import solve_builtin

    config = config or EncodeConfig()
    backend = backend or solve_builtin
    if _orientation_key(t2) < _orientation_key(t1):
        # solve in a fixed orientation so that swapping the inputs repeats the
        # same floating point computation and the distance is exactly symmetric
        res = _reencode(t2, t1, config, backend)
        res.witness = sorted((b, a) for a, b in res.witness)
        res.stats["swapped"] = True
        return res
    return _reencode(t1, t2, config, backend)


def _orientation_key(t: AbstractMergeTree):
    return t.n_nodes, t.scalars, tuple(-1 if p is None else p for p in t.parents)


def _reencode(t1, t2, config: EncodeConfig, backend) -> SolveResult:
    start = time.perf_counter()
    ub, witness = greedy_mapping(t1, t2)
    lb = abs(t1.total_persistence - t2.total_persistence)
    oracle = BoundOracle(t1, t2, config) if config.enable_pruning else None
    inst = encode(t1, t2, config, ub if config.enable_pruning else None, oracle)
    log = []
    spent_nodes = 0
    i = 0
    while True:
        if config.deterministic_budget_mode:
            node_limit = int(config.initial_node_budget * config.backoff_factor ** i)
            node_limit = max(1, min(node_limit, config.total_node_budget - spent_nodes))
            limits = {"node_limit": node_limit, "time_limit": None}
        else:
            remaining = config.total_budget - (time.perf_counter() - start)
            limits = {"time_limit": max(1e-3, min(config.initial_time_limit * config.backoff_factor ** i, remaining)),
                      "node_limit": None}
        entry = {"iteration": i, "upper_bound_in": ub, "n_vars": inst.n_vars, "n_pm": inst.stats["n_pm"], **limits}
        try:
            res = backend(inst, **limits)
        except Exception as exc:
            entry["error"] = repr(exc)
            log.append(entry)
            exc.partial_log = log
            raise
        spent_nodes += res.stats.get("nodes", 0)
        lb = max(lb, res.lower_bound)
        improved = False
        if res.witness:
            cost = edit_model.mapping_cost(t1, t2, res.witness, check=False).total
            if cost < ub - TOL:
                ub, witness, improved = cost, list(res.witness), True
        entry.update(status=res.status, value=res.value, upper_bound_out=ub, lower_bound=lb)
        log.append(entry)
        stats = {"iterations": i + 1, "wall_time": time.perf_counter() - start, "nodes": spent_nodes,
                 "n_vars": inst.n_vars, "n_pm": inst.stats["n_pm"]}
        if res.status == OPTIMAL:
            # ``ub`` is the exactly summed cost of ``witness``; the backend's own
            # value can differ from it in the last bits
            return SolveResult(ub, OPTIMAL, witness, ub, stats, log)
        if ub <= lb + TOL:
            return SolveResult(ub, OPTIMAL, witness, ub, stats, log)
        out_of_budget = (spent_nodes >= config.total_node_budget if config.deterministic_budget_mode
                         else time.perf_counter() - start >= config.total_budget)
        if out_of_budget:
            return SolveResult(ub, UPPER_BOUND_ONLY, witness, lb, stats, log, "budget exhausted")
        if improved and config.enable_pruning:
            inst = encode(t1, t2, config, ub, oracle, keep=set(inst.pm_pairs()))
        i += 1
        if not math.isfinite(config.backoff_factor ** i):  # pragma: no cover - absurd budgets
            return SolveResult(ub, UPPER_BOUND_ONLY, witness, lb, stats, log, "budget overflow")
