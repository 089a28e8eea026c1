"""Exact mapping search by memoized subtree-pair decomposition.

For a pair of nodes ``(A, B)`` let ``D(A, B)`` be the cheapest cost of
mapping the subtrees below ``A`` and ``B`` onto each other with ``A`` and
``B`` paired.  An optimal mapping restricted to these subtrees is determined
by its *tops*: the mapped pairs ``(a, b)`` with no mapped node strictly
between them and ``(A, B)``.  Tops form antichains on both sides, and::

    D(A, B) = |sub A| + |sub B| - max over top sets of
              sum_i [ 2 min(R1(a_i), R2(b_i)) + |sub a_i| + |sub b_i| - D(a_i, b_i) ]

where ``R`` is the run length of a top measured up to its nearest branching
ancestor (or ``A``/``B``).  The maximisation is a branch-and-bound that
walks the lighter subtree in preorder; every node there is either skipped
or mapped to a free node of the heavier subtree.

Bounding uses the identity ``cost = (|T| - |T'|) + 2 * waste(T')`` which
holds with either tree in the role of ``T'``; the waste counts persistence
that is left uncovered or matched to a shorter run.  Waste in each untouched
component is bounded on its own, letting every component pick its best
remaining partner.
"""
from __future__ import annotations

import time

from .merge_tree import AbstractMergeTree

TOL = 1e-9
INF = float("inf")


class BudgetExhausted(Exception):
    pass


class Budget:
    """Wall-clock and/or node-expansion budget shared by one solve."""

    def __init__(self, time_limit: float | None = None, node_limit: int | None = None):
        self.deadline = None if time_limit is None else time.perf_counter() + time_limit
        self.node_limit = node_limit
        self.nodes = 0

    def tick(self):
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            raise BudgetExhausted
        if self.deadline is not None and self.nodes & 63 == 0 and time.perf_counter() > self.deadline:
            raise BudgetExhausted


class _Side:
    __slots__ = ("par", "kids", "up", "sub", "pre", "pos", "end", "depth", "leaf", "root")

    def __init__(self, t: AbstractMergeTree):
        self.par = list(t.parents)
        self.kids = [tuple(c) for c in t.children]
        self.up = [float(x) for x in t.up_length]
        self.sub = [float(x) for x in t.subtree_persistence]
        self.pre = list(t.preorder)
        self.pos = [int(x) for x in t.pre_index]
        self.end = [int(x) for x in t.subtree_end]
        self.depth = [float(x) for x in t.depth]
        self.root = t.root
        self.leaf = [not k and v != t.root for v, k in enumerate(self.kids)]

    def size(self, v):
        return self.end[v] - self.pos[v]


class PairSolver:
    """Exact solver with a memo of subtree-pair distances.

    ``allowed`` optionally restricts which non-root pairs may be mapped; it
    must contain every pair of at least one optimal mapping for the result to
    stay exact.
    """

    def __init__(self, t1, t2, allowed=None, leaf_symmetry=True, budget: Budget | None = None,
                 memo=None):
        self.t1, self.t2 = t1, t2
        self.s1, self.s2 = _Side(t1), _Side(t2)
        self.allowed = allowed
        self.leaf_symmetry = leaf_symmetry
        self.budget = budget or Budget()
        self.memo = {} if memo is None else memo
        self.partial = {}

    # public ------------------------------------------------------------------

    def distance(self, a=None, b=None) -> float:
        a = self.s1.root if a is None else a
        b = self.s2.root if b is None else b
        return self.pair(a, b)[0]

    def _expand(self, key, tops):
        out = [key]
        stack = list(tops)
        while stack:
            x, y = stack.pop()
            out.append((x, y))
            stack.extend(self.memo[(x, y)][1])
        return sorted(out)

    def mapping(self, a=None, b=None) -> list[tuple[int, int]]:
        """Witness for ``D(a, b)`` as a sorted pair list (includes ``(a, b)``)."""
        a = self.s1.root if a is None else a
        b = self.s2.root if b is None else b
        return self._expand((a, b), self.pair(a, b)[1])

    def partial_mapping(self):
        """Best complete mapping known for the root pair, or None."""
        key = (self.s1.root, self.s2.root)
        if key in self.memo:
            return self.memo[key][0], self.mapping()
        if key not in self.partial:
            return None
        cost, tops = self.partial[key]
        return cost, self._expand(key, tops)

    def pair(self, A, B):
        key = (A, B)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        s1, s2 = self.s1, self.s2
        if not s1.kids[A] or not s2.kids[B]:
            res = (s1.sub[A] + s2.sub[B], ())
        else:
            res = _Inner(self, A, B, flip=s1.sub[A] > s2.sub[B]).run()
        self.memo[key] = res
        return res

    def known_lower(self, a, b):
        hit = self.memo.get((a, b))
        if hit is not None:
            return hit[0]
        return abs(self.s1.sub[a] - self.s2.sub[b])

    def allowed_pair(self, u, v) -> bool:
        if self.leaf_symmetry and self.s1.leaf[u] != self.s2.leaf[v]:
            return False
        return self.allowed is None or (u, v) in self.allowed


class _Inner:
    """Branch-and-bound over top sets for one subtree pair.

    ``X`` is the walked (lighter) side and ``Y`` the heavier one; ``flip``
    says whether ``X`` is the second tree.
    """

    def __init__(self, solver: PairSolver, A: int, B: int, flip: bool):
        self.sv = solver
        self.flip = flip
        if flip:
            sx, sy, X0, Y0 = solver.s2, solver.s1, B, A
        else:
            sx, sy, X0, Y0 = solver.s1, solver.s2, A, B
        self.sx, self.sy, self.X0, self.Y0 = sx, sy, X0, Y0
        self.key = (A, B)
        self.L = sx.pre[sx.pos[X0] + 1:sx.end[X0]]
        self.C = sy.pre[sy.pos[Y0] + 1:sy.end[Y0]]
        self.Lpos = {u: i for i, u in enumerate(self.L)}
        suf = [0.0] * (len(self.L) + 1)
        for i in range(len(self.L) - 1, -1, -1):
            suf[i] = suf[i + 1] + sx.up[self.L[i]]
        self.suf = suf
        self.total = sx.sub[X0] + sy.sub[Y0]
        self.root_lb = abs(sx.sub[X0] - sy.sub[Y0])
        self.best = self.total
        self.best_tops = ()
        self.tcx = {}
        self.tcy = {}
        self.chosen = []  # [x, y, Rx, Ry, w]
        self.topx = {}
        self.topy = {}
        self.G = 0.0
        self.PY = sy.sub[Y0]
        self.freeY = dict.fromkeys(self.C, True)
        if flip:
            self.cand = {u: [v for v in self.C if solver.allowed_pair(v, u)] for u in self.L}
        else:
            self.cand = {u: [v for v in self.C if solver.allowed_pair(u, v)] for u in self.L}
        self.partners = None
        self.partners_x = None

    def D(self, x, y):
        return self.sv.pair(y, x)[0] if self.flip else self.sv.pair(x, y)[0]

    def D_lower(self, x, y):
        return self.sv.known_lower(y, x) if self.flip else self.sv.known_lower(x, y)

    def orient(self, x, y):
        return (y, x) if self.flip else (x, y)

    def run(self):
        if self.best > self.root_lb + TOL:
            self._build_partners()
            self.dfs(0)
        return self.best, self.best_tops

    def _build_partners(self):
        """Per node, the possible partners sorted by the waste left inside."""
        sx, sy = self.sx, self.sy
        by_y = {v: [] for v in self.C}
        by_x = {}
        for u in self.L:
            lst = by_x[u] = []
            for v in self.cand[u]:
                d = self.D_lower(u, v)
                by_y[v].append((max(0.0, 0.5 * (d - sx.sub[u] + sy.sub[v])), self.Lpos[u]))
                lst.append((max(0.0, 0.5 * (d + sx.sub[u] - sy.sub[v])), v))
            lst.sort()
        for v in by_y:
            by_y[v].sort()
        self.partners = by_y
        self.partners_x = by_x

    # incremental bookkeeping -------------------------------------------------

    def px_rem(self, i):
        """Walked-side persistence still available to future tops."""
        sx = self.sx
        if i >= len(self.L):
            return 0.0
        r = self.suf[i]
        x = sx.par[self.L[i]]
        X0, tc = self.X0, self.tcx
        while x != X0:
            if not tc.get(x):
                r += sx.up[x]
            x = sx.par[x]
        return r

    def _attach(self, side, tc, x0, top_index, root):
        """Climb from ``x0``; return (stop node, index of a cut top or -1)."""
        x = side.par[x0]
        while x != root and not tc.get(x):
            x = side.par[x]
        cut = -1
        if x != root and tc.get(x) == 1:
            # the only top below x had its run passing through x
            pos, end = side.pos, side.end
            for a, idx in top_index.items():
                if pos[x] < pos[a] < end[x]:
                    cut = idx
                    break
        return x, cut

    def choose(self, u, v, w):
        sx, sy = self.sx, self.sy
        undo = []
        x1, cut1 = self._attach(sx, self.tcx, u, self.topx, self.X0)
        x2, cut2 = self._attach(sy, self.tcy, v, self.topy, self.Y0)
        for cut, k, x, side in ((cut1, 2, x1, sx), (cut2, 3, x2, sy)):
            if cut >= 0:
                rec = self.chosen[cut]
                a = rec[0] if k == 2 else rec[1]
                undo.append((cut, k, rec[k]))
                self.G -= 2 * min(rec[2], rec[3])
                rec[k] = side.depth[a] - side.depth[x]
                self.G += 2 * min(rec[2], rec[3])
        Rx = sx.depth[u] - sx.depth[x1]
        Ry = sy.depth[v] - sy.depth[x2]
        self.chosen.append([u, v, Rx, Ry, w])
        self.topx[u] = self.topy[v] = len(self.chosen) - 1
        self.G += 2 * min(Rx, Ry) + w
        x = sx.par[u]
        while x != self.X0:
            self.tcx[x] = self.tcx.get(x, 0) + 1
            x = sx.par[x]
        freeY = self.freeY
        blocked = []
        for z in sy.pre[sy.pos[v]:sy.end[v]]:
            freeY[z] = False
            blocked.append(z)
        dP = sy.sub[v] + sy.up[v]
        x = sy.par[v]
        while x != self.Y0:
            c = self.tcy.get(x, 0)
            if c == 0:
                dP += sy.up[x]
                freeY[x] = False
                blocked.append(x)
            self.tcy[x] = c + 1
            x = sy.par[x]
        self.PY -= dP
        return undo, dP, blocked

    def unchoose(self, token):
        undo, dP, blocked = token
        sx, sy = self.sx, self.sy
        u, v, Rx, Ry, w = self.chosen.pop()
        del self.topx[u], self.topy[v]
        self.G -= 2 * min(Rx, Ry) + w
        for cut, k, old in reversed(undo):
            rec = self.chosen[cut]
            self.G -= 2 * min(rec[2], rec[3])
            rec[k] = old
            self.G += 2 * min(rec[2], rec[3])
        x = sx.par[u]
        while x != self.X0:
            self.tcx[x] -= 1
            x = sx.par[x]
        x = sy.par[v]
        while x != self.Y0:
            self.tcy[x] -= 1
            x = sy.par[x]
        for z in blocked:
            self.freeY[z] = True
        self.PY += dP

    @staticmethod
    def _waste_step(side, y, best, W):
        kids = side.kids[y]
        if kids:
            s = 0.0
            pr = INF
            for c in kids:
                wc = W[c]
                s += wc
                alt = wc - side.up[c] - side.sub[c]
                if alt < pr:
                    pr = alt
            return min(best, side.up[y] + s, side.sub[y] + pr)
        return min(best, side.up[y])

    def future_waste_y(self, i):
        """Lower bound on waste inside the free components of ``Y``.

        Each free node may be paired with its best partner at or after walk
        position ``i``, left out with one surviving child branch, or left out
        with its up-edge wasted.
        """
        sy = self.sy
        freeY = self.freeY
        partners = self.partners
        W = {}
        total = 0.0
        for y in reversed(self.C):
            if not freeY[y]:
                continue
            best = INF
            for w2, p in partners[y]:
                if p >= i:
                    best = w2
                    break
            W[y] = best = self._waste_step(sy, y, best, W)
            p = sy.par[y]
            if p == self.Y0 or not freeY[p]:
                total += best
        return total

    def future_waste_x(self, i):
        """Same bound for the unwalked suffix of ``X`` against free ``Y`` nodes."""
        sx = self.sx
        L = self.L
        if i >= len(L):
            return 0.0
        freeY = self.freeY
        partners = self.partners_x
        start = sx.pos[L[i]]
        W = {}
        total = 0.0
        for k in range(len(L) - 1, i - 1, -1):
            x = L[k]
            best = INF
            for w2, y in partners[x]:
                if freeY[y]:
                    best = w2
                    break
            W[x] = best = self._waste_step(sx, x, best, W)
            if sx.pos[sx.par[x]] < start:
                total += best
        return total

    def bound(self, i):
        """Lower bound on the cost of any completion from position ``i``."""
        fut = min(self.px_rem(i) - self.future_waste_x(i), self.PY - self.future_waste_y(i))
        return self.total - self.G - 2 * fut

    # search ------------------------------------------------------------------

    def _record(self):
        cost = self.total - self.G
        if cost < self.best - TOL:
            self.best = cost
            self.best_tops = tuple(self.orient(c[0], c[1]) for c in self.chosen)
            self.sv.partial[self.key] = (self.best, self.best_tops)

    def dfs(self, i):
        self.sv.budget.tick()
        L = self.L
        if i >= len(L) or self.PY <= TOL:
            self._record()
            return
        u = L[i]
        sx, sy = self.sx, self.sy
        j = i + sx.size(u)
        opts = []
        lim = self.best - TOL
        skip_lb = self.bound(i + 1)
        if skip_lb < lim:
            opts.append((skip_lb, 1, -1))
        freeY = self.freeY
        for v in self.cand[u]:
            if not freeY[v]:
                continue
            w_ub = sx.sub[u] + sy.sub[v] - self.D_lower(u, v)
            tok = self.choose(u, v, w_ub)
            lb = self.bound(j)
            self.unchoose(tok)
            if lb < lim:
                opts.append((lb, 0, v))
        opts.sort()
        for lb, kind, v in opts:
            if lb >= self.best - TOL or self.best <= self.root_lb + TOL:
                break
            if kind == 1:
                self.dfs(i + 1)
                continue
            w = sx.sub[u] + sy.sub[v] - self.D(u, v)
            tok = self.choose(u, v, w)
            if self.bound(j) < self.best - TOL:
                self.dfs(j)
            self.unchoose(tok)
