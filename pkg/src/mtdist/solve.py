"""Solver backends, MPS interchange and the threshold decision.

``solve_builtin`` searches the mapping space directly; it optimises the same
objective as the integer program and only ever maps node pairs that still
carry a run pairing in the instance.  ``solve_highs`` hands the integer
program itself to the HiGHS MILP solver shipped with SciPy and serves as an
independent check of the encoding.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import edit_model
from ._search import Budget, BudgetExhausted, PairSolver
from .ip_encode import EncodeConfig, IpInstance, greedy_mapping
from .merge_tree import AbstractMergeTree, require_valid
from .result import INFEASIBLE_ERROR, OPTIMAL, UPPER_BOUND_ONLY, SolveResult

TOL = 1e-9


class SolutionParseError(ValueError):
    pass


class MpsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Limits:
    time_limit: float | None = None
    node_limit: int | None = None


def _pair_and_allowed(instance_or_pair):
    if isinstance(instance_or_pair, IpInstance):
        inst = instance_or_pair
        return inst.t1, inst.t2, inst.allowed_pairs(), inst.config.enable_leaf_symmetry
    t1, t2 = instance_or_pair
    return t1, t2, None, True


def solve_builtin(instance_or_pair, limits: Limits | None = None, *, time_limit=None, node_limit=None) -> SolveResult:
    """Exact search on an :class:`IpInstance` or a ``(T1, T2)`` tuple.

    Running out of budget is not an error: the best mapping found so far is
    returned with status ``upper_bound_only``.
    """
    if limits is not None:
        time_limit = limits.time_limit if time_limit is None else time_limit
        node_limit = limits.node_limit if node_limit is None else node_limit
    t1, t2, allowed, leaf_sym = _pair_and_allowed(instance_or_pair)
    require_valid(t1)
    require_valid(t2)
    start = time.perf_counter()
    lb = abs(t1.total_persistence - t2.total_persistence)
    solver = PairSolver(t1, t2, allowed=allowed, leaf_symmetry=leaf_sym, budget=Budget(time_limit, node_limit))
    try:
        value = solver.distance()
    except BudgetExhausted:
        stats = {"nodes": solver.budget.nodes, "wall_time": time.perf_counter() - start}
        found = solver.partial_mapping()
        g_cost, g_pairs = greedy_mapping(t1, t2)
        if found is None or found[0] > g_cost:
            found = (g_cost, g_pairs)
        return SolveResult(found[0], UPPER_BOUND_ONLY, found[1], lb, stats, message="budget exhausted")
    stats = {"nodes": solver.budget.nodes, "wall_time": time.perf_counter() - start, "memo": len(solver.memo)}
    witness = solver.mapping()
    # report the exactly summed witness cost rather than the search's running sums
    value = edit_model.mapping_cost(t1, t2, witness, check=False).total
    return SolveResult(value, OPTIMAL, witness, value, stats)


def solve_highs(instance: IpInstance, limits: Limits | None = None, *, time_limit=None, node_limit=None) -> SolveResult:
    """Solve the integer program with SciPy's HiGHS MILP interface."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import csr_matrix

    if limits is not None:
        time_limit = limits.time_limit if time_limit is None else time_limit
        node_limit = limits.node_limit if node_limit is None else node_limit
    start = time.perf_counter()
    c, A, lo, hi = instance.to_arrays()
    options = {}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    res = milp(c, integrality=np.ones(len(c)), bounds=Bounds(0, 1),
               constraints=[LinearConstraint(csr_matrix(A), lo, hi)], options=options)
    stats = {"wall_time": time.perf_counter() - start, "highs_status": int(res.status)}
    if res.x is None:
        raise RuntimeError(f"HiGHS returned no solution: {res.message}")
    x = np.round(res.x)
    witness = instance.decode(x)
    value = instance.evaluate(x)
    bound = getattr(res, "mip_dual_bound", None)
    lb = instance.constant + bound if bound is not None and np.isfinite(bound) else 0.0
    if res.status == 0:
        return SolveResult(value, OPTIMAL, witness, value, stats)
    return SolveResult(value, UPPER_BOUND_ONLY, witness, min(lb, value), stats, message=res.message)


# MPS ---------------------------------------------------------------------------

def mps_names(instance: IpInstance) -> tuple[list[str], list[str]]:
    """Eight-character column and row names used in exported files."""
    return ([f"X{i:07d}" for i in range(instance.n_vars)],
            [f"R{i:07d}" for i in range(len(instance.constraints))])


def _field(s: str, width: int) -> str:
    return s.ljust(width)


def _num(x: float) -> str:
    """Shortest exact text if it fits the 12-character field, else the most digits that do."""
    s = repr(float(x))
    p = 16
    while len(s) > 12 and p > 1:
        s = f"{float(x):.{p}g}"
        p -= 1
    return s


def export_mps(instance: IpInstance, path) -> Path:
    """Write the instance as fixed-format MPS.

    Comment lines carry the objective constant and the descriptive name of
    every column and row.
    """
    cols, rows = mps_names(instance)
    by_col = [[] for _ in cols]
    for r, con in enumerate(instance.constraints):
        for i, w in con.terms:
            by_col[i].append((rows[r], w))
    out = [
        "* mtdist edit-distance integer program",
        f"* OBJCONST {float(instance.constant)!r}",
    ]
    out += [f"* COL {n} {v.name}" for n, v in zip(cols, instance.variables)]
    out += [f"* ROW {n} {c.name}" for n, c in zip(rows, instance.constraints)]
    out.append("NAME          MTDIST")
    out.append("ROWS")
    out.append(" N  COST")
    kind = {"<=": "L", ">=": "G", "=": "E"}
    for n, con in zip(rows, instance.constraints):
        out.append(f" {kind[con.sense]}  {n}")
    out.append("COLUMNS")
    out.append("    MARKER                 'MARKER'                 'INTORG'")
    for i, name in enumerate(cols):
        entries = []
        if i in instance.objective:
            entries.append(("COST", instance.objective[i]))
        entries += by_col[i]
        for row, w in entries:
            out.append(f"    {_field(name, 8)}  {_field(row, 8)}  {_num(w):>12}")
    out.append("    MARKER                 'MARKER'                 'INTEND'")
    out.append("RHS")
    for n, con in zip(rows, instance.constraints):
        if con.rhs != 0:
            out.append(f"    {_field('RHS', 8)}  {_field(n, 8)}  {_num(con.rhs):>12}")
    out.append("BOUNDS")
    for name in cols:
        out.append(f" UP {_field('BND', 8)}  {_field(name, 8)}  {_num(1):>12}")
    out.append("ENDATA")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


@dataclass
class MpsModel:
    """Parsed MPS content: enough to rebuild and solve the program."""

    name: str
    objective_row: str
    constant: float
    columns: list
    rows: dict  # name -> sense letter
    coeffs: dict  # (row, col) -> value
    rhs: dict
    upper: dict
    integer: set
    comments: dict  # mps name -> descriptive name

    def to_arrays(self):
        cols = {c: i for i, c in enumerate(self.columns)}
        cons = [r for r in self.rows if self.rows[r] != "N"]
        ridx = {r: i for i, r in enumerate(cons)}
        c = np.zeros(len(cols))
        A = np.zeros((len(cons), len(cols)))
        for (r, col), v in self.coeffs.items():
            if r == self.objective_row:
                c[cols[col]] = v
            elif r in ridx:
                A[ridx[r], cols[col]] = v
        lo = np.full(len(cons), -np.inf)
        hi = np.full(len(cons), np.inf)
        for r, i in ridx.items():
            b = self.rhs.get(r, 0.0)
            if self.rows[r] in "LE":
                hi[i] = b
            if self.rows[r] in "GE":
                lo[i] = b
        return c, A, lo, hi


def read_mps(path) -> MpsModel:
    """Parse a fixed-format MPS file as written by :func:`export_mps`."""
    section = None
    name = ""
    obj = None
    constant = 0.0
    columns, rows, coeffs, rhs, upper, integer, comments = [], {}, {}, {}, {}, set(), {}
    in_int = False
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if not raw.strip():
            continue
        if raw.startswith("*"):
            parts = raw[1:].split()
            if len(parts) == 2 and parts[0] == "OBJCONST":
                constant = float(parts[1])
            elif len(parts) == 3 and parts[0] in ("COL", "ROW"):
                comments[parts[1]] = parts[2]
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0]
            if section == "NAME":
                name = head[1] if len(head) > 1 else ""
            elif section == "ENDATA":
                break
            elif section not in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "RANGES"):
                raise MpsFormatError(f"line {lineno}: unknown section {section!r}")
            continue
        f = raw.split()
        try:
            if section == "ROWS":
                rows[f[1]] = f[0]
                if f[0] == "N" and obj is None:
                    obj = f[1]
            elif section == "COLUMNS":
                if len(f) >= 3 and f[1] == "'MARKER'":
                    in_int = f[2] == "'INTORG'"
                    continue
                col = f[0]
                if not columns or columns[-1] != col:
                    columns.append(col)
                if in_int:
                    integer.add(col)
                for k in range(1, len(f) - 1, 2):
                    if f[k] not in rows:
                        raise MpsFormatError(f"line {lineno}: unknown row {f[k]!r}")
                    coeffs[f[k], col] = float(f[k + 1])
            elif section == "RHS":
                for k in range(1, len(f) - 1, 2):
                    rhs[f[k]] = float(f[k + 1])
            elif section == "BOUNDS":
                if f[0] in ("UP", "BV"):
                    upper[f[2]] = float(f[3]) if f[0] == "UP" else 1.0
            else:
                raise MpsFormatError(f"line {lineno}: data outside a section")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MpsFormatError):
                raise
            raise MpsFormatError(f"line {lineno}: cannot parse {raw.strip()!r}") from exc
    if obj is None:
        raise MpsFormatError("no objective row")
    return MpsModel(name, obj, constant, columns, rows, coeffs, rhs, upper, integer, comments)


def write_solution(instance: IpInstance, assignment: dict, path) -> Path:
    """Write ``name value`` lines (MPS column names) for an assignment by descriptive name."""
    cols, _ = mps_names(instance)
    lines = ["# mtdist solution file: <column> <value>"]
    for col, var in zip(cols, instance.variables):
        lines.append(f"{col} {int(assignment[var.name])}  # {var.name}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


_SOL_LINE = re.compile(r"^\s*(\S+)\s+(\S+)\s*$")


def read_solution(instance: IpInstance, path) -> np.ndarray:
    cols, _ = mps_names(instance)
    pos = {c: i for i, c in enumerate(cols)}
    # descriptive names are accepted too
    for i, v in enumerate(instance.variables):
        pos.setdefault(v.name, i)
    x = np.full(instance.n_vars, np.nan)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        mt = _SOL_LINE.match(line)
        if not mt:
            raise SolutionParseError(f"line {lineno}: expected '<name> <value>', got {raw.strip()!r}")
        name, val = mt.groups()
        if name not in pos:
            raise SolutionParseError(f"line {lineno}: unknown variable {name!r}")
        try:
            x[pos[name]] = float(val)
        except ValueError:
            raise SolutionParseError(f"line {lineno}: value {val!r} of {name} is not a number") from None
    missing = np.flatnonzero(np.isnan(x))
    if len(missing):
        i = int(missing[0])
        raise SolutionParseError(
            f"missing value for variable {cols[i]} ({instance.variables[i].name})"
            + (f" and {len(missing) - 1} more" if len(missing) > 1 else "")
        )
    return x


def import_solution(instance: IpInstance, path) -> SolveResult:
    """Validate an external assignment and report its objective value.

    Raises :class:`SolutionParseError` for unreadable or incomplete files.
    An assignment that breaks a constraint yields status ``infeasible_error``
    naming the first violated constraint.
    """
    x = read_solution(instance, path)
    cols, rows = mps_names(instance)
    for i, v in enumerate(x):
        if min(abs(v), abs(v - 1)) > 1e-6:
            return SolveResult(float("nan"), INFEASIBLE_ERROR,
                               message=f"variable {cols[i]} ({instance.variables[i].name}) = {v} is not 0/1")
    x = np.round(x)
    for r, con in enumerate(instance.constraints):
        if not con.satisfied(x):
            return SolveResult(float("nan"), INFEASIBLE_ERROR,
                               message=f"constraint {rows[r]} ({con.name}) violated: "
                                       f"{float(con.activity(x))!r} {con.sense} {con.rhs!r}")
    value = instance.evaluate(x)
    witness = instance.decode(x)
    lb = abs(instance.t1.total_persistence - instance.t2.total_persistence)
    status = OPTIMAL if value <= lb + TOL else UPPER_BOUND_ONLY
    return SolveResult(value, status, witness, lb, {"source": str(path)}, message="feasible")


# threshold decision -----------------------------------------------------------

def decide_threshold(t1: AbstractMergeTree, t2: AbstractMergeTree, c: float,
                     limits: Limits | None = None) -> str:
    """``"yes"`` if some mapping costs at most ``c``, ``"no"`` if every mapping costs more.

    ``"unknown"`` means the budget ran out with neither outcome established.
    """
    if c < 0:
        raise ValueError("threshold must be non-negative")
    limits = limits or Limits()
    if t1.total_persistence + t2.total_persistence <= c + TOL:
        return "yes"
    if abs(t1.total_persistence - t2.total_persistence) > c + TOL:
        return "no"
    if greedy_mapping(t1, t2)[0] <= c + TOL:
        return "yes"
    res = solve_builtin((t1, t2), limits)
    if res.value <= c + TOL:
        return "yes"
    if res.lower_bound > c + TOL:
        return "no"
    return "unknown"


def witness_cost(t1, t2, witness) -> float:
    return edit_model.mapping_cost(t1, t2, witness).total


__all__ = [
    "EncodeConfig", "Limits", "MpsFormatError", "MpsModel", "SolutionParseError", "decide_threshold",
    "export_mps", "import_solution", "read_mps", "read_solution", "solve_builtin", "solve_highs",
    "witness_cost", "write_solution",
]
