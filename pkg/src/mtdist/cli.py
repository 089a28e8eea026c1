"""Command-line front end.

Exit codes: 0 success (optimal), 1 unreadable or invalid input, 2 solver
error, 3 only an upper bound was obtained (or some matrix cells were), 4 a
size cap was exceeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import datagen
from .edit_model import SizeCapError, brute_force_distance, classify_unmapped
from .ip_encode import EncodeConfig, encode, greedy_mapping, reencode_loop
from .merge_tree import (InvalidTreeError, TreeFormatError, epsilon_collapse, load_tree, require_valid,
                         save_tree)
from .result import OPTIMAL
from .solve import MpsFormatError, SolutionParseError, export_mps, import_solution, solve_builtin, solve_highs

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_BOUND, EXIT_CAP = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


# helpers ---------------------------------------------------------------------

def _load(path, epsilon=None):
    try:
        tree = load_tree(path)
        require_valid(tree)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except (TreeFormatError, InvalidTreeError) as exc:
        msg = str(exc)
        raise InputError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from None
    if epsilon:
        tree = epsilon_collapse(tree, epsilon)
    return tree


def _threads(args) -> int:
    if args.threads:
        return max(1, args.threads)
    env = os.environ.get("MTDIST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"MTDIST_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _config(args) -> EncodeConfig:
    kw = {}
    if getattr(args, "pair_budget", None):
        kw["total_budget"] = args.pair_budget
        kw["initial_time_limit"] = min(10.0, args.pair_budget)
    if getattr(args, "node_budget", None):
        kw["deterministic_budget_mode"] = True
        kw["total_node_budget"] = args.node_budget
        kw["initial_node_budget"] = min(20000, args.node_budget)
    if getattr(args, "no_pruning", False):
        kw["enable_pruning"] = False
    return EncodeConfig(**kw)


def _backend(name):
    return {"builtin": solve_builtin, "highs": solve_highs}[name]


def _fmt(x: float) -> str:
    return repr(float(x))


# compute ----------------------------------------------------------------------

def cmd_compute(args) -> int:
    t1 = _load(args.tree_a, args.epsilon)
    t2 = _load(args.tree_b, args.epsilon)
    config = _config(args)
    if args.backend == "mps":
        if not args.solution:
            raise InputError("--backend mps needs --solution FILE (write the program with export-mps first)")
        inst = _deterministic_instance(t1, t2, config)
        res = import_solution(inst, args.solution)
        if res.status not in (OPTIMAL, "upper_bound_only"):
            print(f"error {res.status}: {res.message}", file=sys.stderr)
            return EXIT_SOLVER
    else:
        res = reencode_loop(t1, t2, config, _backend(args.backend))
    print(f"{_fmt(res.value)} {res.status}")
    if args.output:
        pairs = [tuple(p) for p in res.witness]
        payload = {"value": res.value, "status": res.status, "lower_bound": res.lower_bound,
                   "witness": [list(p) for p in pairs],
                   "node_status_T1": classify_unmapped(t1, [a for a, _ in pairs]),
                   "node_status_T2": classify_unmapped(t2, [b for _, b in pairs]),
                   "log": res.log}
        Path(args.output).write_text(json.dumps(payload, indent=1, default=float) + "\n")
        print(f"witness: {args.output}")
    return EXIT_OK if res.status == OPTIMAL else EXIT_BOUND


def _deterministic_instance(t1, t2, config: EncodeConfig):
    """Instance that export-mps and compute --backend mps both rebuild identically."""
    cfg = EncodeConfig(enable_leaf_symmetry=config.enable_leaf_symmetry,
                       enable_root_symmetry=config.enable_root_symmetry,
                       enable_pruning=config.enable_pruning,
                       deterministic_budget_mode=True)
    ub = greedy_mapping(t1, t2)[0] if cfg.enable_pruning else None
    return encode(t1, t2, cfg, ub)


def cmd_export_mps(args) -> int:
    t1 = _load(args.tree_a, args.epsilon)
    t2 = _load(args.tree_b, args.epsilon)
    inst = _deterministic_instance(t1, t2, _config(args))
    path = export_mps(inst, args.output)
    if args.dump:
        Path(args.dump).write_text(inst.dump())
    print(f"{path}: {inst.n_vars} variables, {len(inst.constraints)} constraints")
    return EXIT_OK


# oracle -----------------------------------------------------------------------

def cmd_oracle(args) -> int:
    t1 = _load(args.tree_a, args.epsilon)
    t2 = _load(args.tree_b, args.epsilon)
    try:
        res = brute_force_distance(t1, t2, max_nodes=args.max_nodes)
    except SizeCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    print(f"{_fmt(res.value)} {res.status}")
    return EXIT_OK


# gen --------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"kind": args.kind, "seed": args.seed}
    if args.kind == "x3c":
        inst = datagen.sample_x3c(args.m, args.n, args.planted, args.seed)
        t1, t2 = datagen.x3c_trees(inst)
        trees = {"T1": t1, "T2": t2}
        manifest.update(m=inst.m, sets=[list(s) for s in inst.sets], threshold=inst.threshold,
                        planted=args.planted)
    elif args.kind == "saddle-swap":
        t1, t2 = datagen.make_saddle_swap_pair(args.lengths)
        trees = {"T1": t1, "T2": t2}
        manifest["lengths"] = list(args.lengths)
    elif args.kind in ("horizontal", "vertical"):
        spec = datagen.EnsembleSpec(kind=args.kind, member_count=args.members, amplitude=args.amplitude,
                                    seed=args.seed)
        members = datagen.make_ensemble(spec)
        width = len(str(len(members) - 1))
        trees = {f"member_{i:0{width}d}": t for i, t in enumerate(members)}
        manifest["spec"] = spec.to_dict()
        manifest["budget"] = datagen.ensemble_budget(spec)
    else:  # random
        import numpy as np

        rng = np.random.default_rng(args.seed)
        trees = {f"random_{i:03d}": datagen.random_tree(rng, max_nodes=args.max_nodes, min_nodes=args.max_nodes)
                 for i in range(args.members)}
    files = []
    for name, tree in trees.items():
        save_tree(tree, out / f"{name}.json")
        files.append(f"{name}.json")
    manifest["members"] = files
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(f"wrote {len(files)} trees to {out}")
    return EXIT_OK


# matrix -----------------------------------------------------------------------

def _members(source: Path):
    if source.is_dir():
        man = source / "manifest.json"
        if man.exists():
            return _members(man)
        files = sorted(p for p in source.glob("*.json"))
        return [(p.stem, p) for p in files]
    try:
        data = json.loads(source.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{source}: {exc}") from None
    if not isinstance(data, dict) or "members" not in data:
        raise InputError(f"{source}: manifest needs a 'members' list")
    return [(Path(f).stem, source.parent / f) for f in data["members"]]


def _pair_task(job):
    i, j, t1, t2, config, backend = job
    start = time.perf_counter()
    try:
        res = reencode_loop(t1, t2, config, _backend(backend))
        return i, j, res.value, res.status, time.perf_counter() - start, ""
    except Exception as exc:  # recorded as a status cell
        return i, j, float("nan"), "error", time.perf_counter() - start, repr(exc)


def compute_matrix(trees, config: EncodeConfig, backend="builtin", threads=1):
    """Symmetric value and status matrices; each unordered pair is solved once."""
    n = len(trees)
    values = [[0.0] * n for _ in range(n)]
    status = [[OPTIMAL] * n for _ in range(n)]
    jobs = [(i, j, trees[i], trees[j], config, backend) for i in range(n) for j in range(i + 1, n)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_pair_task, jobs))
    else:
        results = [_pair_task(job) for job in jobs]
    errors = []
    for i, j, v, st, _, msg in results:
        values[i][j] = values[j][i] = v
        status[i][j] = status[j][i] = st
        if msg:
            errors.append((i, j, msg))
    return values, status, errors


def _write_csv(path: Path, names, rows):
    lines = ["name," + ",".join(names)]
    for name, row in zip(names, rows):
        lines.append(name + "," + ",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _ramp():
    """256-step colour ramp interpolated through viridis anchor colours."""
    anchors = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]
    out = []
    for k in range(256):
        x = k / 255 * (len(anchors) - 1)
        i = min(int(x), len(anchors) - 2)
        f = x - i
        a, b = anchors[i], anchors[i + 1]
        out.append("#%02x%02x%02x" % tuple(round(a[c] + (b[c] - a[c]) * f) for c in range(3)))
    return out


RAMP = _ramp()


def write_svg(path: Path, names, values, cell: int = 18):
    finite = [v for row in values for v in row if v == v]
    top = max(finite) if finite else 0.0
    label = max(len(n) for n in names) * 7 + 10
    size = label + cell * len(names)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'font-family="monospace" font-size="11">']
    for i, name in enumerate(names):
        y = label + i * cell + cell * 0.7
        parts.append(f'<text x="{label - 4}" y="{y:.1f}" text-anchor="end">{name}</text>')
        x = label + i * cell + cell * 0.7
        parts.append(f'<text x="{x:.1f}" y="{label - 4}" transform="rotate(-90 {x:.1f} {label - 4})">{name}</text>')
    for i, row in enumerate(values):
        for j, v in enumerate(row):
            if v != v:
                color = "#cccccc"
            else:
                k = 0 if top <= 0 else min(255, int(round(v / top * 255)))
                color = RAMP[k]
            parts.append(f'<rect x="{label + j * cell}" y="{label + i * cell}" width="{cell}" height="{cell}" '
                         f'fill="{color}"><title>{names[i]} / {names[j]}: {v!r}</title></rect>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def cmd_matrix(args) -> int:
    members = _members(Path(args.source))
    if len(members) < 2:
        raise InputError(f"{args.source}: need at least two trees, found {len(members)}")
    names = [n for n, _ in members]
    trees = [_load(p, args.epsilon) for _, p in members]
    config = _config(args)
    start = time.perf_counter()
    values, status, errors = compute_matrix(trees, config, args.backend, _threads(args))
    out = Path(args.output)
    _write_csv(out, names, [[_fmt(v) for v in row] for row in values])
    status_path = out.with_name(out.stem + ".status.csv")
    _write_csv(status_path, names, status)
    meta = {"members": names, "config": {k: getattr(config, k) for k in config.__dataclass_fields__},
            "backend": args.backend, "epsilon": args.epsilon, "seed": args.seed,
            "wall_time": time.perf_counter() - start, "errors": [list(e) for e in errors]}
    out.with_name(out.stem + ".meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    if args.svg:
        write_svg(Path(args.svg), names, values)
    for i, j, msg in errors:
        print(f"pair {names[i]} / {names[j]} failed: {msg}", file=sys.stderr)
    n_bad = sum(st != OPTIMAL for row in status for st in row) // 2
    print(f"wrote {out} ({len(names)} trees, {n_bad} non-optimal pairs)")
    return EXIT_OK if n_bad == 0 else EXIT_BOUND


# parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtdist", description="Exact edit distance between merge trees.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, budgets=True):
        sp.add_argument("--epsilon", type=float, default=None,
                        help="collapse inner edges shorter than this fraction of the scalar range first")
        sp.add_argument("--seed", type=int, default=0)
        if budgets:
            sp.add_argument("--backend", choices=("builtin", "highs", "mps"), default="builtin")
            sp.add_argument("--pair-budget", type=float, default=None, metavar="SECONDS",
                            help="wall-clock budget per distance")
            sp.add_argument("--node-budget", type=int, default=None, metavar="N",
                            help="node-expansion budget per distance (deterministic mode)")
            sp.add_argument("--threads", type=int, default=None,
                            help="worker processes (default: $MTDIST_THREADS or CPU count)")
            sp.add_argument("--no-pruning", action="store_true", help="disable bound-based variable pruning")

    c = sub.add_parser("compute", help="distance between two tree files")
    c.add_argument("tree_a")
    c.add_argument("tree_b")
    common(c)
    c.add_argument("--solution", help="solution file for --backend mps")
    c.add_argument("-o", "--output", help="write value, witness and iteration log as JSON")
    c.set_defaults(func=cmd_compute)

    m = sub.add_parser("matrix", help="all pairwise distances of a directory or manifest")
    m.add_argument("source")
    common(m)
    m.add_argument("-o", "--output", required=True, help="CSV path; status and metadata files go next to it")
    m.add_argument("--svg", help="also write a heatmap")
    m.set_defaults(func=cmd_matrix)

    g = sub.add_parser("gen", help="generate trees and a manifest")
    g.add_argument("kind", choices=("x3c", "horizontal", "vertical", "saddle-swap", "random"))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--m", type=int, default=3, help="x3c: number of elements")
    g.add_argument("--n", type=int, default=1, help="x3c: number of sets")
    g.add_argument("--planted", action=argparse.BooleanOptionalAction, default=True,
                   help="x3c: plant an exact cover (--no-planted for a verified no-cover instance)")
    g.add_argument("--members", type=int, default=20, help="ensemble or random: number of trees")
    g.add_argument("--amplitude", type=float, default=None, help="ensemble noise amplitude")
    g.add_argument("--lengths", type=float, nargs=5, default=(1, 1, 4, 4, 2),
                   metavar=("ROOT", "SWAP", "A", "B", "C"), help="saddle-swap edge lengths")
    g.add_argument("--max-nodes", type=int, default=8, help="random: nodes per tree")
    g.add_argument("-o", "--output", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("oracle", help="brute-force distance (small trees only)")
    o.add_argument("tree_a")
    o.add_argument("tree_b")
    common(o, budgets=False)
    o.add_argument("--max-nodes", type=int, default=10, help="refuse larger trees (exit 4)")
    o.set_defaults(func=cmd_oracle)

    x = sub.add_parser("export-mps", help="write the integer program as fixed-format MPS")
    x.add_argument("tree_a")
    x.add_argument("tree_b")
    common(x)
    x.add_argument("-o", "--output", required=True)
    x.add_argument("--dump", help="also write a readable listing of the program")
    x.set_defaults(func=cmd_export_mps)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, SolutionParseError, MpsFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # solver failures
        print(f"solver error: {exc!r}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
