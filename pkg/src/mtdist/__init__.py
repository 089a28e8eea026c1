"""Exact edit distance between merge trees under deformation edits.

The most common entry points are re-exported here::

    from mtdist import AbstractMergeTree, reencode_loop
    result = reencode_loop(t1, t2)
    result.value, result.status
"""
from .edit_model import brute_force_distance, mapping_cost
from .ip_encode import EncodeConfig, encode, reencode_loop
from .merge_tree import AbstractMergeTree, load_tree, save_tree, tree_from_lengths, validate
from .result import SolveResult
from .solve import decide_threshold, export_mps, import_solution, solve_builtin

__all__ = [
    "AbstractMergeTree",
    "EncodeConfig",
    "SolveResult",
    "brute_force_distance",
    "decide_threshold",
    "encode",
    "export_mps",
    "import_solution",
    "load_tree",
    "mapping_cost",
    "reencode_loop",
    "save_tree",
    "solve_builtin",
    "tree_from_lengths",
    "validate",
]

__version__ = "0.1.0"
