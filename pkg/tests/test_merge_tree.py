import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtdist.datagen import random_tree, sample_x3c, x3c_trees, base_gadget
from mtdist.merge_tree import (
    AbstractMergeTree,
    InvalidTreeError,
    TreeFormatError,
    edge_lengths,
    enumerate_paths,
    epsilon_collapse,
    leaf_simplify,
    load_tree,
    save_tree,
    scalars_from_lengths,
    total_persistence,
    tree_from_lengths,
    trees_isomorphic,
    validate,
)


# validation ------------------------------------------------------------------

def test_empty_tree_is_valid():
    t = AbstractMergeTree.empty()
    assert validate(t) == []
    assert t.is_empty and t.total_persistence == 0


def test_root_with_two_children_rejected():
    t = AbstractMergeTree((0.0, 1.0, 2.0), (None, 0, 0))
    assert any("root degree" in p for p in validate(t))


def test_inner_degree_one_rejected():
    t = AbstractMergeTree((0.0, 1.0, 2.0), (None, 0, 1))
    assert validate(t) == ["inner node degree 1 at node 1"]


def test_non_increasing_edge_rejected():
    t = AbstractMergeTree((0.0, 1.0, 3.0, 1.0), (None, 0, 1, 1))
    problems = validate(t)
    assert len(problems) == 1 and "edge (3,1)" in problems[0]


def test_structure_errors():
    with pytest.raises(TreeFormatError, match="not a tree"):
        AbstractMergeTree((0.0, 1.0, 2.0), (2, 0, 1))
    with pytest.raises(TreeFormatError, match="out of range"):
        AbstractMergeTree((0.0, 1.0), (None, 5))
    with pytest.raises(TreeFormatError):
        AbstractMergeTree((), ())


def test_invalid_tree_error_lists_violations():
    t = AbstractMergeTree((0.0, 1.0, 2.0), (None, 0, 0))
    with pytest.raises(InvalidTreeError) as info:
        total_persistence(t)
    assert info.value.violations == validate(t)


# persistence and lengths ----------------------------------------------------------

def test_total_persistence_examples(two_leaf):
    assert total_persistence(AbstractMergeTree.empty()) == 0
    assert total_persistence(two_leaf) == 7
    assert total_persistence(base_gadget(3)) == 1 + 2 + 4 + 6


def test_prefix_sums():
    lengths = {(1, 0): 1.0, (2, 1): 4.0, (3, 1): 2.0}
    t = scalars_from_lengths([None, 0, 1, 1], lengths)
    assert t.scalars == (0.0, 1.0, 5.0, 3.0)
    view = edge_lengths(t)
    assert view.length == lengths and view.total == 7


def test_zero_length_rejected():
    with pytest.raises(ValueError, match="positive"):
        tree_from_lengths([None, 0, 1, 1], [0, 1, 0, 2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_length_round_trip(seed, shift):
    t = random_tree(seed, max_nodes=9)
    back = scalars_from_lengths(edge_lengths(t), root_scalar=shift)
    diffs = np.subtract.outer(t.scalars, t.scalars)
    back_diffs = np.subtract.outer(back.scalars, back.scalars)
    assert np.allclose(diffs, back_diffs, atol=1e-9)
    assert back.scalars[back.root] == shift


# structure helpers ------------------------------------------------------------------

def test_structure_queries(two_leaf):
    t = two_leaf
    assert t.root == 0
    assert sorted(t.children[1]) == [2, 3]
    assert list(t.leaves) == [2, 3]
    assert t.is_ancestor(0, 3) and not t.is_ancestor(3, 3)
    assert list(t.ancestors(3)) == [1, 0]
    assert list(t.subtree(1)) == [1, 2, 3]
    assert list(t.subtree_persistence) == [7, 6, 0, 0]


# paths ----------------------------------------------------------------------------

def test_paths_of_empty_tree():
    assert enumerate_paths(AbstractMergeTree.empty()) == []


def test_paths_chain_and_lengths(two_leaf):
    paths = enumerate_paths(two_leaf)
    assert len(paths) == 5
    by_ends = {(p.start, p.end): p.length for p in paths}
    assert by_ends[(0, 2)] == 5 and by_ends[(1, 3)] == 2


def test_path_count_matches_ancestor_pairs():
    t1, _ = x3c_trees(sample_x3c(3, 1, True))
    assert len(enumerate_paths(t1)) == int(t1.ancestor_matrix.sum())


def test_path_vertices_are_downward(two_leaf):
    for p in enumerate_paths(two_leaf):
        for a, b in zip(p.vertices, p.vertices[1:]):
            assert two_leaf.parents[b] == a


# epsilon collapse -----------------------------------------------------------------

def _nested(gap):
    # root 0 -> s1 (0.3) -> {leaf 1.0, s2 (0.3 + gap) -> {0.9, 0.8}}
    return AbstractMergeTree((0.0, 0.3, 1.0, 0.3 + gap, 0.9, 0.8), (None, 0, 1, 1, 3, 3))


def test_epsilon_zero_is_identity():
    t = _nested(0.05)
    assert epsilon_collapse(t, 0) is t


def test_epsilon_contracts_short_inner_edge():
    out = epsilon_collapse(_nested(0.05), 0.1)
    assert out.n_nodes == 5 and validate(out) == []
    assert len(out.children[1]) == 3


def test_epsilon_keeps_edges_at_least_threshold():
    t = _nested(0.03)
    assert trees_isomorphic(epsilon_collapse(t, 0.02), t)


def test_epsilon_range_checked():
    with pytest.raises(ValueError):
        epsilon_collapse(_nested(0.05), 1.0)


# leaf simplification ---------------------------------------------------------------

def test_leaf_simplify_identity(two_leaf):
    assert trees_isomorphic(leaf_simplify(two_leaf, 0), two_leaf)


def test_leaf_simplify_prunes_saddle():
    t = tree_from_lengths([None, 0, 1, 1], [0, 1, 5, 0.1])
    out = leaf_simplify(t, 1)
    assert out.n_nodes == 2
    assert out.up_length[1] == pytest.approx(6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_leaf_simplify_large_tau_stays_valid(seed):
    t = random_tree(seed, max_nodes=10)
    out = leaf_simplify(t, 100)
    assert validate(out) == []
    assert out.n_nodes == 2
    # the highest leaf survives at its original height
    assert max(out.scalars) == pytest.approx(max(t.scalars))


# serialization -----------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_json_round_trip(tmp_path_factory, seed):
    t = random_tree(seed, max_nodes=9)
    path = tmp_path_factory.mktemp("trees") / "t.json"
    save_tree(t, path)
    back = load_tree(path)
    assert back.scalars == t.scalars and back.parents == t.parents


def _write(tmp_path, nodes):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"nodes": nodes}))
    return path


def test_json_parent_cycle(tmp_path):
    path = _write(tmp_path, [{"id": 0, "scalar": 0, "parent": None},
                             {"id": 1, "scalar": 1, "parent": 2},
                             {"id": 2, "scalar": 2, "parent": 1}])
    with pytest.raises(TreeFormatError, match="not a tree"):
        load_tree(path)


def test_json_child_below_parent(tmp_path):
    path = _write(tmp_path, [{"id": 0, "scalar": 0, "parent": None},
                             {"id": 1, "scalar": 2, "parent": 0},
                             {"id": 2, "scalar": 3, "parent": 1},
                             {"id": 3, "scalar": 1, "parent": 1}])
    with pytest.raises(InvalidTreeError, match="not above parent"):
        load_tree(path)


def test_json_syntax_error_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"nodes": [\n  {"id": 0,,}]}')
    with pytest.raises(TreeFormatError, match="line 2 column"):
        load_tree(path)


def test_json_missing_field(tmp_path):
    path = _write(tmp_path, [{"id": 0, "scalar": 0}])
    with pytest.raises(TreeFormatError, match="missing field 'parent'"):
        load_tree(path)
