import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_pairs
from mtdist.datagen import random_tree, sample_x3c, x3c_trees
from mtdist.edit_model import brute_force_distance, enumerate_mappings, mapping_cost
from mtdist.ip_encode import (
    BoundOracle,
    EncodeConfig,
    PathPair,
    compute_pruning_bounds,
    encode,
    greedy_mapping,
    reencode_loop,
)
from mtdist.merge_tree import tree_from_lengths
from mtdist.solve import solve_highs

PLAIN = EncodeConfig(enable_leaf_symmetry=False, enable_root_symmetry=False, enable_pruning=False)


def test_single_edge_instance(single_edge):
    inst = encode(single_edge, single_edge, PLAIN)
    assert inst.names("pm") == ["pm_0_1_0_1"]
    assign = inst.assignment_from_mapping([(0, 0), (1, 1)])
    assert inst.check(assign) == []
    assert inst.evaluate(inst.vector(assign)) == 0
    res = solve_highs(inst)
    assert res.optimal and res.value == pytest.approx(0)


def test_roots_only_assignment_costs_total(two_leaf):
    inst = encode(two_leaf, two_leaf, PLAIN)
    assign = inst.assignment_from_mapping([(0, 0)])
    assert inst.check(assign) == []
    assert inst.evaluate(inst.vector(assign)) == 14


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_every_mapping_is_feasible_with_its_cost(seed):
    rng = np.random.default_rng(seed)
    t1 = random_tree(rng, max_nodes=5)
    t2 = random_tree(rng, max_nodes=5)
    inst = encode(t1, t2, PLAIN)
    for pairs in enumerate_mappings(t1, t2):
        x = inst.vector(inst.assignment_from_mapping(pairs))
        assert inst.first_violation(x) is None
        assert inst.evaluate(x) == pytest.approx(mapping_cost(t1, t2, pairs, check=False).total, abs=1e-9)


def test_invalid_mapping_violates_ancestry(two_leaf):
    inst = encode(two_leaf, two_leaf, PLAIN)
    x = inst.vector({"m_0_0": 1, "m_1_2": 1, "m_2_1": 1})
    assert any(name.startswith("anc_") for name in inst.check(x))


@pytest.mark.parametrize("t1, t2", random_pairs(21, 8, max_nodes=6))
def test_milp_optimum_matches_oracle(t1, t2):
    expected = brute_force_distance(t1, t2).value
    res = solve_highs(encode(t1, t2, PLAIN))
    assert res.optimal
    assert res.value == pytest.approx(expected, abs=1e-6)
    assert mapping_cost(t1, t2, res.witness).total == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("t1, t2", random_pairs(22, 6, max_nodes=7))
def test_milp_optimum_with_all_reductions(t1, t2):
    expected = brute_force_distance(t1, t2).value
    ub = greedy_mapping(t1, t2)[0]
    inst = encode(t1, t2, EncodeConfig(), upper_bound=ub)
    assert solve_highs(inst).value == pytest.approx(expected, abs=1e-6)


# symmetry reductions ----------------------------------------------------------------

def test_reductions_drop_variables():
    t1, t2 = random_pairs(4, 1, max_nodes=8)[0]
    full = encode(t1, t2, PLAIN)
    leaf = encode(t1, t2, EncodeConfig(enable_root_symmetry=False, enable_pruning=False))
    both = encode(t1, t2, EncodeConfig(enable_pruning=False))
    assert full.stats["n_pm"] > leaf.stats["n_pm"] > both.stats["n_pm"]
    assert leaf.stats["dropped"]["leaf_symmetry"] == full.stats["n_pm"] - leaf.stats["n_pm"]
    for q in both.pm_pairs():
        assert t1.is_leaf(q.e1) == t2.is_leaf(q.e2)
        assert (q.s1 == t1.root) == (q.s2 == t2.root)


def test_keep_restricts_variables():
    t1, t2 = random_pairs(5, 1, max_nodes=7)[0]
    inst = encode(t1, t2, PLAIN)
    keep = set(inst.pm_pairs()[:3])
    sub = encode(t1, t2, PLAIN, keep=keep)
    assert set(sub.pm_pairs()) == keep


# pruning bounds --------------------------------------------------------------------

def test_identical_single_edges_have_zero_bounds(single_edge):
    b = compute_pruning_bounds(single_edge, single_edge, (0, 1, 0, 1))
    assert (b.path_cost, b.forced_prune_deletions, b.subtree_bound, b.complement_bound) == (0, 0, 0, 0)


def test_forced_deletions_count_off_path_subtree():
    # path root -> ... -> leaf 3 passes saddle 2, whose other child subtree weighs 5
    t = tree_from_lengths([None, 0, 1, 2, 2, 1], [0, 1, 1, 2, 5, 3])
    b = compute_pruning_bounds(t, t, (1, 3, 1, 3))
    assert b.forced_prune_deletions >= 10  # 5 on each side
    assert b.path_cost == 0


def test_subtree_bound_at_least_persistence_gap():
    heavy = tree_from_lengths([None, 0, 1, 1, 1], [0, 1, 2, 3, 5])
    light = tree_from_lengths([None, 0, 1, 1], [0, 1, 1, 2])
    b = compute_pruning_bounds(heavy, light, (0, 1, 0, 1))
    assert heavy.subtree_persistence[1] == 10 and light.subtree_persistence[1] == 3
    assert b.subtree_bound >= 7


@pytest.mark.parametrize("t1, t2", random_pairs(31, 40, max_nodes=7))
def test_bounds_never_cut_an_optimal_run_pairing(t1, t2):
    res = brute_force_distance(t1, t2)
    oracle = BoundOracle(t1, t2, EncodeConfig())
    inst = encode(t1, t2, PLAIN)
    assign = inst.assignment_from_mapping(res.witness)
    used = [PathPair(*v.key) for v in inst.variables if v.role == "pm" and assign[v.name]]
    for q in used:
        assert oracle.bounds(q).total <= res.value + 1e-9, q


def test_pruning_keeps_optimum_reachable():
    for t1, t2 in random_pairs(32, 20, max_nodes=8):
        expected = brute_force_distance(t1, t2).value
        inst = encode(t1, t2, EncodeConfig(), upper_bound=expected)
        assert solve_highs(inst).value == pytest.approx(expected, abs=1e-6)


# config and loop -------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [{"initial_time_limit": 0}, {"backoff_factor": 0.5},
                                    {"total_node_budget": 0}, {"recursion_time_limit": -1}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EncodeConfig(**kwargs)


def test_identical_trees_optimal_first_iteration():
    t = tree_from_lengths([None, 0, 1, 1, 3, 3], [0, 1, 2, 1, 3, 4])
    res = reencode_loop(t, t)
    assert res.optimal and res.value == 0
    assert len(res.log) == 1 and res.log[0]["iteration"] == 0


def test_x3c_single_set_threshold():
    t1, t2 = x3c_trees(sample_x3c(3, 1, True))
    res = reencode_loop(t1, t2)
    assert res.optimal and res.value == 1


def test_budget_exhaustion_reports_upper_bound():
    def stingy(inst, time_limit=None, node_limit=None):
        from mtdist.solve import solve_builtin
        return solve_builtin(inst, node_limit=1)

    t1, t2 = random_pairs(8, 1, max_nodes=8)[0]
    cfg = EncodeConfig(deterministic_budget_mode=True, initial_node_budget=1, total_node_budget=3)
    res = reencode_loop(t1, t2, cfg, stingy)
    assert res.status == "upper_bound_only" and res.message == "budget exhausted"
    assert res.lower_bound <= res.value
    ubs = [e["upper_bound_out"] for e in res.log]
    assert ubs == sorted(ubs, reverse=True)


def test_backend_errors_carry_the_log():
    def broken(inst, **_):
        raise RuntimeError("solver crashed")

    t1, t2 = random_pairs(9, 1, max_nodes=6)[0]
    with pytest.raises(RuntimeError) as info:
        reencode_loop(t1, t2, EncodeConfig(), broken)
    assert info.value.partial_log[0]["error"].startswith("RuntimeError")


def test_dump_lists_every_variable(two_leaf):
    inst = encode(two_leaf, two_leaf, EncodeConfig(enable_pruning=False))
    text = inst.dump()
    assert text.startswith("minimize 14")
    for v in inst.variables:
        assert f"  {v.name}\n" in text


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_loop_is_exactly_symmetric(seed):
    rng = np.random.default_rng(seed)
    t1 = random_tree(rng, max_nodes=8)
    t2 = random_tree(rng, max_nodes=8)
    a, b = reencode_loop(t1, t2), reencode_loop(t2, t1)
    assert a.value == b.value
    assert mapping_cost(t1, t2, a.witness).total == a.value
    assert reencode_loop(t1, t1).value == 0.0
