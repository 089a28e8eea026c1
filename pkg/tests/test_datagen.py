import itertools

import numpy as np
import pytest

from mtdist.datagen import (
    EnsembleSpec,
    X3CInstance,
    base_gadget,
    element_gadget,
    ensemble_budget,
    has_exact_cover,
    make_ensemble,
    make_saddle_swap_pair,
    random_tree,
    sample_x3c,
    x3c_node_counts,
    x3c_trees,
)
from mtdist.edit_model import brute_force_distance
from mtdist.merge_tree import trees_isomorphic, validate


# X3C ------------------------------------------------------------------------------

def test_single_set_norms():
    t1, t2 = x3c_trees(X3CInstance(3, ((1, 2, 3),)))
    assert t1.total_persistence == 44
    assert t2.total_persistence == 43


@pytest.mark.parametrize("m, n, planted", [(3, 1, True), (3, 2, True), (6, 2, True), (6, 3, True),
                                           (6, 2, False), (6, 3, False), (9, 4, True)])
def test_norm_difference_and_node_counts(m, n, planted):
    inst = sample_x3c(m, n, planted, seed=3)
    t1, t2 = x3c_trees(inst)
    assert validate(t1) == [] and validate(t2) == []
    assert t1.total_persistence - t2.total_persistence == pytest.approx(inst.threshold)
    assert (t1.n_nodes, t2.n_nodes) == x3c_node_counts(m, n)


def test_planted_single_set():
    assert sample_x3c(3, 1, True).sets == ((1, 2, 3),)


def _covers(m, sets):
    return [c for r in range(1, len(sets) + 1) for c in itertools.combinations(sets, r)
            if sorted(x for s in c for x in s) == list(range(1, m + 1))]


@pytest.mark.parametrize("seed", range(5))
def test_planted_contains_disjoint_cover(seed):
    inst = sample_x3c(6, 3, True, seed=seed)
    assert _covers(6, inst.sets)
    assert has_exact_cover(6, inst.sets)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("seed", range(4))
def test_unplanted_has_no_cover(n, seed):
    inst = sample_x3c(6, n, False, seed=seed)
    assert _covers(6, inst.sets) == []
    assert not has_exact_cover(6, inst.sets)


def test_exact_cover_search():
    assert has_exact_cover(6, [(1, 2, 3), (3, 4, 5), (4, 5, 6)])
    assert not has_exact_cover(6, [(1, 2, 3), (3, 4, 5), (2, 5, 6)])


@pytest.mark.parametrize("m, sets, message", [
    (4, ((1, 2, 3),), "multiple of 3"),
    (3, ((1, 1, 2),), "distinct"),
    (3, ((1, 2, 4),), "universe"),
    (3, ((1, 2, 3),) * 4, "at most 3"),
])
def test_invalid_instances(m, sets, message):
    with pytest.raises(ValueError, match=message):
        X3CInstance(m, sets)


def test_sampler_argument_checks():
    with pytest.raises(ValueError, match="n >= m/3"):
        sample_x3c(6, 1, True)


def test_gadget_shapes():
    g = base_gadget(5)
    assert g.n_nodes == 7 and g.total_persistence == 1 + 30
    gi = element_gadget(5, 2)
    assert gi.n_nodes == 9 and gi.total_persistence == 32
    with pytest.raises(ValueError):
        element_gadget(5, 6)


def test_small_gadget_distances_match_oracle():
    assert brute_force_distance(base_gadget(3), element_gadget(3, 2)).value == 1
    assert brute_force_distance(element_gadget(3, 1), element_gadget(3, 3)).value == 2


# saddle swap -------------------------------------------------------------------------

def test_saddle_swap_default_pair():
    t1, t2 = make_saddle_swap_pair()
    assert sorted(t1.up_length) == sorted(t2.up_length)
    assert not trees_isomorphic(t1, t2)
    assert brute_force_distance(t1, t2).value == 2
    assert brute_force_distance(t1, t1).value == 0


@pytest.mark.parametrize("s", [0.5, 1, 3])
def test_saddle_swap_scales_with_swap_edge(s):
    # the whole pair is scaled; growing only the swap edge would eventually
    # make deleting and reinserting feature C the cheaper option
    t1, t2 = make_saddle_swap_pair(tuple(s * x for x in (1, 1, 4, 4, 2)))
    assert brute_force_distance(t1, t2).value == pytest.approx(2 * s)


def test_long_swap_edge_falls_back_to_moving_the_feature():
    t1, t2 = make_saddle_swap_pair((1, 3, 4, 4, 2))
    assert brute_force_distance(t1, t2).value == 4


def test_saddle_swap_rejects_nonpositive():
    with pytest.raises(ValueError):
        make_saddle_swap_pair((1, 0, 4, 4, 2))


# ensembles -----------------------------------------------------------------------------

def test_vertical_without_noise_is_constant():
    members = make_ensemble(EnsembleSpec("vertical", amplitude=0.0))
    assert len(members) == 20
    assert all(trees_isomorphic(m, members[0]) for m in members)


def test_horizontal_without_noise_has_two_shapes():
    members = make_ensemble(EnsembleSpec("horizontal", amplitude=0.0))
    assert trees_isomorphic(members[0], members[2])
    assert brute_force_distance(members[0], members[1]).value == pytest.approx(2 * 0.5)


@pytest.mark.parametrize("kind, leaves", [("vertical", 9), ("horizontal", 3)])
def test_default_leaf_counts(kind, leaves):
    for t in make_ensemble(EnsembleSpec(kind)):
        assert validate(t) == []
        assert len(t.leaves) == leaves


def test_ensembles_are_deterministic():
    a = make_ensemble(EnsembleSpec("vertical", seed=7))
    b = make_ensemble(EnsembleSpec("vertical", seed=7))
    c = make_ensemble(EnsembleSpec("vertical", seed=8))
    assert all(x.scalars == y.scalars for x, y in zip(a, b))
    assert any(x.scalars != y.scalars for x, y in zip(a, c))


def test_budget_formula():
    assert ensemble_budget(EnsembleSpec("horizontal")) == pytest.approx(2 * 0.1 * 5)
    assert ensemble_budget(EnsembleSpec("vertical")) == pytest.approx(2 * 1.0 * 4)


def test_ensemble_parameter_checks():
    with pytest.raises(ValueError, match="unknown ensemble"):
        make_ensemble(EnsembleSpec("diagonal"))
    with pytest.raises(ValueError, match="amplitude"):
        make_ensemble(EnsembleSpec("horizontal", amplitude=0.6))


# random trees -----------------------------------------------------------------------------

def test_random_trees_are_valid_and_sized():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t = random_tree(rng, max_nodes=9, min_nodes=4)
        assert validate(t) == []
        assert 4 <= t.n_nodes <= 9


def test_random_integer_lengths():
    t = random_tree(4, max_nodes=8, min_nodes=8, integer_lengths=True)
    assert t.n_nodes == 8
    assert all(float(x).is_integer() and 1 <= x <= 4 for x in t.up_length[1:])
