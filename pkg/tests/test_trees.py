import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevoforest.trees import (
    DecisionTree,
    Leaf,
    Split,
    crossover_trees,
    leaf_regions,
    majority_leaf_label,
    mutate_tree,
    random_tree,
    truncate,
)


def stump(threshold=0.5, left=0, right=1, d=1, c=2):
    return DecisionTree(Split(0, threshold, Leaf(left), Leaf(right)), d, c)


def leaf_classes(tree):
    return sorted(n.label for n in tree.nodes() if isinstance(n, Leaf))


def test_predict_single_leaf_is_constant():
    tree = DecisionTree(Leaf(0), 3, 2)
    for x in ([0.0, 0.0, 0.0], [1.0, 0.5, 0.2]):
        assert tree.predict(x) == 0


def test_predict_boundary_goes_left():
    assert stump().predict([0.5]) == 0


def test_predict_routes_right_above_threshold():
    assert stump().predict([0.51]) == 1


def test_predict_batch_matches_predict():
    rng = np.random.default_rng(0)
    tree = random_tree(4, 3, 4, rng)
    X = rng.random((200, 3))
    batch = tree.predict_batch(X)
    assert all(batch[i] == tree.predict(X[i]) for i in range(len(X)))


def test_random_tree_depth_zero_is_leaf():
    tree = random_tree(0, 2, 3, np.random.default_rng(0))
    assert isinstance(tree.root, Leaf)


def test_random_tree_respects_depth_bound():
    rng = np.random.default_rng(1)
    assert all(random_tree(3, 2, 2, rng).depth() <= 3 for _ in range(10_000))


def test_random_tree_deterministic():
    a = random_tree(3, 4, 3, np.random.default_rng(7))
    b = random_tree(3, 4, 3, np.random.default_rng(7))
    assert a == b


def test_mutate_single_leaf_falls_back_without_prune():
    tree = DecisionTree(Leaf(1), 2, 3)
    for seed in range(50):
        out = mutate_tree(tree, np.random.default_rng(seed))
        out.validate()
    assert tree.root == Leaf(1)  # input unmodified


def test_mutate_preserves_invariants():
    rng = np.random.default_rng(2)
    for _ in range(2000):
        tree = random_tree(3, 3, 3, rng)
        mutant = mutate_tree(tree, rng, max_depth=6)
        mutant.validate()
        assert mutant.depth() <= 6


def test_mutate_deterministic():
    tree = random_tree(3, 2, 2, np.random.default_rng(3))
    a = mutate_tree(tree, np.random.default_rng(11))
    b = mutate_tree(tree, np.random.default_rng(11))
    assert a == b


def test_crossover_of_two_leaves_swaps_whole_trees():
    t1 = DecisionTree(Leaf(0), 1, 2)
    t2 = DecisionTree(Leaf(1), 1, 2)
    c1, c2 = crossover_trees(t1, t2, np.random.default_rng(0))
    assert {c1.root, c2.root} == {Leaf(0), Leaf(1)}


def test_crossover_preserves_invariants():
    rng = np.random.default_rng(4)
    for _ in range(2000):
        t1 = random_tree(3, 3, 3, rng)
        t2 = random_tree(3, 3, 3, rng)
        c1, c2 = crossover_trees(t1, t2, rng, max_depth=6)
        c1.validate()
        c2.validate()
        assert c1.depth() <= 6 and c2.depth() <= 6


def test_crossover_conserves_leaf_multiset_without_truncation():
    rng = np.random.default_rng(5)
    for _ in range(500):
        t1 = random_tree(3, 3, 3, rng)
        t2 = random_tree(3, 3, 3, rng)
        c1, c2 = crossover_trees(t1, t2, rng, max_depth=100)  # cap never fires
        assert sorted(leaf_classes(t1) + leaf_classes(t2)) == sorted(
            leaf_classes(c1) + leaf_classes(c2)
        )


def test_operators_leave_parents_unmodified():
    rng = np.random.default_rng(6)
    t1 = random_tree(3, 2, 2, rng)
    t2 = random_tree(3, 2, 2, rng)
    before = (t1.to_dict(), t2.to_dict())
    crossover_trees(t1, t2, rng)
    mutate_tree(t1, rng)
    assert (t1.to_dict(), t2.to_dict()) == before


def test_majority_leaf_label_ties_pick_lowest():
    node = Split(0, 0.5, Leaf(2), Leaf(1))
    assert majority_leaf_label(node) == 1


def test_truncate_to_zero_gives_majority_leaf():
    tree = DecisionTree(Split(0, 0.5, Leaf(1), Split(1, 0.3, Leaf(1), Leaf(0))), 2, 2)
    out = truncate(tree, 0)
    assert out.root == Leaf(1)


def test_leaf_regions_single_leaf_covers_cube():
    regions = leaf_regions(DecisionTree(Leaf(0), 2, 2))
    assert len(regions) == 1
    assert regions[0].lower.tolist() == [0.0, 0.0]
    assert regions[0].upper.tolist() == [1.0, 1.0]
    assert not regions[0].lower_open.any()


def test_leaf_regions_stump():
    regions = leaf_regions(stump())
    by_label = {r.label: r for r in regions}
    assert by_label[0].upper[0] == 0.5 and not by_label[0].lower_open[0]
    assert by_label[1].lower[0] == 0.5 and by_label[1].lower_open[0]


def region_contains(region, x):
    for j in range(len(x)):
        if region.lower_open[j]:
            if not region.lower[j] < x[j] <= region.upper[j]:
                return False
        elif not region.lower[j] <= x[j] <= region.upper[j]:
            return False
    return True


def test_leaf_regions_agree_with_predict():
    rng = np.random.default_rng(8)
    for _ in range(20):
        tree = random_tree(4, 2, 3, rng)
        regions = leaf_regions(tree)
        X = rng.random((50, 2))
        for x in X:
            hits = [r for r in regions if region_contains(r, x)]
            assert len(hits) == 1
            assert hits[0].label == tree.predict(x)


def test_serialization_round_trip():
    rng = np.random.default_rng(9)
    tree = random_tree(4, 3, 3, rng)
    clone = DecisionTree.from_dict(tree.to_dict(), 3, 3)
    assert clone == tree


def test_from_dict_validates_dimensions():
    with pytest.raises(ValueError):
        DecisionTree.from_dict({"feature": 5, "threshold": 0.5,
                                "left": {"class": 0}, "right": {"class": 1}}, 2, 2)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), depth_cap=st.integers(1, 8))
def test_mutation_invariants_property(seed, depth_cap):
    rng = np.random.default_rng(seed)
    tree = random_tree(3, 2, 3, rng)
    mutant = mutate_tree(tree, rng, max_depth=depth_cap)
    mutant.validate()
    assert mutant.depth() <= depth_cap
