import numpy as np
import pytest

from coevoforest import archipelago
from coevoforest.archipelago import ArchipelagoResult
from coevoforest.ensemble import (
    Forest,
    canonical_json,
    compose_equal,
    compose_nash,
    composition_game,
    forest_to_document,
    load_forest,
    load_model,
    predict_forest,
    save_forest,
    save_tree,
)
from coevoforest.data import Dataset
from coevoforest.game import lemke_howson, verify_equilibrium
from coevoforest.perturb import sample_uniform
from coevoforest.trees import DecisionTree, Leaf, Split

from test_island import manual_island, tiny_config, tiny_dataset


def stump(left=0, right=1):
    return DecisionTree(Split(0, 0.5, Leaf(left), Leaf(right)), 2, 2)


def micro_result(n_islands=3, seed=0, **overrides):
    ds = tiny_dataset()
    cfg = tiny_config(n_islands=n_islands, generation_limit=8, seed=seed, **overrides)
    return ds, cfg, archipelago.run(ds, cfg)


def manual_result(ds, cfg, island_specs):
    """ArchipelagoResult with hand-picked champions per island."""
    islands = []
    champions = []
    for i, (trees, perts) in enumerate(island_specs):
        isl = manual_island(ds, trees, perts, cfg)
        isl.id = i
        islands.append(isl)
        best = int(np.argmax(isl.tree_fitness))
        champions.append((isl.trees[best], float(isl.tree_fitness[best])))
    fits = [f for _, f in champions]
    w = int(np.argmax(fits))
    return ArchipelagoResult(
        islands=islands,
        best_tree_per_island=champions,
        global_best_tree=champions[w][0],
        global_best_fitness=champions[w][1],
        total_generations=0,
        stop_reason="generation-limit",
    )


def test_compose_equal_single_island():
    _, _, result = micro_result(n_islands=1)
    forest = compose_equal(result)
    assert len(forest.members) == 1
    assert forest.members[0][1] == 1.0


def test_compose_equal_four_islands():
    _, _, result = micro_result(n_islands=4)
    forest = compose_equal(result)
    weights = [w for _, w in forest.members]
    assert weights == [0.25] * 4
    assert sum(weights) == pytest.approx(1.0, abs=1e-9)


def test_compose_nash_single_island_is_pure():
    ds, cfg, result = micro_result(n_islands=1)
    forest = compose_nash(result, ds, cfg)
    assert len(forest.members) == 1
    assert forest.members[0][1] == pytest.approx(1.0, abs=1e-9)


def test_compose_nash_dominant_champion_takes_all():
    # margin-separated data: the true stump is correct under any feasible
    # perturbation, constant trees are not
    rng = np.random.default_rng(0)
    x0 = np.concatenate([rng.uniform(0, 0.3, 12), rng.uniform(0.7, 1.0, 12)])
    X = np.column_stack([x0, rng.random(24)])
    ds = Dataset(instances=X, labels=(x0 > 0.5).astype(int), num_classes=2,
                 feature_names=("a", "b"))
    cfg = tiny_config(epsilon=0.05, n_islands=2)
    perts = lambda: [sample_uniform(24, 2, 0.05, rng) for _ in range(4)]
    result = manual_result(
        ds, cfg,
        [([stump()], perts()), ([DecisionTree(Leaf(0), 2, 2)], perts())],
    )
    forest = compose_nash(result, ds, cfg)
    weights = dict(zip(("perfect", "constant"), (w for _, w in forest.members)))
    assert weights["perfect"] == pytest.approx(1.0, abs=1e-9)
    assert weights["constant"] == pytest.approx(0.0, abs=1e-9)
    # verified independently by the oracle route
    payoff = composition_game(result, cfg)
    from coevoforest.game import solve_zero_sum_oracle

    oracle = solve_zero_sum_oracle(payoff)
    assert oracle.row_probs[0] == pytest.approx(1.0, abs=1e-6)


def test_compose_nash_equilibrium_dominates_uniform_and_pure_rows():
    ds, cfg, result = micro_result(n_islands=3, seed=5)
    payoff = composition_game(result, cfg)
    equilibrium = lemke_howson(payoff)
    assert verify_equilibrium(payoff, equilibrium, 1e-6)
    A = payoff.entries
    nash_worst = float((equilibrium.row_probs @ A).min())
    uniform = np.full(A.shape[0], 1.0 / A.shape[0])
    assert nash_worst >= float((uniform @ A).min()) - 1e-9
    for i in range(A.shape[0]):
        assert nash_worst >= float(A[i].min()) - 1e-9


def test_compose_nash_and_equal_share_member_trees():
    ds, cfg, result = micro_result(n_islands=3, seed=6)
    nash = compose_nash(result, ds, cfg)
    equal = compose_equal(result)
    assert [t for t, _ in nash.members] == [t for t, _ in equal.members]


def test_composition_game_respects_column_cap():
    ds, cfg, result = micro_result(n_islands=2, seed=7)
    capped = cfg.with_overrides(max_payoff_cols=5)
    payoff = composition_game(result, capped)
    assert payoff.entries.shape == (2, 5)


def test_predict_single_member_forest():
    forest = Forest(members=[(stump(), 1.0)])
    assert predict_forest(forest, [0.4, 0.9]) == 0
    assert predict_forest(forest, [0.6, 0.9]) == 1


def test_predict_weighted_majority():
    forest = Forest(members=[(DecisionTree(Leaf(1), 2, 2), 0.6),
                             (DecisionTree(Leaf(0), 2, 2), 0.4)])
    assert predict_forest(forest, [0.5, 0.5]) == 1


def test_predict_tie_resolves_to_lowest_class():
    forest = Forest(members=[(DecisionTree(Leaf(0), 2, 2), 0.5),
                             (DecisionTree(Leaf(1), 2, 2), 0.5)])
    assert predict_forest(forest, [0.5, 0.5]) == 0


def test_prediction_invariant_to_weight_rescaling():
    rng = np.random.default_rng(1)
    from coevoforest.trees import random_tree

    trees = [random_tree(3, 2, 3, rng) for _ in range(4)]
    raw = np.array([0.4, 0.3, 0.2, 0.1])
    scaled = raw * 7.3
    f1 = Forest(members=list(zip(trees, raw / raw.sum())))
    f2 = Forest(members=list(zip(trees, scaled / scaled.sum())))
    X = rng.random((50, 2))
    np.testing.assert_array_equal(f1.predict_batch(X), f2.predict_batch(X))


def test_forest_validates_weights():
    with pytest.raises(ValueError):
        Forest(members=[(stump(), 0.7)])
    with pytest.raises(ValueError):
        Forest(members=[(stump(), -0.2), (stump(), 1.2)])
    with pytest.raises(ValueError):
        Forest(members=[])


def test_model_round_trip_is_byte_identical(tmp_path):
    ds, cfg, result = micro_result(n_islands=2, seed=8)
    forest = compose_nash(result, ds, cfg)
    path_a = tmp_path / "a.json"
    path_b = tmp_path / "b.json"
    save_forest(forest, path_a)
    loaded = load_forest(path_a, 2, 2)
    save_forest(loaded, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()


def test_zero_weight_members_pruned_on_save(tmp_path):
    forest = Forest(members=[(stump(), 1.0), (DecisionTree(Leaf(0), 2, 2), 0.0)])
    doc = forest_to_document(forest)
    assert len(doc["members"]) == 1
    path = tmp_path / "f.json"
    save_forest(forest, path)
    assert len(load_forest(path, 2, 2).members) == 1


def test_load_model_detects_bare_tree(tmp_path):
    path = tmp_path / "tree.json"
    save_tree(stump(), path)
    model = load_model(path, 2, 2)
    assert isinstance(model, DecisionTree)
    assert model == stump()


def test_canonical_json_is_sorted_and_stable():
    text = canonical_json({"b": 1, "a": [0.5, 2]})
    assert text.index('"a"') < text.index('"b"')
    assert canonical_json({"b": 1, "a": [0.5, 2]}) == text
