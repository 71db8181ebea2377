"""Single-island coevolution of a tree population against a perturbation
population.

Trees and perturbations alternate blocks of generations; fitness of each
side is defined against the other plus an equilibrium-weighted archive of
past strong individuals, which keeps old attack strategies relevant.  All
randomness flows through the island's own generator, so an island's
trajectory is a pure function of (dataset, config, seed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import EvolutionConfig
from .data import Dataset, bootstrap_sample, identity_view
from .game import GameSolverError, build_payoff, lemke_howson
from .metrics import MetricKind, reference_accuracy
from .perturb import (
    Perturbation,
    apply,
    crossover_perturbations,
    mutate_perturbation,
    sample_uniform,
    zero,
)
from .trees import DecisionTree, crossover_trees, mutate_tree, random_tree

logger = logging.getLogger(__name__)


@dataclass
class HallOfFame:
    """Equilibrium mixtures over archived trees and perturbations.

    Each mixture is a probability distribution; the total number of stored
    individuals never exceeds the capacity.
    """

    tree_mixture: list[tuple[DecisionTree, float]]
    pert_mixture: list[tuple[Perturbation, float]]
    capacity: int

    def size(self) -> int:
        return len(self.tree_mixture) + len(self.pert_mixture)


@dataclass
class Island:
    id: int
    view: object
    trees: list[DecisionTree]
    perts: list[Perturbation]
    hof: HallOfFame
    rng: np.random.Generator
    tree_fitness: np.ndarray = field(default_factory=lambda: np.empty(0))
    pert_fitness: np.ndarray = field(default_factory=lambda: np.empty(0))
    generation: int = 0
    best_fitness_history: list[tuple[int, float]] = field(default_factory=list)
    audit: list | None = None
    # memoization: an individual's fitness is constant while its opponent
    # context (opposing population + archive) is unchanged, so survivors are
    # never re-evaluated inside a block; entries pin the individual so ids
    # stay unique for the cache's lifetime
    _tree_memo: dict = field(default_factory=dict, repr=False)
    _pert_memo: dict = field(default_factory=dict, repr=False)
    _pert_stack: np.ndarray | None = field(default=None, repr=False)

    def invalidate_tree_context(self) -> None:
        """Opposing (perturbation) context changed: drop tree memos."""
        self._tree_memo.clear()
        self._pert_stack = None

    def invalidate_pert_context(self) -> None:
        """Opposing (tree) context changed: drop perturbation memos."""
        self._pert_memo.clear()


def _accuracy_on_stack(trees, stacked, n_perts, labels) -> np.ndarray:
    """(n_trees, n_perts) accuracy table against prebuilt perturbed rows."""
    m = labels.shape[0]
    out = np.empty((len(trees), n_perts))
    for i, tree in enumerate(trees):
        preds = tree.predict_batch(stacked).reshape(n_perts, m)
        out[i] = (preds == labels[None, :]).mean(axis=1)
    return out


def _per_pert_accuracy(trees, perts, base, labels) -> np.ndarray:
    stacked = np.concatenate([apply(p, base) for p in perts], axis=0)
    return _accuracy_on_stack(trees, stacked, len(perts), labels)


def evaluate_trees(
    trees, island: Island, metric: MetricKind, config: EvolutionConfig
) -> np.ndarray:
    """Fitness of each tree: worst case over the live perturbation
    population combined with the expectation against the archived mixture.
    Under max regret the sign is flipped so that higher is always fitter.

    Memoized per tree until the island's perturbation context changes.
    """
    base = island.view.instances
    labels = island.view.labels
    hof_perts = [p for p, _ in island.hof.pert_mixture]
    hof_probs = np.array([w for _, w in island.hof.pert_mixture])
    all_perts = list(island.perts) + hof_perts
    n_live = len(island.perts)

    out = np.empty(len(trees))
    missing: list = []
    positions: list[int] = []
    for i, tree in enumerate(trees):
        entry = island._tree_memo.get(id(tree))
        if entry is not None and entry[0] is tree:
            out[i] = entry[1]
        else:
            missing.append(tree)
            positions.append(i)
    if not missing:
        return out

    if island._pert_stack is None or island._pert_stack.shape[0] != len(all_perts) * len(labels):
        island._pert_stack = np.concatenate([apply(p, base) for p in all_perts], axis=0)
    acc = _accuracy_on_stack(missing, island._pert_stack, len(all_perts), labels)

    if metric is MetricKind.ADVERSARIAL_ACCURACY:
        live = acc[:, :n_live].min(axis=1)
        archived = acc[:, n_live:] @ hof_probs
        values = np.minimum(live, archived)
    else:
        refs = np.array(
            [reference_accuracy(p, island.view, labels, config.cart_params) for p in all_perts]
        )
        regrets = refs[None, :] - acc
        live = regrets[:, :n_live].max(axis=1)
        archived = regrets[:, n_live:] @ hof_probs
        values = -np.maximum(live, archived)

    for tree, pos, value in zip(missing, positions, values):
        island._tree_memo[id(tree)] = (tree, float(value))
        out[pos] = value
    return out


def _top_tree_indices(island: Island, k: int) -> np.ndarray:
    order = np.argsort(-island.tree_fitness, kind="stable")
    return order[: min(k, len(order))]


def evaluate_perts(
    perts, island: Island, metric: MetricKind, config: EvolutionConfig
) -> np.ndarray:
    """Adversary fitness against the currently fittest trees only.

    Under adversarial accuracy this is the negated mean accuracy of those
    trees; under max regret it is the mean regret inflicted on them.

    Memoized per perturbation until the island's tree context changes.
    """
    base = island.view.instances
    labels = island.view.labels

    out = np.empty(len(perts))
    missing: list = []
    positions: list[int] = []
    for i, p in enumerate(perts):
        entry = island._pert_memo.get(id(p))
        if entry is not None and entry[0] is p:
            out[i] = entry[1]
        else:
            missing.append(p)
            positions.append(i)
    if not missing:
        return out

    top = [island.trees[i] for i in _top_tree_indices(island, config.top_trees)]
    acc = _per_pert_accuracy(top, missing, base, labels)
    mean_acc = acc.mean(axis=0)
    if metric is MetricKind.ADVERSARIAL_ACCURACY:
        values = -mean_acc
    else:
        refs = np.array(
            [reference_accuracy(p, island.view, labels, config.cart_params) for p in missing]
        )
        values = refs - mean_acc

    for p, pos, value in zip(missing, positions, values):
        island._pert_memo[id(p)] = (p, float(value))
        out[pos] = value
    return out


def fitness_tree(tree, island: Island, metric: MetricKind, config: EvolutionConfig) -> float:
    return float(evaluate_trees([tree], island, metric, config)[0])


def fitness_perturbation(
    p: Perturbation, island: Island, metric: MetricKind, config: EvolutionConfig
) -> float:
    return float(evaluate_perts([p], island, metric, config)[0])


def init_island(
    island_id: int, dataset: Dataset, config: EvolutionConfig, seed: int
) -> Island:
    """Fresh island: random depth-bounded trees, uniform perturbations, a
    bootstrap training view (identity under the same-input ablation) and an
    archive seeded with the fittest random tree and the zero perturbation.
    """
    rng = np.random.default_rng(seed)
    view = identity_view(dataset) if config.same_input else bootstrap_sample(dataset, rng)
    d, c = dataset.n_features, dataset.num_classes
    m = view.n_instances
    trees = [
        random_tree(config.init_tree_depth, d, c, rng)
        for _ in range(config.tree_pop_size)
    ]
    perts = [
        sample_uniform(m, d, config.epsilon, rng) for _ in range(config.pert_pop_size)
    ]
    hof = HallOfFame(
        tree_mixture=[],
        pert_mixture=[(zero(m, d, config.epsilon), 1.0)],
        capacity=config.hof_capacity,
    )
    island = Island(
        id=island_id,
        view=view,
        trees=trees,
        perts=perts,
        hof=hof,
        rng=rng,
        audit=[] if config.audit else None,
    )
    island.tree_fitness = evaluate_trees(trees, island, config.metric, config)
    best = int(np.argmax(island.tree_fitness))
    hof.tree_mixture = [(trees[best], 1.0)]
    island.pert_fitness = evaluate_perts(perts, island, config.metric, config)
    return island


def _tournament_select(pool, fitness: np.ndarray, n_slots: int, elite: int,
                       pressure: float, rng: np.random.Generator):
    """Elites survive unconditionally; binary tournaments (fitter wins with
    probability `pressure`) fill the rest, sampling with replacement."""
    order = np.argsort(-fitness, kind="stable")
    chosen = list(order[: min(elite, n_slots)])
    while len(chosen) < n_slots:
        a, b = rng.integers(len(pool)), rng.integers(len(pool))
        if fitness[a] >= fitness[b]:
            winner, loser = a, b
        else:
            winner, loser = b, a
        chosen.append(winner if rng.random() < pressure else loser)
    return [pool[i] for i in chosen], fitness[np.array(chosen, dtype=int)]


def _breed(pool, rng, p_crossover, p_mutation, crossover_fn, mutate_fn):
    """Crossover pairs then mutants, appended to a copy of the pool."""
    out = list(pool)
    n_pairs = len(pool) // 2
    for _ in range(n_pairs):
        i, j = rng.integers(len(pool)), rng.integers(len(pool))
        if rng.random() < p_crossover:
            c1, c2 = crossover_fn(pool[i], pool[j], rng)
            out.append(c1)
            out.append(c2)
    snapshot = list(out)
    for individual in snapshot:
        if rng.random() < p_mutation:
            out.append(mutate_fn(individual, rng))
    return out


def evolve_tree_generation(
    island: Island, metric: MetricKind, config: EvolutionConfig
) -> None:
    """One generation of the tree population; size is restored to N_T."""

    def crossover_fn(a, b, rng):
        return crossover_trees(a, b, rng, max_depth=config.max_tree_depth)

    def mutate_fn(t, rng):
        return mutate_tree(
            t, rng, max_depth=config.max_tree_depth, init_depth=config.init_tree_depth
        )

    pool = _breed(
        island.trees, island.rng, config.crossover_prob, config.mutation_prob,
        crossover_fn, mutate_fn,
    )
    fitness = evaluate_trees(pool, island, metric, config)
    island.trees, island.tree_fitness = _tournament_select(
        pool, fitness, config.tree_pop_size, config.elite_size,
        config.selection_pressure, island.rng,
    )
    island.generation += 1
    island.best_fitness_history.append((island.generation, float(fitness.max())))
    island.invalidate_pert_context()  # adversary fitness depends on top trees


def evolve_pert_generation(
    island: Island, metric: MetricKind, config: EvolutionConfig
) -> None:
    """One generation of the perturbation population; size restored to N_P."""
    pool = _breed(
        island.perts, island.rng, config.crossover_prob, config.mutation_prob,
        crossover_perturbations, lambda p, rng: mutate_perturbation(p, rng),
    )
    fitness = evaluate_perts(pool, island, metric, config)
    island.perts, island.pert_fitness = _tournament_select(
        pool, fitness, config.pert_pop_size, config.elite_size,
        config.selection_pressure, island.rng,
    )
    island.invalidate_tree_context()  # tree fitness depends on the live adversaries


def hof_candidates(island: Island, metric: MetricKind, config: EvolutionConfig):
    """Top trees and perturbations (live population plus archive support)
    considered for the next archive update."""
    tree_cands = list(island.trees) + [t for t, _ in island.hof.tree_mixture]
    tree_fit = evaluate_trees(tree_cands, island, metric, config)
    keep_t = np.argsort(-tree_fit, kind="stable")[: config.top_trees]
    pert_cands = list(island.perts) + [p for p, _ in island.hof.pert_mixture]
    pert_fit = evaluate_perts(pert_cands, island, metric, config)
    keep_p = np.argsort(-pert_fit, kind="stable")[: 2 * config.top_trees]
    return [tree_cands[i] for i in keep_t], [pert_cands[i] for i in keep_p]


def update_hof(island: Island, metric: MetricKind, config: EvolutionConfig) -> None:
    """Replace the archive with the mixed equilibrium of the current
    top-trees-vs-top-perturbations game, truncated to capacity.

    On solver failure the previous archive is retained.
    """
    top_trees, top_perts = hof_candidates(island, metric, config)
    try:
        payoff = build_payoff(
            top_trees, top_perts, island.view, island.view.labels, metric,
            config.cart_params,
        )
        equilibrium = lemke_howson(payoff)
    except GameSolverError as exc:
        logger.warning("island=%d HoF update failed (%s); keeping previous archive",
                       island.id, exc)
        return
    tree_mix = [
        (t, float(p))
        for t, p in zip(top_trees, equilibrium.row_probs)
        if p > 1e-12
    ]
    pert_mix = [
        (q, float(p))
        for q, p in zip(top_perts, equilibrium.col_probs)
        if p > 1e-12
    ]
    tree_mix, pert_mix = _truncate_hof(tree_mix, pert_mix, island.hof.capacity)
    island.hof.tree_mixture = tree_mix
    island.hof.pert_mixture = pert_mix
    island.invalidate_tree_context()  # tree fitness depends on the archive mixture
    if island.audit is not None:
        island.audit.append(
            {
                "kind": "hof",
                "generation": island.generation,
                "tree_prob_sum": sum(w for _, w in tree_mix),
                "pert_prob_sum": sum(w for _, w in pert_mix),
                "size": len(tree_mix) + len(pert_mix),
            }
        )


def _truncate_hof(tree_mix, pert_mix, capacity):
    """Drop globally lowest-probability members (never emptying a side)
    until the archive fits, then renormalize each mixture."""
    while len(tree_mix) + len(pert_mix) > capacity:
        drop_tree = min(tree_mix, key=lambda kv: kv[1]) if len(tree_mix) > 1 else None
        drop_pert = min(pert_mix, key=lambda kv: kv[1]) if len(pert_mix) > 1 else None
        if drop_tree is None and drop_pert is None:
            break
        if drop_pert is None or (drop_tree is not None and drop_tree[1] <= drop_pert[1]):
            tree_mix.remove(drop_tree)
        else:
            pert_mix.remove(drop_pert)

    def renorm(mix):
        total = sum(w for _, w in mix)
        return [(x, w / total) for x, w in mix]

    return renorm(tree_mix), renorm(pert_mix)


def run_epoch(island: Island, metric: MetricKind, config: EvolutionConfig) -> None:
    """Alternating blocks of tree and perturbation generations followed by
    an archive update, until n_g tree generations have elapsed."""
    done = 0
    while done < config.gens_between_migrations:
        block = min(config.gens_per_block, config.gens_between_migrations - done)
        for _ in range(block):
            evolve_tree_generation(island, metric, config)
        for _ in range(block):
            evolve_pert_generation(island, metric, config)
        update_hof(island, metric, config)
        done += block
    if island.audit is not None:
        island.audit.append(
            {
                "kind": "epoch",
                "generation": island.generation,
                "n_trees": len(island.trees),
                "n_perts": len(island.perts),
            }
        )
    logger.info(
        "island=%d gen=%d best_fitness=%.6f hof_size=%d",
        island.id,
        island.generation,
        float(island.tree_fitness.max()),
        island.hof.size(),
    )


def champion(island: Island) -> tuple[DecisionTree, float]:
    """Fittest tree of the island under its latest evaluation."""
    idx = int(np.argmax(island.tree_fitness))
    return island.trees[idx], float(island.tree_fitness[idx])
