"""Multi-island orchestration: topology, synchronized migration, stop
condition, external tree injection and result extraction.

Islands evolve independently between migration barriers; migration reads
pre-migration snapshots only, so results do not depend on scheduling
order and the whole run is reproducible from the global seed.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import EvolutionConfig
from .data import Dataset
from .island import Island, champion, init_island, run_epoch
from .trees import DecisionTree

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(seed: int, index: int) -> int:
    """Independent, reproducible per-island seed stream."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class Topology:
    num_islands: int
    neighbors: dict[int, tuple[int, ...]]
    kind: str

    def __post_init__(self):
        for i, nbrs in self.neighbors.items():
            if i in nbrs:
                raise ValueError(f"island {i} lists itself as a neighbor")
            if any(not 0 <= j < self.num_islands for j in nbrs):
                raise ValueError("neighbor id out of range")


def build_topology(kind: str, num_islands: int) -> Topology:
    """Ring, star or complete neighbor maps; ring/star/complete need >= 2
    islands."""
    if kind in ("ring", "star", "complete") and num_islands < 2:
        raise ValueError(f"{kind} topology needs at least 2 islands")
    if kind == "ring":
        neighbors = {
            i: tuple(sorted({(i - 1) % num_islands, (i + 1) % num_islands}))
            for i in range(num_islands)
        }
    elif kind == "star":
        neighbors = {0: tuple(range(1, num_islands))}
        neighbors.update({i: (0,) for i in range(1, num_islands)})
    elif kind == "complete":
        neighbors = {
            i: tuple(j for j in range(num_islands) if j != i)
            for i in range(num_islands)
        }
    else:
        raise ValueError(f"unknown topology kind {kind!r}")
    return Topology(num_islands=num_islands, neighbors=neighbors, kind=kind)


def _no_migration_topology(num_islands: int) -> Topology:
    return Topology(
        num_islands=num_islands,
        neighbors={i: () for i in range(num_islands)},
        kind="isolated",
    )


@dataclass
class ArchipelagoResult:
    islands: list[Island]
    best_tree_per_island: list[tuple[DecisionTree, float]]
    global_best_tree: DecisionTree
    global_best_fitness: float
    total_generations: int
    stop_reason: str
    trajectory: list[tuple[int, float]] = field(default_factory=list)
    audit: list = field(default_factory=list)


def select_fittest(pop: list, fitness, k: int) -> list:
    """The k highest-fitness individuals; ties keep the older individual."""
    if k > len(pop):
        raise ValueError(f"cannot select {k} fittest from a population of {len(pop)}")
    order = np.argsort(-np.asarray(fitness), kind="stable")
    return [pop[i] for i in order[:k]]


def migrate(islands: list[Island], topology: Topology, k_top: int) -> None:
    """Barrier-synchronized exchange: every island receives copies of each
    neighbor's k_top fittest trees and perturbations, computed from
    pre-migration states.  Donors are unchanged; recipients run oversized
    until the next selection step trims them back.
    """
    if k_top == 0:
        return
    snapshots = {}
    for isl in islands:
        t_order = np.argsort(-isl.tree_fitness, kind="stable")[:k_top]
        p_order = np.argsort(-isl.pert_fitness, kind="stable")[:k_top]
        snapshots[isl.id] = (
            [isl.trees[i] for i in t_order],
            isl.tree_fitness[t_order].copy(),
            [isl.perts[i].clone(clear_cache=True) for i in p_order],
            isl.pert_fitness[p_order].copy(),
        )
    for isl in islands:
        if not topology.neighbors.get(isl.id, ()):
            continue
        for nbr in topology.neighbors[isl.id]:
            trees, tree_fit, perts, pert_fit = snapshots[nbr]
            isl.trees.extend(trees)
            isl.tree_fitness = np.concatenate([isl.tree_fitness, tree_fit])
            isl.perts.extend(perts)
            isl.pert_fitness = np.concatenate([isl.pert_fitness, pert_fit])
        isl.invalidate_tree_context()
        isl.invalidate_pert_context()


def inject_trees(island: Island, trees: list[DecisionTree], config: EvolutionConfig) -> None:
    """Replace the lowest-index initial trees with externally built ones.

    Initialization-time only: fitness and the archive seed are refreshed so
    injected trees compete like any other individual.
    """
    from .island import evaluate_trees

    if len(trees) > len(island.trees):
        raise ValueError(
            f"cannot inject {len(trees)} trees into a population of {len(island.trees)}"
        )
    d = island.view.n_features
    c = island.view.source.num_classes
    for t in trees:
        if t.n_features != d or t.n_classes != c:
            raise ValueError("injected tree dimensions do not match the dataset")
        t.validate()
    if not trees:
        return
    island.trees[: len(trees)] = trees
    island.tree_fitness = evaluate_trees(island.trees, island, config.metric, config)
    best = int(np.argmax(island.tree_fitness))
    island.hof.tree_mixture = [(island.trees[best], 1.0)]
    island.invalidate_pert_context()
    from .island import evaluate_perts

    island.pert_fitness = evaluate_perts(island.perts, island, config.metric, config)


def load_injection_file(path, n_features: int, n_classes: int) -> list[DecisionTree]:
    """Read externally trained trees (JSON list of nested split/leaf nodes)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        payload = [payload]
    return [DecisionTree.from_dict(obj, n_features, n_classes) for obj in payload]


def init_archipelago(dataset: Dataset, config: EvolutionConfig) -> list[Island]:
    """Create all islands with derived seeds; inject external trees into
    island 0 when configured."""
    if dataset.instances.min() < 0.0 or dataset.instances.max() > 1.0:
        raise ValueError("dataset must be normalized to [0, 1] before training")
    seeds = (
        config.island_seeds
        if config.island_seeds is not None
        else tuple(splitmix64(config.seed, i) for i in range(config.n_islands))
    )
    islands = [
        init_island(i, dataset, config, seeds[i]) for i in range(config.n_islands)
    ]
    if config.inject_trees_path:
        injected = load_injection_file(
            config.inject_trees_path, dataset.n_features, dataset.num_classes
        )
        inject_trees(islands[0], injected, config)
    return islands


def run(
    dataset: Dataset,
    config: EvolutionConfig,
    islands: list[Island] | None = None,
) -> ArchipelagoResult:
    """Evolve all islands with periodic migration until the generation
    limit is reached or the cross-island best stops improving.

    The stagnation tracker keeps the historical best fitness; improvement
    means exceeding it by more than 1e-12.  Generations count tree
    generations per island (all islands advance in lockstep).
    """
    if islands is None:
        islands = init_archipelago(dataset, config)
    n = len(islands)
    if config.migrants_per_neighbor > 0 and n > 1:
        topology = build_topology(config.topology, n)
    else:
        topology = _no_migration_topology(n)

    best_value = -np.inf
    best_gen = 0
    trajectory: list[tuple[int, float]] = []
    stop_reason = "generation-limit"

    while True:
        elapsed = islands[0].generation
        remaining = min(
            config.gens_between_migrations, config.generation_limit - elapsed
        )
        epoch_cfg = (
            config
            if remaining == config.gens_between_migrations
            else config.with_overrides(gens_between_migrations=remaining)
        )
        if config.threads > 1 and n > 1:
            with ThreadPoolExecutor(max_workers=min(config.threads, n)) as pool:
                list(pool.map(lambda isl: run_epoch(isl, config.metric, epoch_cfg), islands))
        else:
            for isl in islands:
                run_epoch(isl, config.metric, epoch_cfg)

        gens = islands[0].generation
        epoch_best = max(champion(isl)[1] for isl in islands)
        if epoch_best > best_value + 1e-12:
            best_value = epoch_best
            best_gen = gens
        trajectory.append((gens, float(best_value)))

        if gens >= config.generation_limit:
            stop_reason = "generation-limit"
            break
        if gens - best_gen >= config.stagnation_limit:
            stop_reason = "stagnation"
            break
        migrate(islands, topology, config.migrants_per_neighbor)

    champions = [champion(isl) for isl in islands]
    fitnesses = np.array([f for _, f in champions])
    winner = int(np.argmax(fitnesses))
    audit = []
    for isl in islands:
        if isl.audit:
            audit.extend({"island": isl.id, **record} for record in isl.audit)
    return ArchipelagoResult(
        islands=islands,
        best_tree_per_island=champions,
        global_best_tree=champions[winner][0],
        global_best_fitness=float(fitnesses[winner]),
        total_generations=islands[0].generation,
        stop_reason=stop_reason,
        trajectory=trajectory,
        audit=audit,
    )
