"""Forest composition (Nash-based and equal voting) and weighted-vote
prediction, plus canonical model (de)serialization.

Model files are JSON with sorted keys and 17-significant-digit floats, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .archipelago import ArchipelagoResult
from .config import FORMAT_VERSION, EvolutionConfig
from .data import Dataset
from .game import GameSolverError, PayoffMatrix, build_payoff, lemke_howson
from .trees import DecisionTree

logger = logging.getLogger(__name__)


@dataclass
class Forest:
    """Weighted ensemble of trees; weights are a probability vector."""

    members: list[tuple[DecisionTree, float]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            raise ValueError("a forest needs at least one member")
        weights = np.array([w for _, w in self.members], dtype=float)
        if (weights < 0).any():
            raise ValueError("forest weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"forest weights sum to {weights.sum()}, expected 1")

    @property
    def n_classes(self) -> int:
        return max(t.n_classes for t, _ in self.members)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        """Weighted hard vote; ties resolve to the lowest class index."""
        X = np.asarray(X)
        scores = np.zeros((X.shape[0], self.n_classes))
        for tree, weight in self.members:
            preds = tree.predict_batch(X)
            scores[np.arange(X.shape[0]), preds] += weight
        return np.argmax(scores, axis=1)

    def predict(self, x) -> int:
        return int(self.predict_batch(np.asarray(x)[None, :])[0])


def compose_equal(result: ArchipelagoResult, metadata: dict | None = None) -> Forest:
    """One champion per island, each with weight 1/|I|."""
    champions = result.best_tree_per_island
    weight = 1.0 / len(champions)
    meta = dict(metadata or {})
    meta["composition"] = "equal_voting"
    return Forest(members=[(tree, weight) for tree, _ in champions], metadata=meta)


def composition_game(
    result: ArchipelagoResult, config: EvolutionConfig
) -> PayoffMatrix:
    """Payoff matrix of the final voting game: island champions (rows)
    against the pooled final perturbation populations (columns).

    Columns over the cap are dropped fittest-first using each island's
    latest adversary fitness.
    """
    champions = [tree for tree, _ in result.best_tree_per_island]
    pool: list[tuple[int, int, float]] = []  # (island index, pert index, fitness)
    for k, isl in enumerate(result.islands):
        for j in range(len(isl.perts)):
            pool.append((k, j, float(isl.pert_fitness[j])))
    order = sorted(range(len(pool)), key=lambda i: -pool[i][2])
    keep = order[: config.max_payoff_cols]

    by_island: dict[int, list[int]] = {}
    for i in keep:
        k, j, _ = pool[i]
        by_island.setdefault(k, []).append(j)

    blocks: dict[int, np.ndarray] = {}
    col_of: dict[tuple[int, int], int] = {}
    for k, pert_indices in by_island.items():
        isl = result.islands[k]
        payoff = build_payoff(
            champions,
            [isl.perts[j] for j in pert_indices],
            isl.view,
            isl.view.labels,
            config.metric,
            config.cart_params,
        )
        blocks[k] = payoff.entries
        for pos, j in enumerate(pert_indices):
            col_of[(k, j)] = pos

    columns = np.empty((len(champions), len(keep)))
    for out_pos, i in enumerate(keep):
        k, j, _ = pool[i]
        columns[:, out_pos] = blocks[k][:, col_of[(k, j)]]
    return PayoffMatrix(entries=columns)


def compose_nash(
    result: ArchipelagoResult,
    dataset: Dataset,
    config: EvolutionConfig,
    metadata: dict | None = None,
) -> Forest:
    """Champion weights taken from the mixed equilibrium of the voting
    game; falls back to equal voting if the solver fails."""
    meta = dict(metadata or {})
    try:
        payoff = composition_game(result, config)
        equilibrium = lemke_howson(payoff)
    except GameSolverError as exc:
        logger.warning("Nash composition failed (%s); falling back to equal voting", exc)
        return compose_equal(result, metadata=meta)
    meta["composition"] = "nash_voting"
    meta["game_value"] = float(equilibrium.value)
    champions = [tree for tree, _ in result.best_tree_per_island]
    members = [(t, float(w)) for t, w in zip(champions, equilibrium.row_probs)]
    return Forest(members=members, metadata=meta)


def predict_forest(forest: Forest, x) -> int:
    return forest.predict(x)


# --- canonical JSON -------------------------------------------------------

def _canonical(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("cannot serialize non-finite float")
        if value == int(value) and abs(value) < 1e16:
            return format(value, ".1f")
        return format(value, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_canonical(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_canonical(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def canonical_json(obj) -> str:
    return _canonical(obj) + "\n"


def forest_to_document(forest: Forest) -> dict:
    """Serializable form; zero-weight members are pruned here."""
    return {
        "format_version": FORMAT_VERSION,
        "metadata": forest.metadata,
        "members": [
            {"weight": w, "tree": t.to_dict()}
            for t, w in forest.members
            if w > 0.0
        ],
    }


def save_forest(forest: Forest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(forest_to_document(forest)))


def load_forest(path, n_features: int, n_classes: int) -> Forest:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    members = [
        (DecisionTree.from_dict(m["tree"], n_features, n_classes), float(m["weight"]))
        for m in doc["members"]
    ]
    return Forest(members=members, metadata=doc.get("metadata", {}))


def save_tree(tree: DecisionTree, path) -> None:
    """Bare nested-node JSON; the same format is accepted for injection."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(tree.to_dict()))


def load_model(path, n_features: int, n_classes: int):
    """A forest document or a bare tree, whichever the file contains."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "members" in doc:
        members = [
            (DecisionTree.from_dict(m["tree"], n_features, n_classes), float(m["weight"]))
            for m in doc["members"]
        ]
        return Forest(members=members, metadata=doc.get("metadata", {}))
    return DecisionTree.from_dict(doc, n_features, n_classes)
