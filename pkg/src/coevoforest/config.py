"""Run configuration: every training parameter with its default, plus the
key=value config-file format used by the CLI.

Defaults follow the recommended large-scale parameterization; the desk
preset shrinks budgets to minutes-scale runs for tests and demos.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .metrics import CartParams, MetricKind

ENV_CONFIG_VAR = "COEVOFOREST_CONFIG"
FORMAT_VERSION = 1


@dataclass
class EvolutionConfig:
    """All knobs of one archipelago run.

    Population/evolution: tree_pop_size (N_T), pert_pop_size (N_P),
    gens_per_block (n_p), gens_between_migrations (n_g), top_trees (N_top),
    crossover_prob (p_c), mutation_prob (p_m), selection_pressure (p_s),
    elite_size (e), hof_capacity (N_HoF).  Stopping: generation_limit (l_g),
    stagnation_limit (l_c).  Islands: n_islands, migrants_per_neighbor
    (k_top), topology.  Problem: epsilon, metric.
    """

    epsilon: float = 0.1
    metric: MetricKind = MetricKind.ADVERSARIAL_ACCURACY
    seed: int = 0

    tree_pop_size: int = 200
    pert_pop_size: int = 500
    gens_per_block: int = 20
    gens_between_migrations: int = 40
    top_trees: int = 20
    crossover_prob: float = 0.8
    mutation_prob: float = 0.5
    selection_pressure: float = 0.9
    elite_size: int = 2
    hof_capacity: int = 200

    generation_limit: int = 1000
    stagnation_limit: int = 100

    n_islands: int = 10
    migrants_per_neighbor: int = 5
    topology: str = "ring"

    max_tree_depth: int = 10
    init_tree_depth: int = 3
    cart_max_depth: int = 10
    cart_min_leaf: int = 2

    same_input: bool = False
    equal_voting: bool = False
    inject_trees_path: str | None = None
    island_seeds: tuple[int, ...] | None = None

    max_payoff_rows: int = 200
    max_payoff_cols: int = 1000

    threads: int = 1
    audit: bool = False

    def __post_init__(self):
        if isinstance(self.metric, str):
            self.metric = MetricKind(self.metric)
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        for name in ("tree_pop_size", "pert_pop_size", "gens_per_block",
                     "gens_between_migrations", "generation_limit",
                     "stagnation_limit", "n_islands"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("crossover_prob", "mutation_prob", "selection_pressure"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elite_size <= self.tree_pop_size:
            raise ValueError("elite_size must lie in [0, tree_pop_size]")
        if self.top_trees < 1:
            raise ValueError("top_trees must be >= 1")
        if self.migrants_per_neighbor < 0:
            raise ValueError("migrants_per_neighbor must be >= 0")
        if self.hof_capacity < 2:
            raise ValueError("hof_capacity must hold at least one tree and one perturbation")
        if self.island_seeds is not None:
            self.island_seeds = tuple(int(s) for s in self.island_seeds)
            if len(self.island_seeds) != self.n_islands:
                raise ValueError("island_seeds length must equal n_islands")

    @property
    def cart_params(self) -> CartParams:
        return CartParams(max_depth=self.cart_max_depth, min_leaf=self.cart_min_leaf)

    def with_overrides(self, **kwargs) -> "EvolutionConfig":
        return replace(self, **kwargs)


def desk_config(**overrides) -> EvolutionConfig:
    """Minutes-scale budget for tests, demos and CI."""
    base = dict(
        tree_pop_size=40,
        pert_pop_size=60,
        n_islands=4,
        generation_limit=120,
        stagnation_limit=120,
        gens_per_block=5,
        gens_between_migrations=10,
        top_trees=10,
        hof_capacity=40,
    )
    base.update(overrides)
    return EvolutionConfig(**base)


@dataclass
class RunConfig:
    """CLI-level settings wrapped around an EvolutionConfig."""

    dataset_path: str = ""
    label_column: str = "label"
    test_fraction: float = 0.2
    output_dir: str = "out"
    report_format: str = "csv"
    max_regret_samples: int = 100_000
    adversarial_samples: int = 1000
    repeats: int = 1
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        try:
            return _BOOL_STRINGS[raw.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {raw!r}") from None
    if target_type is MetricKind:
        return MetricKind(raw)
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if raw.lower() in ("none", ""):
        return None
    return raw


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines (# starts a comment) into raw strings."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


_TYPE_BY_FIELD = {
    "epsilon": float, "metric": MetricKind, "seed": int,
    "tree_pop_size": int, "pert_pop_size": int, "gens_per_block": int,
    "gens_between_migrations": int, "top_trees": int,
    "crossover_prob": float, "mutation_prob": float, "selection_pressure": float,
    "elite_size": int, "hof_capacity": int,
    "generation_limit": int, "stagnation_limit": int,
    "n_islands": int, "migrants_per_neighbor": int, "topology": str,
    "max_tree_depth": int, "init_tree_depth": int,
    "cart_max_depth": int, "cart_min_leaf": int,
    "same_input": bool, "equal_voting": bool, "inject_trees_path": str,
    "max_payoff_rows": int, "max_payoff_cols": int,
    "threads": int, "audit": bool,
}

_RUN_FIELDS = {
    "dataset_path": str, "label_column": str, "test_fraction": float,
    "output_dir": str, "report_format": str,
    "max_regret_samples": int, "adversarial_samples": int, "repeats": int,
}


def load_config_file(path) -> RunConfig:
    """Build a RunConfig from a key=value file; unknown keys are errors."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config_text(fh.read())
    evo_kwargs = {}
    run_kwargs = {}
    for key, value in raw.items():
        if key in _TYPE_BY_FIELD:
            evo_kwargs[key] = _coerce(value, _TYPE_BY_FIELD[key])
        elif key in _RUN_FIELDS:
            run_kwargs[key] = _coerce(value, _RUN_FIELDS[key])
        else:
            raise ValueError(f"unknown config key {key!r}")
    return RunConfig(evolution=EvolutionConfig(**evo_kwargs), **run_kwargs)
