"""Command-line entry point: train | evaluate | diversity | ablate |
solve-game.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  The environment
variable COEVOFOREST_CONFIG names a default key=value config file; flags
override file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import archipelago, ensemble
from .config import ENV_CONFIG_VAR, FORMAT_VERSION, RunConfig, load_config_file
from .data import Dataset, load_csv, normalize, train_test_split
from .game import GameSolverError, PayoffMatrix, lemke_howson, verify_equilibrium
from .metrics import (
    MetricKind,
    accuracy,
    adversarial_accuracy_empirical,
    adversarial_accuracy_exact_tree,
    ensemble_diversity,
    max_regret_empirical,
)
from .perturb import sample_uniform
from .trees import DecisionTree

logger = logging.getLogger(__name__)

EVAL_CSV_HEADER = ["format_version", "dataset", "method", "metric", "value", "seed"]
ABLATE_CSV_HEADER = ["format_version", "dataset", "variant", "metric", "value", "seed"]

ABLATION_VARIANTS = (
    ("nash_bootstrap", False, False),
    ("equal_bootstrap", False, True),
    ("nash_same_input", True, False),
    ("equal_same_input", True, True),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_normalized(path, label) -> Dataset:
    raw = load_csv(path, label)
    ds, _ = normalize(raw)
    return ds


def _split_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(archipelago.splitmix64(seed, 1 << 32))


def _base_run_config(args) -> RunConfig:
    config_path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG_VAR)
    run_cfg = load_config_file(config_path) if config_path else RunConfig()
    evo_overrides = {}
    for flag, field in (
        ("islands", "n_islands"),
        ("seed", "seed"),
        ("epsilon", "epsilon"),
        ("metric", "metric"),
        ("threads", "threads"),
        ("k_top", "migrants_per_neighbor"),
        ("tree_pop", "tree_pop_size"),
        ("pert_pop", "pert_pop_size"),
        ("generation_limit", "generation_limit"),
        ("inject", "inject_trees_path"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            evo_overrides[field] = value
    if evo_overrides:
        run_cfg.evolution = run_cfg.evolution.with_overrides(**evo_overrides)
    for flag, field in (
        ("test_fraction", "test_fraction"),
        ("samples", "adversarial_samples"),
        ("regret_samples", "max_regret_samples"),
        ("repeats", "repeats"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(run_cfg, field, value)
    return run_cfg


def _write_rows(path, header, rows):
    out = sys.stdout if path in (None, "-") else open(path, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_train(args) -> int:
    run_cfg = _base_run_config(args)
    ds = _load_normalized(args.dataset, args.label)
    train_ds, test_ds = train_test_split(
        ds, run_cfg.test_fraction, _split_rng(run_cfg.evolution.seed)
    )
    os.makedirs(args.out, exist_ok=True)

    started = time.time()
    result = archipelago.run(train_ds, run_cfg.evolution)
    wall_time = time.time() - started

    meta = {
        "dataset": ds.name,
        "metric": run_cfg.evolution.metric.value,
        "epsilon": run_cfg.evolution.epsilon,
        "seed": run_cfg.evolution.seed,
        "n_features": ds.n_features,
        "n_classes": ds.num_classes,
    }
    nash = ensemble.compose_nash(result, train_ds, run_cfg.evolution, metadata=meta)
    equal = ensemble.compose_equal(result, metadata=meta)
    ensemble.save_forest(nash, os.path.join(args.out, "model_nash.json"))
    ensemble.save_forest(equal, os.path.join(args.out, "model_equal.json"))
    ensemble.save_tree(result.global_best_tree, os.path.join(args.out, "champion_tree.json"))

    report = {
        "format_version": FORMAT_VERSION,
        "dataset": ds.name,
        "train_instances": train_ds.n_instances,
        "test_instances": test_ds.n_instances,
        "stop_reason": result.stop_reason,
        "total_generations": result.total_generations,
        "wall_time_s": wall_time,
        "per_island_best_fitness": [f for _, f in result.best_tree_per_island],
        "global_best_fitness": result.global_best_fitness,
        "config": {k: (v.value if isinstance(v, MetricKind) else v)
                   for k, v in asdict(run_cfg.evolution).items()},
    }
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained on {train_ds.n_instances} instances; "
          f"stop={result.stop_reason} generations={result.total_generations}; "
          f"models written to {args.out}")
    return 0


def _evaluate_model(model, ds: Dataset, epsilon: float, n_adv: int, n_regret: int,
                    seed: int, cart_params) -> list[tuple[str, float]]:
    """(metric name, value) pairs for one model on one dataset."""
    X, y = ds.instances, ds.labels
    rows = [("clean_accuracy", accuracy(model, X, y))]
    rng = np.random.default_rng(archipelago.splitmix64(seed, 7))
    m, d = X.shape
    pert_set = [sample_uniform(m, d, epsilon, rng) for _ in range(max(1, n_adv))]
    rows.append(
        ("adversarial_accuracy_empirical",
         adversarial_accuracy_empirical(model, X, y, pert_set))
    )
    single = model if isinstance(model, DecisionTree) else None
    if single is None and len(model.members) == 1:
        single = model.members[0][0]
    if single is not None:
        rows.append(
            ("adversarial_accuracy_exact",
             adversarial_accuracy_exact_tree(single, X, y, epsilon))
        )
    regret_rng = np.random.default_rng(archipelago.splitmix64(seed, 8))
    rows.append(
        ("max_regret_empirical",
         max_regret_empirical(model, X, y, epsilon, n_regret, regret_rng, cart_params))
    )
    return rows


def cmd_evaluate(args) -> int:
    run_cfg = _base_run_config(args)
    ds = _load_normalized(args.dataset, args.label)
    model = ensemble.load_model(args.model, ds.n_features, ds.num_classes)
    epsilon = args.epsilon if args.epsilon is not None else run_cfg.evolution.epsilon
    if isinstance(model, ensemble.Forest) and "epsilon" in model.metadata and args.epsilon is None:
        epsilon = float(model.metadata["epsilon"])
    method = (
        model.metadata.get("composition", "forest")
        if isinstance(model, ensemble.Forest)
        else "single_tree"
    )
    values = _evaluate_model(
        model, ds, epsilon, run_cfg.adversarial_samples, run_cfg.max_regret_samples,
        run_cfg.evolution.seed, run_cfg.evolution.cart_params,
    )
    rows = [
        [FORMAT_VERSION, ds.name, method, metric, repr(value), run_cfg.evolution.seed]
        for metric, value in values
    ]
    _write_rows(getattr(args, "out", None), EVAL_CSV_HEADER, rows)
    return 0


def cmd_diversity(args) -> int:
    run_cfg = _base_run_config(args)
    ds = _load_normalized(args.dataset, args.label)
    model = ensemble.load_model(args.model, ds.n_features, ds.num_classes)
    if isinstance(model, DecisionTree) or len(model.members) < 2:
        raise RuntimeError("diversity needs a model with at least 2 members")
    epsilon = args.epsilon if args.epsilon is not None else run_cfg.evolution.epsilon
    rng = np.random.default_rng(archipelago.splitmix64(run_cfg.evolution.seed, 9))
    m, d = ds.instances.shape
    n_perts = args.samples if getattr(args, "samples", None) else 10
    from .perturb import apply

    perturbed = np.concatenate(
        [apply(sample_uniform(m, d, epsilon, rng), ds.instances) for _ in range(n_perts)]
    )
    trees = [t for t, _ in model.members]
    avg, mx = ensemble_diversity(trees, perturbed)
    print(json.dumps({"avg_div": avg, "max_div": mx}))
    return 0


def cmd_ablate(args) -> int:
    run_cfg = _base_run_config(args)
    ds = _load_normalized(args.dataset, args.label)
    rows = []
    base_evo = run_cfg.evolution
    for rep in range(run_cfg.repeats):
        seed = base_evo.seed + rep
        train_ds, test_ds = train_test_split(
            ds, run_cfg.test_fraction, _split_rng(seed)
        )
        for same_input in (False, True):
            evo = base_evo.with_overrides(seed=seed, same_input=same_input)
            result = archipelago.run(train_ds, evo)
            meta = {"dataset": ds.name, "epsilon": evo.epsilon,
                    "metric": evo.metric.value, "seed": seed}
            forests = {
                False: ensemble.compose_nash(result, train_ds, evo, metadata=meta),
                True: ensemble.compose_equal(result, metadata=meta),
            }
            for variant, variant_same_input, equal_voting in ABLATION_VARIANTS:
                if variant_same_input != same_input:
                    continue
                forest = forests[equal_voting]
                values = _evaluate_model(
                    forest, test_ds, evo.epsilon,
                    run_cfg.adversarial_samples, run_cfg.max_regret_samples,
                    seed, evo.cart_params,
                )
                for metric, value in values:
                    rows.append([FORMAT_VERSION, ds.name, variant, metric, repr(value), seed])
    _write_rows(getattr(args, "out", None), ABLATE_CSV_HEADER, rows)
    return 0


def load_matrix_csv(path) -> PayoffMatrix:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line in csv.reader(fh):
            if not line:
                continue
            rows.append([float(cell) for cell in line])
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    return PayoffMatrix(entries=np.array(rows))


def cmd_solve_game(args) -> int:
    payoff = load_matrix_csv(args.matrix)
    pair = lemke_howson(payoff)
    if not verify_equilibrium(payoff, pair, 1e-6):
        raise GameSolverError("computed strategies failed equilibrium verification")
    print(json.dumps({
        "format_version": FORMAT_VERSION,
        "value": pair.value,
        "row_probs": [float(p) for p in pair.row_probs],
        "col_probs": [float(p) for p in pair.col_probs],
    }))
    return 0


def _add_common(parser, dataset_required=True):
    parser.add_argument("--dataset", required=dataset_required, help="CSV file with a header row")
    parser.add_argument("--label", default="label", help="label column name or 0-based index")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--epsilon", type=float, default=None)
    parser.add_argument("--metric", choices=[m.value for m in MetricKind], default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="coevoforest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train forests on a CSV dataset")
    _add_common(p_train)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--islands", type=int, default=None)
    p_train.add_argument("--k-top", dest="k_top", type=int, default=None)
    p_train.add_argument("--tree-pop", dest="tree_pop", type=int, default=None)
    p_train.add_argument("--pert-pop", dest="pert_pop", type=int, default=None)
    p_train.add_argument("--generation-limit", dest="generation_limit", type=int, default=None)
    p_train.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    p_train.add_argument("--threads", type=int, default=None)
    p_train.add_argument("--inject", help="JSON file of externally trained trees for island 0")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a saved model on a CSV dataset")
    _add_common(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p_eval.add_argument("--samples", type=int, default=None,
                        help="perturbations for empirical adversarial accuracy")
    p_eval.add_argument("--regret-samples", dest="regret_samples", type=int, default=None,
                        help="perturbations for empirical max regret")
    p_eval.set_defaults(func=cmd_evaluate)

    p_div = sub.add_parser("diversity", help="prediction-disagreement diversity of a forest")
    _add_common(p_div)
    p_div.add_argument("--model", required=True)
    p_div.add_argument("--samples", type=int, default=None,
                       help="number of perturbations in the evaluation set")
    p_div.set_defaults(func=cmd_diversity)

    p_abl = sub.add_parser("ablate", help="2x2 voting-by-input ablation grid")
    _add_common(p_abl)
    p_abl.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p_abl.add_argument("--islands", type=int, default=None)
    p_abl.add_argument("--tree-pop", dest="tree_pop", type=int, default=None)
    p_abl.add_argument("--pert-pop", dest="pert_pop", type=int, default=None)
    p_abl.add_argument("--generation-limit", dest="generation_limit", type=int, default=None)
    p_abl.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    p_abl.add_argument("--samples", type=int, default=None)
    p_abl.add_argument("--regret-samples", dest="regret_samples", type=int, default=None)
    p_abl.add_argument("--repeats", type=int, default=None)
    p_abl.set_defaults(func=cmd_ablate)

    p_game = sub.add_parser("solve-game", help="equilibrium of a payoff matrix CSV")
    p_game.add_argument("--matrix", required=True)
    p_game.set_defaults(func=cmd_solve_game)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
