"""Desk-scale experiment driver: variant comparisons, single-tree mode
against independent-restart baselines, and diversity reporting.

Within one (dataset, seed) cell every variant shares the same data split
and the same per-island seed streams, so differences isolate the variant
under test.  Cell failures are recorded as rows and the run continues.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import archipelago, ensemble
from .archipelago import splitmix64
from .config import EvolutionConfig, desk_config, parse_config_text
from .data import Dataset, load_csv, normalize, train_test_split
from .metrics import (
    MetricKind,
    accuracy,
    adversarial_accuracy_empirical,
    adversarial_accuracy_exact_tree,
    ensemble_diversity,
    max_regret_empirical,
)
from .perturb import Perturbation, apply, sample_uniform

logger = logging.getLogger(__name__)

VARIANTS = {
    # name -> (same_input, composer tag)
    "nash": (False, "nash"),
    "equal": (False, "equal"),
    "nash_same_input": (True, "nash"),
    "equal_same_input": (True, "equal"),
    "champion": (False, "champion"),
}


@dataclass
class DatasetSpec:
    path: str
    label: str
    epsilon: float


@dataclass
class ExperimentSpec:
    datasets: list[DatasetSpec]
    variants: list[str] = field(default_factory=lambda: ["nash", "equal"])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    metrics: list[MetricKind] = field(
        default_factory=lambda: [MetricKind.ADVERSARIAL_ACCURACY]
    )
    test_fraction: float = 0.2
    adversarial_samples: int = 200
    max_regret_samples: int = 1000
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in self.variants:
            if name not in VARIANTS:
                raise ValueError(f"unknown variant {name!r}; known: {sorted(VARIANTS)}")
        self.metrics = [MetricKind(m) for m in self.metrics]


def load_experiment_spec(path) -> ExperimentSpec:
    """key=value spec file; datasets are path:label:epsilon triples
    separated by commas, budget overrides use EvolutionConfig key names."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config_text(fh.read())
    datasets = []
    for triple in raw.pop("datasets").split(","):
        p, label, eps = triple.strip().split(":")
        datasets.append(DatasetSpec(path=p, label=label, epsilon=float(eps)))
    kwargs = {}
    for key in ("variants", "seeds", "metrics"):
        if key in raw:
            items = [x.strip() for x in raw.pop(key).split(",")]
            kwargs[key] = [int(x) for x in items] if key == "seeds" else items
    for key in ("test_fraction",):
        if key in raw:
            kwargs[key] = float(raw.pop(key))
    for key in ("adversarial_samples", "max_regret_samples"):
        if key in raw:
            kwargs[key] = int(raw.pop(key))
    overrides = {}
    for key, value in raw.items():
        overrides[key] = json.loads(value) if value.lower() in ("true", "false") else (
            float(value) if "." in value else int(value) if value.lstrip("-").isdigit() else value
        )
    return ExperimentSpec(datasets=datasets, overrides=overrides, **kwargs)


def _cell_config(spec: ExperimentSpec, ds_spec: DatasetSpec, metric: MetricKind,
                 seed: int, **extra) -> EvolutionConfig:
    base = dict(spec.overrides)
    base.update(extra)
    return desk_config(epsilon=ds_spec.epsilon, metric=metric, seed=seed, **base)


def _load_split(ds_spec: DatasetSpec, test_fraction: float, seed: int):
    raw = load_csv(ds_spec.path, ds_spec.label)
    ds, _ = normalize(raw)
    rng = np.random.default_rng(splitmix64(seed, 1 << 32))
    return ds, *train_test_split(ds, test_fraction, rng)


def fit_deltas(p: Perturbation, m_target: int) -> Perturbation:
    """Resize a perturbation's delta rows to another instance count by
    slicing or tiling; the ball bound is preserved row-wise."""
    m = p.deltas.shape[0]
    if m == m_target:
        return p
    if m > m_target:
        deltas = p.deltas[:m_target]
    else:
        reps = -(-m_target // m)
        deltas = np.tile(p.deltas, (reps, 1))[:m_target]
    return Perturbation(deltas=deltas.copy(), epsilon=p.epsilon)


def diversity_eval_set(result, ds: Dataset, per_island: int = 10) -> np.ndarray:
    """Union of each island's fittest perturbations applied to the given
    dataset (delta rows resized to fit)."""
    chunks = []
    for isl in result.islands:
        order = np.argsort(-isl.pert_fitness, kind="stable")[:per_island]
        for j in order:
            p = fit_deltas(isl.perts[j], ds.n_instances)
            chunks.append(apply(p, ds.instances))
    return np.concatenate(chunks, axis=0)


def _model_rows(model, test_ds: Dataset, epsilon: float, spec: ExperimentSpec,
                seed: int, cart_params) -> list[tuple[str, float]]:
    X, y = test_ds.instances, test_ds.labels
    rng_adv = np.random.default_rng(splitmix64(seed, 7))
    pert_set = [
        sample_uniform(*X.shape, epsilon, rng_adv)
        for _ in range(max(1, spec.adversarial_samples))
    ]
    rows = [
        ("clean_accuracy", accuracy(model, X, y)),
        ("adversarial_accuracy_empirical",
         adversarial_accuracy_empirical(model, X, y, pert_set)),
    ]
    if hasattr(model, "n_features"):  # single tree: exact value available
        rows.append(("adversarial_accuracy_exact",
                     adversarial_accuracy_exact_tree(model, X, y, epsilon)))
    rng_reg = np.random.default_rng(splitmix64(seed, 8))
    rows.append(("max_regret_empirical",
                 max_regret_empirical(model, X, y, epsilon, spec.max_regret_samples,
                                      rng_reg, cart_params)))
    return rows


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Long-format result rows: one per (dataset, train metric, variant,
    seed, evaluation metric)."""
    rows: list[dict] = []
    for ds_spec in spec.datasets:
        for metric in spec.metrics:
            for seed in spec.seeds:
                try:
                    _, train_ds, test_ds = _load_split(ds_spec, spec.test_fraction, seed)
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    rows.append({"dataset": ds_spec.path, "error": str(exc)})
                    continue
                # one archipelago run per input mode, shared by its variants
                by_mode: dict[bool, object] = {}
                for variant in spec.variants:
                    same_input, composer = VARIANTS[variant]
                    try:
                        if same_input not in by_mode:
                            cfg = _cell_config(spec, ds_spec, metric, seed,
                                               same_input=same_input)
                            by_mode[same_input] = (archipelago.run(train_ds, cfg), cfg)
                        result, cfg = by_mode[same_input]
                        if composer == "nash":
                            model = ensemble.compose_nash(result, train_ds, cfg)
                        elif composer == "equal":
                            model = ensemble.compose_equal(result)
                        else:
                            model = result.global_best_tree
                        for name, value in _model_rows(
                            model, test_ds, ds_spec.epsilon, spec, seed, cfg.cart_params
                        ):
                            rows.append({
                                "dataset": os.path.basename(ds_spec.path),
                                "train_metric": metric.value,
                                "variant": variant,
                                "seed": seed,
                                "metric": name,
                                "value": value,
                            })
                        if composer in ("nash", "equal"):
                            pts = diversity_eval_set(result, test_ds)
                            trees = [t for t, _ in model.members]
                            if len(trees) >= 2:
                                avg, mx = ensemble_diversity(trees, pts)
                                for name, value in (("external_avg_div", avg),
                                                    ("external_max_div", mx)):
                                    rows.append({
                                        "dataset": os.path.basename(ds_spec.path),
                                        "train_metric": metric.value,
                                        "variant": variant,
                                        "seed": seed,
                                        "metric": name,
                                        "value": value,
                                    })
                    except Exception as exc:  # noqa: BLE001 - cell isolation
                        logger.warning("cell failed: %s/%s/%s: %s",
                                       ds_spec.path, variant, seed, exc)
                        rows.append({
                            "dataset": os.path.basename(ds_spec.path),
                            "train_metric": metric.value,
                            "variant": variant,
                            "seed": seed,
                            "error": str(exc),
                        })
    return rows


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and standard deviation per (dataset, train metric, variant,
    evaluation metric) over seeds."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if "error" in row or "value" not in row:
            continue
        key = (row["dataset"], row["train_metric"], row["variant"], row["metric"])
        groups.setdefault(key, []).append(row["value"])
    out = []
    for key, values in sorted(groups.items()):
        arr = np.asarray(values)
        out.append({
            "dataset": key[0], "train_metric": key[1], "variant": key[2],
            "metric": key[3], "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "n": int(arr.size),
        })
    return out


def compare_single_tree(spec: ExperimentSpec) -> list[dict]:
    """Champion-tree comparison: one island, independent islands (no
    migration, best-of), and the full archipelago with migration."""
    rows: list[dict] = []
    for ds_spec in spec.datasets:
        for metric in spec.metrics:
            for seed in spec.seeds:
                _, train_ds, test_ds = _load_split(ds_spec, spec.test_fraction, seed)
                base = _cell_config(spec, ds_spec, metric, seed)
                island_seeds = tuple(
                    splitmix64(seed, i) for i in range(base.n_islands)
                )
                modes = {
                    "single_island": base.with_overrides(
                        n_islands=1, island_seeds=(island_seeds[0],)
                    ),
                    "independent_islands": base.with_overrides(
                        migrants_per_neighbor=0, island_seeds=island_seeds
                    ),
                    "migration": base.with_overrides(island_seeds=island_seeds),
                }
                for mode, cfg in modes.items():
                    result = archipelago.run(train_ds, cfg)
                    champion = result.global_best_tree
                    for name, value in _model_rows(
                        champion, test_ds, ds_spec.epsilon, spec, seed, cfg.cart_params
                    ):
                        rows.append({
                            "dataset": os.path.basename(ds_spec.path),
                            "train_metric": metric.value,
                            "mode": mode,
                            "seed": seed,
                            "metric": name,
                            "value": value,
                        })
    return rows


def write_results(rows: list[dict], out_dir: str, name: str = "experiment") -> str:
    """Long CSV, aggregate CSV and a manifest under a timestamped directory."""
    stamp = time.strftime("%Y%m%d-%H%M%S")
    target = os.path.join(out_dir, f"{name}-{stamp}")
    os.makedirs(target, exist_ok=True)
    keys: list[str] = []
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    with open(os.path.join(target, "results.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
    agg = aggregate(rows)
    if agg:
        with open(os.path.join(target, "aggregate.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(agg[0].keys()))
            writer.writeheader()
            writer.writerows(agg)
    with open(os.path.join(target, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"rows": len(rows), "created": stamp, "name": name}, fh, indent=2)
        fh.write("\n")
    return target


# --- bundled synthetic datasets -------------------------------------------

def make_xor_blocks(n: int, rng: np.random.Generator, margin: float = 0.1) -> Dataset:
    """Two classes on the four quadrants of [0,1]^2 in an XOR pattern, with
    every point at least `margin` away from the 0.5 decision lines.

    Tree-separable with full robustness headroom for epsilon < margin, yet
    a single split carries no signal, so random shallow trees start weak.
    """
    quadrant = rng.integers(0, 4, size=n)
    low = rng.uniform(0.0, 0.5 - margin, size=(n, 2))
    high = rng.uniform(0.5 + margin, 1.0, size=(n, 2))
    x0 = np.where(quadrant % 2 == 1, high[:, 0], low[:, 0])
    x1 = np.where(quadrant // 2 == 1, high[:, 1], low[:, 1])
    labels = ((quadrant % 2) ^ (quadrant // 2)).astype(int)
    return Dataset(
        instances=np.column_stack([x0, x1]),
        labels=labels,
        num_classes=2,
        feature_names=("x0", "x1"),
        name="xor_blocks",
    )


def make_two_moons(n: int, rng: np.random.Generator, noise: float = 0.05) -> Dataset:
    """Interleaved half-circles, min-max scaled into the unit square."""
    half = n // 2
    t1 = rng.uniform(0, np.pi, size=half)
    t2 = rng.uniform(0, np.pi, size=n - half)
    upper = np.column_stack([np.cos(t1), np.sin(t1)])
    lower = np.column_stack([1.0 - np.cos(t2), 0.5 - np.sin(t2)])
    pts = np.vstack([upper, lower]) + rng.normal(0.0, noise, size=(n, 2))
    labels = np.concatenate([np.zeros(half, int), np.ones(n - half, int)])
    mins, maxs = pts.min(axis=0), pts.max(axis=0)
    pts = (pts - mins) / (maxs - mins)
    return Dataset(
        instances=pts,
        labels=labels,
        num_classes=2,
        feature_names=("x0", "x1"),
        name="moons",
    )


def dataset_to_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + ["label"])
        for row, label in zip(ds.instances, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
