"""Variant comparison and ensemble diversity with the bench harness.

Runs the voting-by-input ablation grid at a small budget and reports the
prediction-disagreement diversity of the resulting ensembles.  Variants
inside one (dataset, seed) cell share splits and island seed streams, so
differences isolate the variant under test.
"""

import os

from coevoforest.bench import (
    DatasetSpec,
    ExperimentSpec,
    aggregate,
    compare_single_tree,
    run_experiment,
)

HERE = os.path.dirname(__file__)
XOR = os.path.join(HERE, "..", "datasets", "xor_blocks.csv")

spec = ExperimentSpec(
    datasets=[DatasetSpec(path=XOR, label="label", epsilon=0.05)],
    variants=["nash", "equal", "nash_same_input", "equal_same_input"],
    seeds=[0, 1, 2],
    adversarial_samples=100,
    max_regret_samples=50,
    overrides=dict(generation_limit=30),
)

rows = run_experiment(spec)
print("aggregate over 3 seeds (mean +/- std)")
for entry in aggregate(rows):
    if entry["metric"] in ("adversarial_accuracy_empirical", "external_avg_div"):
        print(f"  {entry['variant']:>18s} {entry['metric']:<32s} "
              f"{entry['mean']:.3f} +/- {entry['std']:.3f}")

# Single-tree mode: one island vs. independent restarts vs. migration.
print("\nchampion-tree comparison (exact adversarial accuracy on the test split)")
single_spec = ExperimentSpec(
    datasets=[DatasetSpec(path=XOR, label="label", epsilon=0.05)],
    seeds=[0, 1],
    overrides=dict(generation_limit=30),
)
for row in compare_single_tree(single_spec):
    if row["metric"] == "adversarial_accuracy_exact":
        print(f"  seed {row['seed']} {row['mode']:>20s}: {row['value']:.3f}")
