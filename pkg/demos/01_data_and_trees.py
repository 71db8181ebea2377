"""Datasets, decision-tree genomes, and exact adversarial accuracy.

Walks through the data pipeline (CSV -> normalized dataset -> split),
random tree generation, prediction, and the leaf-region view that makes
worst-case accuracy computable in closed form for a single tree.
"""

import os

import numpy as np

from coevoforest.data import load_csv, normalize, train_test_split
from coevoforest.metrics import (
    accuracy,
    adversarial_accuracy_empirical,
    adversarial_accuracy_exact_tree,
    train_cart,
)
from coevoforest.perturb import sample_uniform
from coevoforest.trees import leaf_regions, random_tree

HERE = os.path.dirname(__file__)
rng = np.random.default_rng(0)

# Every feature is min-max scaled to [0, 1] so that one perturbation radius
# epsilon means the same thing on every axis.
raw = load_csv(os.path.join(HERE, "..", "datasets", "moons.csv"), "label")
dataset, scaling = normalize(raw)
train, test = train_test_split(dataset, 0.2, rng)
print(f"{dataset.name}: {train.n_instances} train / {test.n_instances} test rows, "
      f"{dataset.n_features} features, {dataset.num_classes} classes")

# A random shallow tree: the unit of the evolutionary search.
tree = random_tree(3, dataset.n_features, dataset.num_classes, rng)
print(f"\nrandom tree: depth {tree.depth()}, {tree.node_count()} nodes")
print(f"clean accuracy on test: {accuracy(tree, test.instances, test.labels):.3f}")

# Each leaf owns an axis-aligned box; the boxes partition the unit cube.
regions = leaf_regions(tree)
print(f"leaf regions: {len(regions)} boxes partitioning [0,1]^{dataset.n_features}")

# Exact adversarial accuracy asks: inside the L-infinity ball of radius
# epsilon around an instance, can any point reach a wrong-class region?
# For single trees this is answered exactly from the region geometry.
eps = 0.05
cart = train_cart(train.instances, train.labels, max_depth=5)
exact = adversarial_accuracy_exact_tree(cart, test.instances, test.labels, eps)
clean = accuracy(cart, test.instances, test.labels)
print(f"\nCART reference tree: clean {clean:.3f}, exact adversarial (eps={eps}) {exact:.3f}")

# The empirical estimate only sees sampled perturbations, so it can only
# overestimate the true worst case; more samples tighten it.
for n in (5, 50, 500):
    perts = [sample_uniform(test.n_instances, test.n_features, eps,
                            np.random.default_rng(1)) for _ in range(n)]
    est = adversarial_accuracy_empirical(cart, test.instances, test.labels, perts)
    print(f"empirical adversarial accuracy with {n:4d} perturbations: {est:.3f} (>= exact)")
