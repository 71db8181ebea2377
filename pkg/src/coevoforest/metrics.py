"""Evaluation quantities: accuracy, adversarial accuracy, regret, diversity.

Adversarial accuracy is exact for single trees (leaf-region reachability
inside the epsilon ball) and empirical for ensembles, where it is estimated
against a finite perturbation set and upper-bounds the true value.  Regret
is measured against a greedy CART reference trained per perturbation.

Predictors are duck-typed: anything with a ``predict_batch(X)`` method
(a DecisionTree or a Forest) is accepted.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .perturb import Perturbation, apply
from .trees import DecisionTree, Leaf, Node, Split, leaf_regions


class MetricKind(enum.Enum):
    """Which robustness objective drives fitness and payoffs.

    Adversarial accuracy is maximized; max regret is minimized (payoffs and
    fitness are negated so that higher is always fitter).
    """

    ADVERSARIAL_ACCURACY = "adversarial_accuracy"
    MAX_REGRET = "max_regret"


@dataclass(frozen=True)
class CartParams:
    max_depth: int = 10
    min_leaf: int = 2


def accuracy(predictor, instances: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of instances whose predicted class equals the true class."""
    instances = np.asarray(instances)
    labels = np.asarray(labels)
    if instances.shape[0] == 0:
        raise ValueError("cannot compute accuracy on an empty instance set")
    return float(np.mean(predictor.predict_batch(instances) == labels))


def _instances_of(view) -> np.ndarray:
    return view.instances if hasattr(view, "instances") else np.asarray(view)


def adversarial_robustness_mask(
    tree: DecisionTree,
    instances: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
) -> np.ndarray:
    """Per-instance exact robustness indicators for a single tree.

    An instance counts as robust iff every leaf region reachable from its
    ball carries the true class.  Reachability honours the routing rule:
    split-induced lower box sides are open because equal values go left.
    """
    instances = np.asarray(instances, dtype=float)
    labels = np.asarray(labels)
    if instances.shape[0] == 0:
        raise ValueError("cannot compute adversarial accuracy on an empty instance set")
    regions = leaf_regions(tree)
    lower = np.array([r.lower for r in regions])
    upper = np.array([r.upper for r in regions])
    lopen = np.array([r.lower_open for r in regions])
    rlabel = np.array([r.label for r in regions])

    ball_lo = np.clip(instances - epsilon, 0.0, 1.0)
    ball_hi = np.clip(instances + epsilon, 0.0, 1.0)

    m, d = instances.shape
    n_regions = lower.shape[0]
    robust = np.empty(m, dtype=bool)
    chunk = max(1, int(2**20 // max(1, n_regions * d)))
    for start in range(0, m, chunk):
        sl = slice(start, min(start + chunk, m))
        a = ball_lo[sl][None, :, :]
        b = ball_hi[sl][None, :, :]
        ub = np.minimum(upper[:, None, :], b)
        open_ok = (ub > lower[:, None, :]) & (ub >= a)
        closed_ok = ub >= np.maximum(lower[:, None, :], a)
        reach = np.where(lopen[:, None, :], open_ok, closed_ok).all(axis=2)
        wrong = rlabel[:, None] != labels[sl][None, :]
        robust[sl] = ~(reach & wrong).any(axis=0)
    return robust


def adversarial_accuracy_exact_tree(
    tree: DecisionTree,
    instances: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
) -> float:
    """Exact worst-case accuracy of a single tree under the epsilon ball."""
    return float(adversarial_robustness_mask(tree, instances, labels, epsilon).mean())


def adversarial_accuracy_empirical(
    predictor,
    view,
    labels: np.ndarray,
    perturbation_set: Sequence[Perturbation],
) -> float:
    """Worst-case accuracy over a finite perturbation set.

    Upper-bounds the exact value for single trees; the bound tightens as
    the set grows toward the full ball.
    """
    if len(perturbation_set) == 0:
        raise ValueError("perturbation set is empty")
    base = _instances_of(view)
    labels = np.asarray(labels)
    m = base.shape[0]
    stacked = np.concatenate([apply(p, base) for p in perturbation_set], axis=0)
    preds = predictor.predict_batch(stacked).reshape(len(perturbation_set), m)
    per_instance = (preds == labels[None, :]).all(axis=0)
    return float(per_instance.mean())


def _gini_counts(counts: np.ndarray, total: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = counts / total[..., None]
        g = 1.0 - np.sum(frac * frac, axis=-1)
    return np.where(total > 0, g, 0.0)


def _best_split(X, y, n_classes, min_leaf):
    """Lowest weighted-Gini split with both children >= min_leaf.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values.  Ties resolve to the lowest feature index, then the lowest
    threshold, so training is deterministic.
    """
    n, d = X.shape
    best = None  # (impurity, feature, threshold)
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        vals = X[order, f]
        change = np.flatnonzero(vals[:-1] != vals[1:])
        if change.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[order]] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[change]
        left_n = (change + 1).astype(float)
        right_counts = cum[-1][None, :] - left_counts
        right_n = n - left_n
        ok = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not ok.any():
            continue
        weighted = (
            left_n / n * _gini_counts(left_counts, left_n)
            + right_n / n * _gini_counts(right_counts, right_n)
        )
        weighted = np.where(ok, weighted, np.inf)
        pos = int(np.argmin(weighted))
        if not np.isfinite(weighted[pos]):
            continue
        threshold = float((vals[pos] + vals[pos + 1]) / 2.0)
        if best is None or weighted[pos] < best[0]:
            best = (float(weighted[pos]), f, threshold)
    return best


def train_cart(
    instances: np.ndarray,
    labels: np.ndarray,
    max_depth: int = 10,
    min_leaf: int = 2,
    n_classes: int | None = None,
) -> DecisionTree:
    """Greedy top-down Gini tree; deterministic for identical inputs."""
    X = np.asarray(instances, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if n_classes is None:
        n_classes = int(y.max()) + 1

    def majority(sub_y: np.ndarray) -> Leaf:
        return Leaf(label=int(np.argmax(np.bincount(sub_y, minlength=n_classes))))

    def build(idx: np.ndarray, depth: int) -> Node:
        sub_y = y[idx]
        if depth >= max_depth or np.all(sub_y == sub_y[0]):
            return majority(sub_y)
        found = _best_split(X[idx], sub_y, n_classes, min_leaf)
        if found is None:
            return majority(sub_y)
        _, f, t = found
        go_left = X[idx, f] <= t
        return Split(
            feature=f,
            threshold=t,
            left=build(idx[go_left], depth + 1),
            right=build(idx[~go_left], depth + 1),
        )

    return DecisionTree(
        root=build(np.arange(X.shape[0]), 0),
        n_features=X.shape[1],
        n_classes=n_classes,
    )


def reference_accuracy(
    p: Perturbation, view, labels: np.ndarray, cart_params: CartParams = CartParams()
) -> float:
    """Training accuracy of a CART reference fit on the perturbed view.

    Memoized on the perturbation: repeated calls are free and identical.
    """
    if p.cached_reference_accuracy is not None:
        return p.cached_reference_accuracy
    perturbed = apply(p, _instances_of(view))
    labels = np.asarray(labels)
    reference = train_cart(
        perturbed, labels, max_depth=cart_params.max_depth, min_leaf=cart_params.min_leaf
    )
    value = accuracy(reference, perturbed, labels)
    p.cached_reference_accuracy = value
    return value


def regret(
    predictor,
    p: Perturbation,
    view,
    labels: np.ndarray,
    cart_params: CartParams = CartParams(),
) -> float:
    """Reference accuracy minus the predictor's accuracy on the perturbed
    view; negative when the predictor beats the CART reference."""
    perturbed = apply(p, _instances_of(view))
    return reference_accuracy(p, view, labels, cart_params) - accuracy(
        predictor, perturbed, np.asarray(labels)
    )


def max_regret_empirical(
    predictor,
    view,
    labels: np.ndarray,
    epsilon: float,
    n_samples: int,
    rng: np.random.Generator,
    cart_params: CartParams = CartParams(),
) -> float:
    """Max regret over n uniform perturbations plus the zero perturbation.

    A lower bound on the true max regret; drawing samples one at a time
    keeps the sampled set a prefix-extension under a fixed seed, so the
    estimate is nondecreasing in n_samples.
    """
    from .perturb import sample_uniform, zero

    base = _instances_of(view)
    m, d = base.shape
    worst = regret(predictor, zero(m, d, epsilon), base, labels, cart_params)
    for _ in range(n_samples):
        p = sample_uniform(m, d, epsilon, rng)
        worst = max(worst, regret(predictor, p, base, labels, cart_params))
    return worst


def pairwise_diversity(
    t_i: DecisionTree, t_j: DecisionTree, perturbed_instances: np.ndarray
) -> float:
    """Fraction of the given points on which the two trees disagree."""
    pts = np.asarray(perturbed_instances)
    if pts.shape[0] == 0:
        raise ValueError("perturbed instance set is empty")
    return float(np.mean(t_i.predict_batch(pts) != t_j.predict_batch(pts)))


def ensemble_diversity(
    trees: Sequence[DecisionTree], perturbed_instances: np.ndarray
) -> tuple[float, float]:
    """Average and maximum pairwise diversity over all unordered pairs."""
    if len(trees) < 2:
        raise ValueError("ensemble diversity needs at least 2 trees")
    pts = np.asarray(perturbed_instances)
    preds = [t.predict_batch(pts) for t in trees]
    values = []
    for i in range(len(trees) - 1):
        for j in range(i + 1, len(trees)):
            values.append(float(np.mean(preds[i] != preds[j])))
    return float(np.mean(values)), float(np.max(values))
