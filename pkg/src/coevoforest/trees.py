"""Axis-aligned binary decision trees and their genetic operators.

Trees are immutable values: every operator returns a new tree and never
touches its inputs, so trees can be shared freely between populations and
evaluated concurrently.  The routing convention is fixed: an instance goes
left iff x[feature] <= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

DEFAULT_MAX_DEPTH = 10
INIT_MAX_DEPTH = 3
LEAF_PROBABILITY = 0.3


@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Split]


@dataclass(frozen=True)
class LeafRegion:
    """Axis-aligned box reached by one leaf.

    The box interior is (lower, upper] on every feature that carries a
    split-induced lower bound (lower_open marks those); the lower side is
    closed at the domain floor.  Regions of one tree partition [0, 1]^d.
    """

    lower: np.ndarray
    upper: np.ndarray
    lower_open: np.ndarray
    label: int


@dataclass(frozen=True)
class DecisionTree:
    """A classifier over [0, 1]^d with integer class leaves."""

    root: Node
    n_features: int
    n_classes: int

    def predict(self, x) -> int:
        node = self.root
        while isinstance(node, Split):
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        """Vectorized prediction for an (n, d) matrix."""
        X = np.asarray(X)
        out = np.empty(X.shape[0], dtype=np.int64)
        _route(self.root, X, np.arange(X.shape[0]), out)
        return out

    def depth(self) -> int:
        return _depth(self.root)

    def node_count(self) -> int:
        return _count(self.root)

    def nodes(self) -> list[Node]:
        """All nodes in preorder; index order is the node-selection order."""
        acc: list[Node] = []
        _collect(self.root, acc)
        return acc

    def validate(self) -> None:
        """Raise ValueError if any structural invariant is violated."""
        _validate(self.root, self.n_features, self.n_classes)

    def to_dict(self) -> dict:
        return _node_to_dict(self.root)

    @classmethod
    def from_dict(cls, obj: dict, n_features: int, n_classes: int) -> "DecisionTree":
        tree = cls(root=_node_from_dict(obj), n_features=n_features, n_classes=n_classes)
        tree.validate()
        return tree


def _route(node: Node, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[idx] = node.label
        return
    go_left = X[idx, node.feature] <= node.threshold
    left, right = node.left, node.right
    if isinstance(left, Leaf) and isinstance(right, Leaf):
        out[idx] = np.where(go_left, left.label, right.label)
        return
    left_idx = idx[go_left]
    right_idx = idx[~go_left]
    if left_idx.size:
        _route(left, X, left_idx, out)
    if right_idx.size:
        _route(right, X, right_idx, out)


def _depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(_depth(node.left), _depth(node.right))


def _count(node: Node) -> int:
    if isinstance(node, Leaf):
        return 1
    return 1 + _count(node.left) + _count(node.right)


def _collect(node: Node, acc: list) -> None:
    acc.append(node)
    if isinstance(node, Split):
        _collect(node.left, acc)
        _collect(node.right, acc)


def _validate(node: Node, d: int, c: int) -> None:
    if isinstance(node, Leaf):
        if not 0 <= node.label < c:
            raise ValueError(f"leaf class {node.label} outside [0, {c})")
        return
    if not 0 <= node.feature < d:
        raise ValueError(f"split feature {node.feature} outside [0, {d})")
    if not 0.0 <= node.threshold <= 1.0:
        raise ValueError(f"threshold {node.threshold} outside [0, 1]")
    _validate(node.left, d, c)
    _validate(node.right, d, c)


def _node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"class": int(node.label)}
    return {
        "feature": int(node.feature),
        "threshold": float(node.threshold),
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(obj: dict) -> Node:
    if "class" in obj:
        return Leaf(label=int(obj["class"]))
    return Split(
        feature=int(obj["feature"]),
        threshold=float(obj["threshold"]),
        left=_node_from_dict(obj["left"]),
        right=_node_from_dict(obj["right"]),
    )


def random_tree(
    max_depth: int, n_features: int, n_classes: int, rng: np.random.Generator
) -> DecisionTree:
    """Grow a random tree of depth <= max_depth.

    Each candidate node becomes a leaf with probability 0.3 (forced at the
    depth limit); split features, thresholds and leaf classes are uniform.
    """
    return DecisionTree(
        root=_grow(max_depth, n_features, n_classes, rng),
        n_features=n_features,
        n_classes=n_classes,
    )


def _grow(budget: int, d: int, c: int, rng: np.random.Generator) -> Node:
    if budget <= 0 or rng.random() < LEAF_PROBABILITY:
        return Leaf(label=int(rng.integers(c)))
    return Split(
        feature=int(rng.integers(d)),
        threshold=float(rng.random()),
        left=_grow(budget - 1, d, c, rng),
        right=_grow(budget - 1, d, c, rng),
    )


def majority_leaf_label(node: Node) -> int:
    """Most frequent leaf class in a subtree, counting leaves; ties pick the
    lowest class index."""
    counts: dict[int, int] = {}
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Leaf):
            counts[n.label] = counts.get(n.label, 0) + 1
        else:
            stack.append(n.right)
            stack.append(n.left)
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def truncate(tree: DecisionTree, max_depth: int) -> DecisionTree:
    """Prune every subtree rooted deeper than max_depth to its majority leaf."""

    def rec(node: Node, budget: int) -> Node:
        if isinstance(node, Leaf):
            return node
        if budget <= 0:
            return Leaf(label=majority_leaf_label(node))
        left = rec(node.left, budget - 1)
        right = rec(node.right, budget - 1)
        if left is node.left and right is node.right:
            return node
        return Split(node.feature, node.threshold, left, right)

    root = rec(tree.root, max_depth)
    if root is tree.root:
        return tree
    return DecisionTree(root=root, n_features=tree.n_features, n_classes=tree.n_classes)


def _replace_at(node: Node, index: int, replacement: Node) -> Node:
    """Rebuild `node` with the preorder node at `index` (0 = this node)
    swapped for `replacement`."""
    if index == 0:
        return replacement
    assert isinstance(node, Split)
    left_size = _count(node.left)
    if index - 1 < left_size:
        new_left = _replace_at(node.left, index - 1, replacement)
        return Split(node.feature, node.threshold, new_left, node.right)
    new_right = _replace_at(node.right, index - 1 - left_size, replacement)
    return Split(node.feature, node.threshold, node.left, new_right)


def _subtree_at(node: Node, index: int) -> Node:
    if index == 0:
        return node
    assert isinstance(node, Split)
    left_size = _count(node.left)
    if index - 1 < left_size:
        return _subtree_at(node.left, index - 1)
    return _subtree_at(node.right, index - 1 - left_size)


def mutate_tree(
    tree: DecisionTree,
    rng: np.random.Generator,
    max_depth: int = DEFAULT_MAX_DEPTH,
    init_depth: int = INIT_MAX_DEPTH,
) -> DecisionTree:
    """One mutation chosen uniformly among: subtree replacement with a fresh
    random tree, node content re-randomization, or pruning an internal
    subtree to its majority leaf.

    Pruning is unavailable on single-leaf trees, in which case the choice
    falls back uniformly to the other two actions.  The result is truncated
    to the global depth cap; the input is left unmodified.
    """
    nodes = tree.nodes()
    internal = [i for i, n in enumerate(nodes) if isinstance(n, Split)]
    actions = ("replace", "rewrite", "prune") if internal else ("replace", "rewrite")
    action = actions[int(rng.integers(len(actions)))]

    if action == "replace":
        target = int(rng.integers(len(nodes)))
        fresh = _grow(init_depth, tree.n_features, tree.n_classes, rng)
        root = _replace_at(tree.root, target, fresh)
    elif action == "rewrite":
        target = int(rng.integers(len(nodes)))
        old = nodes[target]
        if isinstance(old, Leaf):
            new_node: Node = Leaf(label=int(rng.integers(tree.n_classes)))
        else:
            new_node = Split(
                feature=int(rng.integers(tree.n_features)),
                threshold=float(rng.random()),
                left=old.left,
                right=old.right,
            )
        root = _replace_at(tree.root, target, new_node)
    else:
        target = internal[int(rng.integers(len(internal)))]
        pruned = Leaf(label=majority_leaf_label(nodes[target]))
        root = _replace_at(tree.root, target, pruned)

    out = DecisionTree(root=root, n_features=tree.n_features, n_classes=tree.n_classes)
    return truncate(out, max_depth)


def crossover_trees(
    t1: DecisionTree,
    t2: DecisionTree,
    rng: np.random.Generator,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> tuple[DecisionTree, DecisionTree]:
    """Swap one uniformly chosen subtree of each parent; truncate offspring
    to the depth cap.  Parents are unmodified."""
    i1 = int(rng.integers(t1.node_count()))
    i2 = int(rng.integers(t2.node_count()))
    s1 = _subtree_at(t1.root, i1)
    s2 = _subtree_at(t2.root, i2)
    r1 = _replace_at(t1.root, i1, s2)
    r2 = _replace_at(t2.root, i2, s1)
    c1 = truncate(DecisionTree(r1, t1.n_features, t1.n_classes), max_depth)
    c2 = truncate(DecisionTree(r2, t2.n_features, t2.n_classes), max_depth)
    return c1, c2


def leaf_regions(tree: DecisionTree) -> list[LeafRegion]:
    """Depth-first decomposition of [0, 1]^d into per-leaf boxes.

    Left children tighten the (closed) upper bound to the threshold; right
    children raise the lower bound, which becomes open there because equal
    values route left.
    """
    d = tree.n_features
    regions: list[LeafRegion] = []

    def rec(node: Node, lower, upper, lower_open):
        if isinstance(node, Leaf):
            regions.append(
                LeafRegion(
                    lower=lower.copy(),
                    upper=upper.copy(),
                    lower_open=lower_open.copy(),
                    label=node.label,
                )
            )
            return
        f, t = node.feature, node.threshold
        lo, up, op = lower[f], upper[f], lower_open[f]
        upper[f] = min(up, t)
        rec(node.left, lower, upper, lower_open)
        upper[f] = up
        lower[f] = max(lo, t)
        lower_open[f] = True if t >= lo else op
        rec(node.right, lower, upper, lower_open)
        lower[f] = lo
        lower_open[f] = op

    rec(
        tree.root,
        np.zeros(d),
        np.ones(d),
        np.zeros(d, dtype=bool),
    )
    return regions
