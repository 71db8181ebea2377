"""Dataset loading, normalization, splitting and per-island bootstrap views.

All features are treated as numeric and are min-max scaled to [0, 1] before
training so that a single perturbation radius is meaningful across features.
Categorical features must be pre-encoded by the caller.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data (parse failures, bad shapes)."""


@dataclass(frozen=True)
class Dataset:
    """An in-memory classification dataset.

    instances is an (m, d) float array with every value in [0, 1] once
    normalized; labels is a length-m int array of dense class indices in
    [0, num_classes).
    """

    instances: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_names: tuple[str, ...]
    name: str = "dataset"

    def __post_init__(self):
        inst = np.asarray(self.instances, dtype=float)
        lab = np.asarray(self.labels, dtype=int)
        if inst.ndim != 2:
            raise DataError(f"instances must be 2-d, got shape {inst.shape}")
        if inst.shape[0] != lab.shape[0]:
            raise DataError(
                f"{inst.shape[0]} instances but {lab.shape[0]} labels"
            )
        if inst.shape[0] < 1 or inst.shape[1] < 1:
            raise DataError("dataset must have at least one row and one feature")
        if self.num_classes < 2:
            raise DataError("fewer than 2 classes")
        if lab.size and (lab.min() < 0 or lab.max() >= self.num_classes):
            raise DataError("labels must lie in [0, num_classes)")
        if len(self.feature_names) != inst.shape[1]:
            raise DataError("feature_names length must equal feature count")
        inst.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "instances", inst)
        object.__setattr__(self, "labels", lab)

    @property
    def n_instances(self) -> int:
        return self.instances.shape[0]

    @property
    def n_features(self) -> int:
        return self.instances.shape[1]


@dataclass(frozen=True)
class BootstrapView:
    """A with-replacement row sample of a source dataset.

    Holds exactly m = len(source) indices; duplicates are permitted.  The
    identity view (indices = 0..m-1) is used for same-input ablations.
    """

    source: Dataset
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        m = self.source.n_instances
        if idx.shape != (m,):
            raise DataError(f"view needs exactly {m} indices, got {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= m):
            raise DataError("view index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def instances(self) -> np.ndarray:
        return self.source.instances[self.indices]

    @property
    def labels(self) -> np.ndarray:
        return self.source.labels[self.indices]

    @property
    def n_instances(self) -> int:
        return self.indices.shape[0]

    @property
    def n_features(self) -> int:
        return self.source.n_features


@dataclass(frozen=True)
class ScalingRecord:
    """Per-feature (min, max) pairs recorded by normalize for round-tripping."""

    minima: np.ndarray
    maxima: np.ndarray

    def to_original(self, scaled: np.ndarray) -> np.ndarray:
        span = self.maxima - self.minima
        return scaled * span + self.minima


def load_csv(path, label_column) -> Dataset:
    """Load a raw (unnormalized) dataset from a CSV file with a header row.

    label_column selects the label by header name or 0-based index; labels
    are mapped to dense indices in first-appearance order.  Every other
    column must parse as a finite float; missing values are not supported.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]

    if not rows:
        raise DataError(f"{path}: no data rows")

    if isinstance(label_column, int) or (
        isinstance(label_column, str) and label_column.lstrip("-").isdigit()
    ):
        label_idx = int(label_column)
        if not 0 <= label_idx < len(header):
            raise DataError(f"label column index {label_idx} out of range")
    else:
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise DataError(
                f"label column {label_column!r} not in header {header}"
            ) from None

    feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
    label_map: dict[str, int] = {}
    features = np.empty((len(rows), len(feature_names)), dtype=float)
    labels = np.empty(len(rows), dtype=int)

    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
        raw_label = row[label_idx]
        if raw_label not in label_map:
            label_map[raw_label] = len(label_map)
        labels[r] = label_map[raw_label]
        c = 0
        for i, cell in enumerate(row):
            if i == label_idx:
                continue
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {r + 2}, column {header[i]!r}"
                ) from None
            if not np.isfinite(value):
                raise DataError(
                    f"{path}: non-finite value at row {r + 2}, column {header[i]!r}"
                )
            features[r, c] = value
            c += 1

    if len(label_map) < 2:
        raise DataError(f"{path}: fewer than 2 classes")

    return Dataset(
        instances=features,
        labels=labels,
        num_classes=len(label_map),
        feature_names=feature_names,
        name=os.path.splitext(os.path.basename(str(path)))[0],
    )


def normalize(raw: Dataset) -> tuple[Dataset, ScalingRecord]:
    """Min-max scale every feature to [0, 1]; constant features map to 0.0.

    Idempotent: normalizing an already-normalized dataset leaves values
    unchanged.
    """
    minima = raw.instances.min(axis=0)
    maxima = raw.instances.max(axis=0)
    span = maxima - minima
    safe = np.where(span > 0, span, 1.0)
    scaled = (raw.instances - minima) / safe
    scaled = np.clip(scaled, 0.0, 1.0)
    ds = Dataset(
        instances=scaled,
        labels=raw.labels,
        num_classes=raw.num_classes,
        feature_names=raw.feature_names,
        name=raw.name,
    )
    return ds, ScalingRecord(minima=minima, maxima=maxima)


def bootstrap_sample(ds: Dataset, rng: np.random.Generator) -> BootstrapView:
    """Draw m row indices uniformly with replacement; deterministic per seed."""
    m = ds.n_instances
    return BootstrapView(source=ds, indices=rng.integers(0, m, size=m))


def identity_view(ds: Dataset) -> BootstrapView:
    return BootstrapView(source=ds, indices=np.arange(ds.n_instances))


def train_test_split(
    ds: Dataset, test_fraction: float, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Disjoint stratified split; per-class rounding of the test share.

    The two index sets partition the source rows.  Deterministic for a
    fixed generator state.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    test_idx: list[np.ndarray] = []
    train_idx: list[np.ndarray] = []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        perm = members[rng.permutation(members.size)]
        n_test = int(round(members.size * test_fraction))
        n_test = min(n_test, members.size)
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.empty(0, int)
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.empty(0, int)
    if train.size < 2:
        raise DataError("train split would have fewer than 2 instances")

    def subset(idx: np.ndarray, tag: str) -> Dataset:
        return Dataset(
            instances=ds.instances[idx],
            labels=ds.labels[idx],
            num_classes=ds.num_classes,
            feature_names=ds.feature_names,
            name=f"{ds.name}-{tag}",
        )

    return subset(train, "train"), subset(test, "test")
