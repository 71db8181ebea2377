"""Regenerate the bundled CSV datasets under datasets/.

The two synthetic sets are seeded so the files are reproducible; the iris
CSV is a verbatim dump of the classic measurements shipped with
scikit-learn (public domain).
"""

import csv
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from coevoforest.bench import dataset_to_csv, make_two_moons, make_xor_blocks  # noqa: E402

OUT = os.path.join(os.path.dirname(__file__), "..", "datasets")


def write_iris(path):
    from sklearn.datasets import load_iris

    bundle = load_iris()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sepal_length", "sepal_width", "petal_length", "petal_width", "species"])
        for row, label in zip(bundle.data, bundle.target):
            writer.writerow([repr(float(v)) for v in row] + [bundle.target_names[label]])


def main():
    os.makedirs(OUT, exist_ok=True)
    dataset_to_csv(make_xor_blocks(240, np.random.default_rng(7)), os.path.join(OUT, "xor_blocks.csv"))
    dataset_to_csv(make_two_moons(240, np.random.default_rng(7)), os.path.join(OUT, "moons.csv"))
    write_iris(os.path.join(OUT, "iris.csv"))
    print(f"datasets written to {os.path.abspath(OUT)}")


if __name__ == "__main__":
    main()
