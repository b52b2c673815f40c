#!/usr/bin/env python3
"""Export the bundled scikit-learn copy of the WDBC dataset to CSV.

Writes data/wdbc.csv with the 30 real-valued features and a `label`
column (0 = malignant, 1 = benign), 569 rows. Run from the repo root:

    python3 tools/export_wdbc.py
"""

import os

from sklearn.datasets import load_breast_cancer


def main() -> None:
    data = load_breast_cancer()
    n, d = data.data.shape
    assert (n, d) == (569, 30), f"unexpected WDBC shape {(n, d)}"

    out_path = os.path.join(os.path.dirname(__file__), "..", "data", "wdbc.csv")
    os.makedirs(os.path.dirname(out_path), exist_ok=True)

    feature_names = [name.replace(" ", "_") for name in data.feature_names]
    with open(out_path, "w") as fh:
        fh.write(",".join(feature_names + ["label"]) + "\n")
        for row, target in zip(data.data, data.target):
            cells = [repr(float(v)) for v in row] + [str(int(target))]
            fh.write(",".join(cells) + "\n")

    benign = int(data.target.sum())
    print(f"wrote {out_path}: {n} rows, {d} features, {n - benign} malignant / {benign} benign")


if __name__ == "__main__":
    main()
