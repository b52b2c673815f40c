#!/usr/bin/env python3
"""Generate the synthetic stand-in datasets shipped in data/.

The original Fourclass (LIBSVM) and Pima (UCI) files cannot be
redistributed from this environment, so the repo carries seeded
synthetic analogues with the same instance counts, class balance and
feature counts, tuned so the identity-metric baseline lands in the same
accuracy range as published single-metric results on the originals:

  data/fourclass.libsvm  862 instances (555 / 307), 2 features
  data/pima.csv          768 instances (500 / 268), 8 features

To benchmark against the real datasets instead, download them from the
LIBSVM/UCI repositories and pass their paths to `regionlearn bench`.

    python3 tools/make_standin_data.py
"""

import os

import numpy as np


def gen_fourclass_like(seed=20260810):
    """Two classes in interleaved angular lobes of uneven width: a
    multimodal 2-feature problem that a single global metric cannot
    model well."""
    rng = np.random.default_rng(seed)
    sigma_scale = 1.3
    neg_lobes = [(20, 14, 180), (110, 22, 150), (200, 12, 125), (290, 20, 100)]
    pos_lobes = [(65, 11, 100), (155, 16, 80), (245, 18, 70), (335, 9, 57)]
    rows, labels = [], []
    for lobes, lab in [(neg_lobes, -1), (pos_lobes, 1)]:
        for center_deg, sigma_deg, count in lobes:
            theta = np.deg2rad(center_deg + rng.normal(0, sigma_deg * sigma_scale, count))
            radius = 55.0 * np.abs(rng.normal(1.0, 0.18, count)) + 10.0
            x = np.stack([radius * np.cos(theta), radius * np.sin(theta)], 1)
            x += rng.normal(0, 1.5, x.shape)
            rows.append(x)
            labels.append(np.full(count, lab))
    X = np.concatenate(rows)
    y = np.concatenate(labels)
    order = rng.permutation(len(y))
    return X[order], y[order]


def gen_pima_like(seed=20260811):
    """Two overlapping correlated Gaussian classes in 8 features, the
    positive class shifted along half of them."""
    rng = np.random.default_rng(seed)
    d = 8
    mix = rng.normal(0, 1, (d, d)) * 0.35 + np.eye(d)
    chol = np.linalg.cholesky(mix @ mix.T)
    mu = np.array([0.9, 0.75, 0.55, 0.35, 0.2, 0.0, 0.0, 0.0]) * 0.8
    Xn = rng.normal(0, 1, (500, d)) @ chol.T
    Xp = rng.normal(0, 1, (268, d)) @ chol.T * 1.15 + mu
    X = np.concatenate([Xn, Xp])
    # Raw-measurement style scales and offsets (undone by preprocessing).
    scales = np.array([3.4, 32.0, 19.3, 16.0, 115.0, 7.9, 0.33, 11.8])
    offsets = np.array([3.8, 120.9, 69.1, 20.5, 79.8, 32.0, 0.47, 33.2])
    X = X * scales + offsets
    y = np.concatenate([np.full(500, -1), np.full(268, 1)])
    order = rng.permutation(len(y))
    return X[order], y[order]


def write_libsvm(path, X, y):
    with open(path, "w") as fh:
        for row, label in zip(X, y):
            cells = [f"{'+1' if label > 0 else '-1'}"]
            cells += [f"{i + 1}:{repr(float(v))}" for i, v in enumerate(row)]
            fh.write(" ".join(cells) + "\n")


def write_csv(path, X, y):
    d = X.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join([f"f{i}" for i in range(d)] + ["label"]) + "\n")
        for row, label in zip(X, y):
            cells = [repr(float(v)) for v in row] + ["1" if label > 0 else "0"]
            fh.write(",".join(cells) + "\n")


def main() -> None:
    data_dir = os.path.join(os.path.dirname(__file__), "..", "data")
    os.makedirs(data_dir, exist_ok=True)

    X, y = gen_fourclass_like()
    assert X.shape == (862, 2) and (y == -1).sum() == 555 and (y == 1).sum() == 307
    write_libsvm(os.path.join(data_dir, "fourclass.libsvm"), X, y)
    print(f"wrote fourclass.libsvm: {X.shape[0]} rows, {X.shape[1]} features")

    X, y = gen_pima_like()
    assert X.shape == (768, 8) and (y == -1).sum() == 500 and (y == 1).sum() == 268
    write_csv(os.path.join(data_dir, "pima.csv"), X, y)
    print(f"wrote pima.csv: {X.shape[0]} rows, {X.shape[1]} features")


if __name__ == "__main__":
    main()
