"""Seeded synthetic datasets for tests, verification suites and demos."""

from __future__ import annotations

import numpy as np

from .data import Dataset


def gaussian_blobs(
    n_samples: int,
    n_features: int,
    n_classes: int,
    seed: int = 0,
    center_scale: float = 8.0,
    cluster_std: float = 1.0,
    n_subjects: int | None = None,
    subject_shift: float = 0.5,
) -> Dataset:
    """Well-separated Gaussian class blobs, optionally grouped by subject.

    When ``n_subjects`` is set, each row carries a subject id and each
    subject's class centers are jittered by ``subject_shift`` to emulate
    mild client heterogeneity.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, size=(n_classes, n_features))
    labels = rng.integers(0, n_classes, size=n_samples)
    feats = centers[labels] + rng.normal(0.0, cluster_std, size=(n_samples, n_features))
    client_ids = None
    if n_subjects is not None:
        subjects = rng.integers(0, n_subjects, size=n_samples)
        shifts = rng.normal(0.0, subject_shift, size=(n_subjects, n_classes, n_features))
        feats = feats + shifts[subjects, labels]
        client_ids = [f"subject{int(s):02d}" for s in subjects]
    return Dataset(
        features=feats,
        labels=labels,
        n_classes=n_classes,
        client_ids=client_ids,
        label_names=[f"c{j}" for j in range(n_classes)],
    )


def random_tabular(
    n_samples: int,
    n_features: int,
    n_classes: int,
    seed: int = 0,
) -> Dataset:
    """Mildly structured random data: blobs plus label noise.

    Used by the equivalence suites, where learnability matters less than
    exercising many distinct split decisions.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 3.0, size=(n_classes, n_features))
    labels = rng.integers(0, n_classes, size=n_samples)
    feats = centers[labels] + rng.normal(0.0, 1.5, size=(n_samples, n_features))
    flip = rng.random(n_samples) < 0.05
    labels[flip] = rng.integers(0, n_classes, size=int(flip.sum()))
    return Dataset(features=feats, labels=labels, n_classes=n_classes)


def xor_clusters(n_per_corner: tuple[int, int, int, int] = (149, 100, 100, 51), jitter: float = 0.08, seed: int = 0) -> Dataset:
    """Two-feature XOR-style clusters with imbalanced corner counts.

    A perfectly balanced XOR gives every marginal split zero gain, which
    starves greedy growth. These counts keep the classes balanced, put each cluster boundary one
    point-mass short of the 5/8 level (so with 8 bins the left-quantile
    edge lands exactly on the far cluster's minimum) (a clean separating threshold)
    and the imbalance makes that split the greedy winner.
    """
    rng = np.random.default_rng(seed)
    corners = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    feats = []
    labels = []
    for (cx, cy), cnt in zip(corners, n_per_corner):
        pts = np.column_stack(
            [rng.normal(cx, jitter, cnt), rng.normal(cy, jitter, cnt)]
        )
        feats.append(pts)
        labels.append(np.full(cnt, int(cx) ^ int(cy), dtype=np.int64))
    return Dataset(
        features=np.vstack(feats),
        labels=np.concatenate(labels),
        n_classes=2,
    )


def write_csv(dataset: Dataset, path, label_column: str = "label", id_column: str | None = None) -> None:
    """Write a Dataset to the CSV layout load_csv expects."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        feat_names = [f"f{j}" for j in range(dataset.n_features)]
        header = feat_names + [label_column]
        if id_column is not None:
            header.append(id_column)
        writer.writerow(header)
        names = dataset.label_names or [str(j) for j in range(dataset.n_classes)]
        for i in range(dataset.n_samples):
            row = [repr(float(v)) for v in dataset.features[i]] + [names[dataset.labels[i]]]
            if id_column is not None:
                row.append(dataset.client_ids[i] if dataset.client_ids is not None else "all")
            writer.writerow(row)
