"""Dataset container, CSV ingestion, hash-based splits and client partitioners."""

from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestError, InvalidInput, PartitionError


@dataclass
class Dataset:
    """Dense feature matrix with integer class labels.

    ``features`` is row-major float64, ``labels`` holds class indices in
    ``[0, n_classes)``. ``client_ids`` (optional) carries the raw grouping
    value per row; ``row_keys`` are stable identifiers used for hash splits,
    defaulting to the original row index.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    client_ids: list | None = None
    row_keys: list | None = None
    label_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise InvalidInput("features must be a 2-D matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidInput("features and labels disagree on sample count")
        if self.features.shape[0] < 1:
            raise InvalidInput("dataset needs at least one sample")
        if not np.isfinite(self.features).all():
            raise InvalidInput("features contain NaN/Inf")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InvalidInput("labels must lie in [0, n_classes)")
        if self.row_keys is None:
            self.row_keys = list(range(self.features.shape[0]))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx: np.ndarray) -> "Dataset":
        """Row subset preserving original order and metadata."""
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            n_classes=self.n_classes,
            client_ids=[self.client_ids[i] for i in idx] if self.client_ids is not None else None,
            row_keys=[self.row_keys[i] for i in idx],
            label_names=self.label_names,
        )

    def row_checksum(self) -> int:
        """Order-independent digest of (key, label, features) rows.

        Partitioners must preserve this (no reorder/duplicate/drop).
        """
        total = 0
        for i in range(self.n_samples):
            h = hashlib.sha256()
            h.update(repr(self.row_keys[i]).encode())
            h.update(int(self.labels[i]).to_bytes(8, "little", signed=True))
            h.update(self.features[i].tobytes())
            total ^= int.from_bytes(h.digest()[:8], "little")
        return total


@dataclass(frozen=True)
class CsvSchema:
    label_column: str
    id_column: str | None = None


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0


def stable_hash64(key, seed: int) -> int:
    """Platform-independent 64-bit hash of (key, seed).

    SHA-256 over the UTF-8 key rendering concatenated with the
    little-endian seed; the first 8 digest bytes, little-endian.
    """
    h = hashlib.sha256()
    h.update(str(key).encode("utf-8"))
    h.update(b"\x00")
    h.update(struct.pack("<q", seed))
    return int.from_bytes(h.digest()[:8], "little")


def load_csv(path: str | Path, schema: CsvSchema) -> Dataset:
    """Load a featurized CSV into a Dataset.

    Header row required; the label column is remapped to dense class ids in
    first-appearance order (mapping kept in ``label_names``). Every feature
    cell must parse as a finite float; violations raise IngestError with the
    exact location.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if schema.label_column not in header:
            raise IngestError(f"{path}: missing label column {schema.label_column!r}")
        if schema.id_column is not None and schema.id_column not in header:
            raise IngestError(f"{path}: missing id column {schema.id_column!r}")
        label_idx = header.index(schema.label_column)
        id_idx = header.index(schema.id_column) if schema.id_column is not None else None
        feat_cols = [j for j in range(len(header)) if j != label_idx and j != id_idx]

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        ids: list[str] = []
        for rownum, rec in enumerate(reader):
            if len(rec) != len(header):
                raise IngestError(f"{path}: wrong field count", row=rownum)
            vals = []
            for j in feat_cols:
                try:
                    v = float(rec[j])
                except ValueError:
                    raise IngestError(f"{path}: unparseable cell {rec[j]!r}", row=rownum, column=header[j]) from None
                if not np.isfinite(v):
                    raise IngestError(f"{path}: non-finite cell {rec[j]!r}", row=rownum, column=header[j])
                vals.append(v)
            rows.append(vals)
            raw_labels.append(rec[label_idx])
            if id_idx is not None:
                ids.append(rec[id_idx])

    if not rows:
        raise IngestError(f"{path}: no data rows")
    label_names: list[str] = []
    seen: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, name in enumerate(raw_labels):
        if name not in seen:
            seen[name] = len(label_names)
            label_names.append(name)
        labels[i] = seen[name]

    return Dataset(
        features=np.asarray(rows, dtype=np.float64),
        labels=labels,
        n_classes=len(label_names),
        client_ids=ids if id_idx is not None else None,
        label_names=label_names,
    )


def hash_split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset | None, Dataset | None]:
    """Deterministic train/validation split by stable row-key hashing.

    A row goes to train iff hash(key, seed) / 2**64 < train_fraction; the
    membership is a pure function of (key, seed) so reruns and other
    implementations of the same hash agree exactly. An empty side (possible
    at fractions 0 and 1) comes back as None.
    """
    frac = spec.train_fraction
    if not (0.0 <= frac <= 1.0):
        raise InvalidInput("train_fraction must lie in [0, 1]")
    scale = 2.0**64
    mask = np.array(
        [stable_hash64(k, spec.seed) / scale < frac for k in dataset.row_keys],
        dtype=bool,
    )
    train_idx = np.flatnonzero(mask)
    valid_idx = np.flatnonzero(~mask)
    train = dataset.take(train_idx) if train_idx.size else None
    valid = dataset.take(valid_idx) if valid_idx.size else None
    return train, valid


def partition_clients(dataset: Dataset, mode: str, seed: int = 0, k: int = 1, alpha: float = 0.5) -> list[Dataset]:
    """Partition rows into disjoint, exhaustive client datasets.

    Modes: ``by-id`` (group by the id column, first-appearance order),
    ``iid`` (seeded shuffle into k near-equal chunks), ``label-skew``
    (per-class Dirichlet(alpha) proportions over k clients). Row order
    within each client preserves the original dataset order.
    """
    n = dataset.n_samples
    if mode == "by-id":
        if dataset.client_ids is None:
            raise PartitionError("by-id partition requires an id column")
        order: dict = {}
        for cid in dataset.client_ids:
            if cid not in order:
                order[cid] = len(order)
        groups: list[list[int]] = [[] for _ in order]
        for i, cid in enumerate(dataset.client_ids):
            groups[order[cid]].append(i)
        return [dataset.take(np.asarray(g, dtype=np.int64)) for g in groups]

    if k < 1:
        raise PartitionError("k must be >= 1")
    if k > n:
        raise PartitionError(f"cannot partition {n} samples into {k} clients")

    rng = np.random.default_rng(seed)
    if mode == "iid":
        perm = rng.permutation(n)
        chunks = np.array_split(perm, k)
        return [dataset.take(np.sort(c)) for c in chunks]

    if mode == "label-skew":
        assignment = np.empty(n, dtype=np.int64)
        for cls in range(dataset.n_classes):
            rows = np.flatnonzero(dataset.labels == cls)
            rng.shuffle(rows)
            props = rng.dirichlet(np.full(k, alpha))
            counts = np.floor(props * rows.size).astype(np.int64)
            # Distribute the remainder to the largest-proportion clients.
            remainder = rows.size - counts.sum()
            for j in np.argsort(-props)[:remainder]:
                counts[j] += 1
            start = 0
            for j in range(k):
                assignment[rows[start : start + counts[j]]] = j
                start += counts[j]
        parts = []
        for j in range(k):
            idx = np.flatnonzero(assignment == j)
            if idx.size == 0:
                # Dirichlet can starve a client on tiny datasets; give it the
                # single largest other client's last row to stay exhaustive
                # and non-empty.
                donor = int(np.argmax([np.sum(assignment == m) for m in range(k)]))
                steal = np.flatnonzero(assignment == donor)[-1]
                assignment[steal] = j
                idx = np.flatnonzero(assignment == j)
            parts.append(dataset.take(idx))
        return parts

    raise PartitionError(f"unknown partition mode {mode!r}")
