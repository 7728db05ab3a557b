"""User-runnable verification suites bundling the protocol's core guarantees.

Each suite checks one property on built-in synthetic data and reports a
single pass/fail line; the CLI's verify command exits nonzero on the first
failure. Fault-injection hooks exist so the suites themselves can be shown
to catch real defects (flipped tie-breaking, a double-applied learning
rate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import aggregate_atoms, build_edges, merge_atom_maps
from .config import TrainConfig
from .data import Dataset, partition_clients
from .engine import train_central
from .errors import FrameError
from .losses import softmax_grad_hess
from .runs import ensembles_bitwise_fingerprint, run_federated
from .sketch import (
    ExactWeightedQuantiler,
    calibrate_rho,
    calibration_streams,
    measure_rank_error,
)
from .synthetic import random_tabular
from .trees import ensembles_equal
from . import wire
from .protocol import SketchReq


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _tie_rich_dataset(seed: int = 7) -> Dataset:
    """Duplicated feature column: every node sees an exact cross-feature tie."""
    base = random_tabular(300, 2, 3, seed=seed)
    feats = np.column_stack([base.features[:, 0], base.features[:, 0], base.features[:, 1]])
    return Dataset(features=feats, labels=base.labels, n_classes=base.n_classes)


def suite_exact_equivalence(inject: str | None = None) -> SuiteResult:
    """Federated training with exact quantiles must reproduce central runs."""
    config = TrainConfig(rounds=5, max_depth=3, bins=16, gamma=0.1, seed=0, rho=0.0)
    datasets = [
        random_tabular(400, 5, 3, seed=1),
        random_tabular(350, 4, 4, seed=2),
        _tie_rich_dataset(),
    ]
    eta_power = 2 if inject == "double-eta" else 1
    tie_flip = inject == "tie-break"
    for di, ds in enumerate(datasets):
        central = train_central(ds, config)
        for n_clients in (1, 2, 8):
            parts = partition_clients(ds, "iid", seed=13 + n_clients, k=n_clients)
            fed = run_federated(
                parts,
                config,
                _eta_power=eta_power,
                _tie_break_largest=tie_flip,
            )
            if not ensembles_equal(central.ensemble, fed.ensemble, leaf_rtol=1e-12):
                return SuiteResult(
                    "exact-surrogate-equivalence",
                    False,
                    f"dataset {di}, {n_clients} clients: trees diverge from the central engine",
                )
            gap = max(abs(a - b) for a, b in zip(central.objectives, fed.objectives))
            if gap > 1e-9:
                return SuiteResult(
                    "exact-surrogate-equivalence",
                    False,
                    f"dataset {di}, {n_clients} clients: objective gap {gap:.3e} exceeds 1e-9",
                )
    return SuiteResult("exact-surrogate-equivalence", True, "central and exact-sketch federated runs match")


def suite_edge_bracketing() -> SuiteResult:
    """Calibrated sketch edges must rank-bracket the exact CDF."""
    cal = calibrate_rho(0.05, n_streams=24, seed=100)
    err = measure_rank_error(cal.rho, calibration_streams(30, seed=200), n_edges=64)
    if err > cal.alpha:
        return SuiteResult(
            "edge-rank-bracketing",
            False,
            f"fresh-stream rank error {err:.4f} exceeds calibrated alpha {cal.alpha}",
        )
    return SuiteResult(
        "edge-rank-bracketing",
        True,
        f"rho={cal.rho} keeps edge rank error {err:.4f} <= alpha {cal.alpha}",
    )


def suite_conservation() -> SuiteResult:
    """Atom totals equal derivative column sums; merges are partition-invariant."""
    rng = np.random.default_rng(5)
    for trial in range(10):
        ds = random_tabular(500, 6, 4, seed=50 + trial)
        margins = rng.normal(0.0, 1.0, size=(ds.n_samples, ds.n_classes))
        gh = softmax_grad_hess(margins, ds.labels)
        summaries = []
        for f in range(ds.n_features):
            q = ExactWeightedQuantiler()
            q.insert_many(ds.features[:, f], gh.h.sum(axis=1))
            summaries.append(q)
        edges = build_edges(summaries, 16)
        pooled = aggregate_atoms(ds.features, gh, edges)
        if int(pooled.w.sum()) != ds.n_samples:
            return SuiteResult("conservation-and-merge", False, f"trial {trial}: atom counts lost samples")
        for total, col in ((pooled.g.sum(axis=0), gh.g.sum(axis=0)), (pooled.h.sum(axis=0), gh.h.sum(axis=0))):
            if not np.allclose(total, col, rtol=1e-9, atol=1e-12):
                return SuiteResult("conservation-and-merge", False, f"trial {trial}: atom sums drift from column sums")
        parts = partition_clients(ds, "iid", seed=trial, k=4)
        # Rebuild per-part derivatives from the original row indices the
        # partitioner preserved in row_keys.
        maps = []
        for part in parts:
            rows = np.asarray(part.row_keys, dtype=np.int64)
            part_gh = softmax_grad_hess(margins[rows], part.labels)
            maps.append(aggregate_atoms(part.features, part_gh, edges))
        merged = merge_atom_maps(maps)
        if merged.n_atoms != pooled.n_atoms or not np.array_equal(merged.keys, pooled.keys):
            return SuiteResult("conservation-and-merge", False, f"trial {trial}: merged atom keys differ from pooled")
        if not (
            np.allclose(merged.g, pooled.g, rtol=1e-9, atol=1e-12)
            and np.allclose(merged.h, pooled.h, rtol=1e-9, atol=1e-12)
            and np.array_equal(merged.w, pooled.w)
        ):
            return SuiteResult("conservation-and-merge", False, f"trial {trial}: merged atom stats differ from pooled")
    return SuiteResult("conservation-and-merge", True, "atom algebra conserves totals and is partition-invariant")


def suite_determinism() -> SuiteResult:
    """Identical configs must yield bit-identical models on every transport."""
    ds = random_tabular(400, 5, 3, seed=9)
    config = TrainConfig(rounds=4, max_depth=3, bins=16, seed=4, rho=0.001)
    parts = partition_clients(ds, "iid", seed=3, k=3)
    runs = [
        run_federated(partition_clients(ds, "iid", seed=3, k=3), config),
        run_federated(partition_clients(ds, "iid", seed=3, k=3), config),
        run_federated(parts, config, transport_kind="codec"),
    ]
    prints = {ensembles_bitwise_fingerprint(r.ensemble) for r in runs}
    objectives = {tuple(r.objectives) for r in runs}
    if len(prints) != 1 or len(objectives) != 1:
        return SuiteResult("determinism", False, "repeat or codec-roundtrip runs diverged")
    return SuiteResult("determinism", True, "repeat runs and codec-roundtrip runs are bit-identical")


def suite_codec() -> SuiteResult:
    """Frame decoding is total: valid message or FrameError, never a crash."""
    rng = np.random.default_rng(11)
    base = wire.encode(SketchReq(t=3, bins=32, rho=0.001))
    for i in range(20_000):
        if i % 2 == 0:
            blob = rng.bytes(int(rng.integers(0, 64)))
        else:
            cut = int(rng.integers(0, len(base) + 1))
            blob = base[:cut]
        try:
            decoded = wire.decode(bytes(blob))
        except FrameError:
            continue
        except Exception as exc:  # pragma: no cover - the failure being hunted
            return SuiteResult("codec-totality", False, f"decoder crashed with {type(exc).__name__}: {exc}")
        if not hasattr(decoded, "t") and not hasattr(decoded, "ensemble"):
            return SuiteResult("codec-totality", False, "decoder returned a non-message")
    if wire.decode(base) != SketchReq(t=3, bins=32, rho=0.001):
        return SuiteResult("codec-totality", False, "roundtrip mismatch")
    return SuiteResult("codec-totality", True, "fuzzed decoding is total and roundtrips are exact")


ALL_SUITES = (
    suite_exact_equivalence,
    suite_edge_bracketing,
    suite_conservation,
    suite_determinism,
    suite_codec,
)


def run_verification(inject: str | None = None) -> list[SuiteResult]:
    """Run every suite; ``inject`` plants a deliberate fault for self-tests."""
    results = []
    for suite in ALL_SUITES:
        if suite is suite_exact_equivalence:
            results.append(suite(inject))
        else:
            results.append(suite())
    return results
