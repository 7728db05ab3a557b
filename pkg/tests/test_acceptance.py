"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Criteria with a stated wall-clock budget assert it.
"""

import time

import numpy as np
import pytest

from fedgbt.binning import aggregate_atoms, build_edges, merge_atom_maps
from fedgbt.config import TrainConfig
from fedgbt.data import SplitSpec, hash_split, partition_clients
from fedgbt.engine import train_central
from fedgbt.errors import FrameError
from fedgbt.losses import softmax_grad_hess
from fedgbt.protocol import AtomReq, AtomResp, FinalAck, ModelFinal, SketchReq, SketchResp
from fedgbt.runs import (
    build_report,
    ensembles_bitwise_fingerprint,
    evaluate_ensemble,
    run_federated,
)
from fedgbt.report import report_csv_text
from fedgbt.sketch import (
    ExactWeightedQuantiler,
    WeightedQuantileSketch,
    calibrate_rho,
    calibration_streams,
    measure_rank_error,
)
from fedgbt.synthetic import gaussian_blobs, random_tabular
from fedgbt.trees import Ensemble, RoundTrees, TreeNode, ensembles_equal
from fedgbt import wire

PAPER = TrainConfig(rounds=10, max_depth=4, bins=64, lam=1.0, gamma=0.1, eta=0.2)
THEOREM_RHOS = (0.02, 0.005, 0.001)


def report_pass(criterion: int, detail: str) -> None:
    print(f"\n[CRITERION {criterion}] PASS: {detail}")


# ---------------------------------------------------------------------------
# Shared runs: the theorem sweep feeds criteria 2 and 4.
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def theorem_runs():
    dataset = gaussian_blobs(5000, 8, 16, seed=5)
    central = train_central(dataset, PAPER)
    fed_by_rho = {}
    for rho in THEOREM_RHOS:
        parts = partition_clients(dataset, "iid", seed=1, k=8)
        fed_by_rho[rho] = run_federated(parts, PAPER.with_(rho=rho), record_rounds=True)
    return dataset, central, fed_by_rho


@pytest.fixture(scope="module")
def calibrated_alpha():
    """Rank-error budget per rho, measured on calibration streams x2 margin."""
    return {
        rho: 2.0 * measure_rank_error(rho, calibration_streams(40, seed=0), n_edges=PAPER.bins)
        for rho in THEOREM_RHOS
    }


# ---------------------------------------------------------------------------
# Criterion 1: exact-surrogate equivalence across datasets and partitions.
# ---------------------------------------------------------------------------


def test_criterion_1_exact_equivalence():
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    exact = PAPER.with_(rho=0.0)
    n_checked = 0
    for i in range(20):
        n = int(rng.integers(200, 5001))
        d = int(rng.integers(2, 31))
        k = int(rng.integers(2, 17))
        dataset = random_tabular(n, d, k, seed=1000 + i)
        for bins in (16, 64):
            config = exact.with_(bins=bins)
            central = train_central(dataset, config)
            for n_clients in (1, 2, 8):
                parts = partition_clients(dataset, "iid", seed=i, k=n_clients)
                fed = run_federated(parts, config)
                rtol = 0.0 if n_clients == 1 else 1e-12
                assert ensembles_equal(central.ensemble, fed.ensemble, leaf_rtol=rtol), (
                    f"dataset {i} (n={n}, d={d}, K={k}), B={bins}, {n_clients} clients: "
                    "federated trees diverge from the centralized engine"
                )
                n_checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 120, f"criterion 1 exceeded its 2-minute budget: {elapsed:.1f}s"
    report_pass(1, f"{n_checked} federated runs matched central trees (1-client runs bitwise); {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 2: finite-horizon gap trend over sketch accuracy.
# ---------------------------------------------------------------------------


def test_criterion_2_theorem_gap_trend(theorem_runs):
    start = time.monotonic()
    _, central, fed_by_rho = theorem_runs
    gaps = []
    for rho in THEOREM_RHOS:
        fed = fed_by_rho[rho]
        assert len(fed.objectives) == len(central.objectives) == PAPER.rounds + 1
        gaps.append(max(abs(a - b) for a, b in zip(central.objectives, fed.objectives)))
    for coarse, fine in zip(gaps, gaps[1:]):
        assert fine <= coarse, f"gap not nonincreasing over rho: {gaps}"
    assert gaps[-1] < 1e-3, f"gap at rho=0.001 is {gaps[-1]:.2e}, expected < 1e-3"
    elapsed = time.monotonic() - start
    assert elapsed < 300
    report_pass(2, "max_t objective gaps " + " >= ".join(f"{g:.2e}" for g in gaps) + " (final < 1e-3)")


# ---------------------------------------------------------------------------
# Criterion 3: edge rank bracketing with calibrated accuracy.
# ---------------------------------------------------------------------------


def test_criterion_3_bracketing_accuracy():
    cal = calibrate_rho(0.05, n_streams=40, seed=0, n_edges=PAPER.bins)
    worst = 0.0
    n_streams = 0
    qs = np.arange(PAPER.bins + 1) / PAPER.bins
    for values, weights in calibration_streams(100, seed=777):
        n_streams += 1
        sketch = WeightedQuantileSketch(cal.rho)
        sketch.insert_many(values, weights)
        exact = ExactWeightedQuantiler()
        exact.insert_many(values, weights)
        edges = sketch.quantiles(qs)
        for b, e in enumerate(edges):
            level = qs[b]
            assert exact.cdf_below(float(e)) <= level + cal.alpha
            assert exact.cdf(float(e)) >= level - cal.alpha
            worst = max(worst, exact.cdf_below(float(e)) - level, level - exact.cdf(float(e)))
    assert n_streams >= 100
    report_pass(3, f"rho={cal.rho} bracketed {n_streams} fresh streams, worst rank deviation {worst:.4f} <= alpha {cal.alpha}")


# ---------------------------------------------------------------------------
# Criterion 4: Hessian prefix-mass perturbation bound per round and feature.
# ---------------------------------------------------------------------------


def test_criterion_4_prefix_mass_bound(theorem_runs, calibrated_alpha):
    dataset, _, fed_by_rho = theorem_runs
    qs = np.arange(PAPER.bins + 1) / PAPER.bins
    checked = 0
    for rho in THEOREM_RHOS:
        alpha = calibrated_alpha[rho]
        fed = fed_by_rho[rho]
        assert len(fed.records) == PAPER.rounds
        parts = partition_clients(dataset, "iid", seed=1, k=8)
        values_all = np.vstack([p.features for p in parts])
        for rec in fed.records:
            w_all = np.concatenate([rec.weights_by_client[i] for i in range(8)])
            total_h = float(w_all.sum())
            for f in range(dataset.n_features):
                col = values_all[:, f]
                order = np.argsort(col, kind="stable")
                sorted_vals = col[order]
                cumw = np.cumsum(w_all[order])

                def prefix_mass(v):
                    i = np.searchsorted(sorted_vals, v, side="right")
                    return float(cumw[i - 1]) if i > 0 else 0.0

                exact = ExactWeightedQuantiler()
                exact.insert_many(col, w_all)
                ideal_edges = exact.quantiles(qs)
                sketch_edges = rec.edge_set.raw_quantiles[f]
                assert sketch_edges.size == qs.size
                for b in range(qs.size):
                    diff = abs(prefix_mass(float(sketch_edges[b])) - prefix_mass(float(ideal_edges[b])))
                    assert diff <= alpha * total_h, (
                        f"rho={rho}, round {rec.edge_set.round_t}, feature {f}, edge {b}: "
                        f"|H~ - H| = {diff:.4g} > {alpha:.4g} * {total_h:.4g}"
                    )
                    checked += 1
    report_pass(4, f"{checked} prefix masses within alpha * total Hessian across rho sweep")


# ---------------------------------------------------------------------------
# Criterion 5: accuracy within one percentage point of central, all bin counts.
# ---------------------------------------------------------------------------


def test_criterion_5_accuracy_gap_under_one_point():
    start = time.monotonic()
    dataset = gaussian_blobs(4800, 8, 16, seed=9, n_subjects=8, subject_shift=1.2, cluster_std=1.6)
    train, valid = hash_split(dataset, SplitSpec(train_fraction=0.8, seed=0))
    gaps = {}
    for bins in (64, 128, 256, 512):
        config = PAPER.with_(bins=bins, rho=0.001)
        central = train_central(train, config)
        fed = run_federated(partition_clients(train, "by-id"), config)
        acc_c, _ = evaluate_ensemble(central.ensemble, valid)
        acc_f, _ = evaluate_ensemble(fed.ensemble, valid)
        gaps[bins] = abs(acc_c - acc_f) * 100
        assert gaps[bins] < 1.0, f"B={bins}: accuracy gap {gaps[bins]:.2f}pp >= 1pp"
    elapsed = time.monotonic() - start
    assert elapsed < 600, f"criterion 5 exceeded its 10-minute budget: {elapsed:.1f}s"
    detail = ", ".join(f"B={b}: {g:.2f}pp" for b, g in gaps.items())
    report_pass(5, f"validation accuracy gaps {detail}; {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Criterion 6: conservation and partition-invariant merges.
# ---------------------------------------------------------------------------


def test_criterion_6_conservation_and_merge_laws():
    rng = np.random.default_rng(3)
    qs = np.linspace(0, 1, 33)
    n_partitions = 0
    trial = 0
    while n_partitions < 50:
        trial += 1
        ds = random_tabular(int(rng.integers(200, 800)), int(rng.integers(2, 6)), int(rng.integers(2, 6)), seed=trial)
        margins = rng.normal(0, 1, size=(ds.n_samples, ds.n_classes))
        gh = softmax_grad_hess(margins, ds.labels)
        w = gh.h.sum(axis=1)
        summaries = []
        for f in range(ds.n_features):
            s = ExactWeightedQuantiler()
            s.insert_many(ds.features[:, f], w)
            summaries.append(s)
        edges = build_edges(summaries, 16)
        pooled_atoms = aggregate_atoms(ds.features, gh, edges)
        np.testing.assert_allclose(pooled_atoms.g.sum(axis=0), gh.g.sum(axis=0), rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(pooled_atoms.h.sum(axis=0), gh.h.sum(axis=0), rtol=1e-9, atol=1e-12)
        assert int(pooled_atoms.w.sum()) == ds.n_samples
        pooled_sketch = WeightedQuantileSketch(0.005)
        pooled_sketch.insert_many(ds.features[:, 0], w)

        for rep in range(5):
            n_partitions += 1
            k = int(rng.integers(2, 9))
            assignment = rng.integers(0, k, size=ds.n_samples)
            atom_maps = []
            merged_sketch = None
            for c in range(k):
                rows = np.flatnonzero(assignment == c)
                part_gh = softmax_grad_hess(margins[rows], ds.labels[rows])
                atom_maps.append(aggregate_atoms(ds.features[rows], part_gh, edges))
                s = WeightedQuantileSketch(0.005)
                s.insert_many(ds.features[rows, 0], w[rows])
                merged_sketch = s if merged_sketch is None else merged_sketch.merge(s)
            merged = merge_atom_maps([m for m in atom_maps if m.n_atoms])
            np.testing.assert_array_equal(merged.keys, pooled_atoms.keys)
            np.testing.assert_allclose(merged.g, pooled_atoms.g, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(merged.h, pooled_atoms.h, rtol=1e-9, atol=1e-12)
            assert int(merged.w.sum()) == ds.n_samples
            np.testing.assert_allclose(
                merged_sketch.quantiles(qs), pooled_sketch.quantiles(qs), rtol=1e-9
            )
    report_pass(6, f"atom/sketch merges partition-invariant over {n_partitions} random partitions")


# ---------------------------------------------------------------------------
# Criterion 7: analytic derivatives vs finite differences on 100 draws.
# ---------------------------------------------------------------------------


def test_criterion_7_gradient_check():
    from test_losses import FD_HESS_ATOL, FD_RTOL, finite_difference_grad_hess

    rng = np.random.default_rng(7)
    for draw in range(100):
        k = int(rng.integers(2, 17))
        margins = rng.normal(0, 2, size=(3, k))
        labels = rng.integers(0, k, size=3)
        gh = softmax_grad_hess(margins, labels)
        g_fd, h_fd = finite_difference_grad_hess(margins, labels)
        np.testing.assert_allclose(gh.g, g_fd, rtol=FD_RTOL, atol=1e-9)
        np.testing.assert_allclose(gh.h, h_fd, rtol=FD_RTOL, atol=FD_HESS_ATOL)
    report_pass(7, "softmax derivatives match finite differences on 100 random draws (rel tol 1e-4)")


# ---------------------------------------------------------------------------
# Criterion 8: codec fuzz totality and roundtrip identity.
# ---------------------------------------------------------------------------


def _random_message(rng):
    kind = int(rng.integers(0, 6))
    if kind == 0:
        return SketchReq(t=int(rng.integers(0, 1000)), bins=int(rng.integers(2, 600)), rho=float(rng.uniform(0, 0.5)))
    if kind == 1:
        sketches = []
        for _ in range(int(rng.integers(1, 4))):
            if rng.random() < 0.5:
                s = WeightedQuantileSketch(float(rng.uniform(0.0005, 0.05)))
                s.insert_many(rng.normal(0, 5, 30), rng.uniform(0.01, 0.5, 30))
            else:
                s = ExactWeightedQuantiler()
                s.insert_many(rng.normal(0, 5, 20), rng.uniform(0.01, 0.5, 20))
            sketches.append(s)
        return SketchResp(t=int(rng.integers(0, 100)), client_id=int(rng.integers(0, 50)), sketches=sketches)
    if kind == 2:
        return AtomReq(t=int(rng.integers(0, 100)), delta=_random_trees(rng), edge_set=_random_edges(rng))
    if kind == 3:
        return AtomResp(
            t=int(rng.integers(0, 100)),
            client_id=int(rng.integers(0, 50)),
            atoms=_random_atom_map(rng),
            loss_sum=float(rng.normal(0, 100)),
            n_samples=int(rng.integers(1, 10_000)),
        )
    if kind == 4:
        k = int(rng.integers(2, 5))
        ens = Ensemble(
            n_classes=k,
            eta=float(rng.uniform(0.05, 1.0)),
            rounds=[_random_trees(rng, k) for _ in range(int(rng.integers(0, 3)))],
            n_features=int(rng.integers(1, 8)),
        )
        return ModelFinal(ensemble=ens)
    return FinalAck(
        t=int(rng.integers(0, 100)),
        client_id=int(rng.integers(0, 50)),
        loss_sum=float(rng.normal(0, 100)),
        n_samples=int(rng.integers(1, 10_000)),
    )


def _random_trees(rng, k=None):
    k = k or int(rng.integers(2, 5))
    leaf = lambda: TreeNode(is_leaf=True, weights=rng.normal(0, 1, k))  # noqa: E731
    if rng.random() < 0.3:
        return RoundTrees(nodes=[leaf()], n_classes=k)
    return RoundTrees(
        nodes=[
            TreeNode(is_leaf=False, feature=int(rng.integers(0, 5)), bin_q=int(rng.integers(1, 30)),
                     threshold=float(rng.normal()), left=1, right=2),
            leaf(),
            leaf(),
        ],
        n_classes=k,
    )


def _random_edges(rng, d=None):
    from fedgbt.binning import EdgeSet

    d = d or int(rng.integers(1, 5))
    edges = []
    for _ in range(d):
        e = np.unique(rng.normal(0, 3, size=int(rng.integers(1, 10))))
        edges.append(e if e.size else np.zeros(1))
    return EdgeSet(round_t=int(rng.integers(0, 100)), edges=tuple(edges))


def _random_atom_map(rng):
    from fedgbt.binning import AtomMap

    d = int(rng.integers(1, 5))
    k = int(rng.integers(2, 5))
    bins = int(rng.integers(2, 40))
    keys = np.unique(rng.integers(0, bins, size=(int(rng.integers(1, 40)), d)).astype(np.uint16), axis=0)
    m = keys.shape[0]
    return AtomMap(
        round_t=int(rng.integers(0, 100)),
        keys=keys,
        w=rng.integers(1, 100, size=m).astype(np.int64),
        g=rng.normal(0, 2, size=(m, k)),
        h=rng.uniform(0, 0.25, size=(m, k)),
        bins_per_feature=(bins,) * d,
    )


def _messages_equivalent(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, (SketchReq, FinalAck)):
        return a == b
    enc = wire.encode
    return enc(a) == enc(b)  # re-encoding normalizes numpy payloads bit-exactly


def test_criterion_8_codec_robustness():
    rng = np.random.default_rng(8)
    corpus = [wire.encode(_random_message(rng)) for _ in range(200)]
    crashes = 0
    for i in range(1_000_000):
        mode = i % 3
        if mode == 0:
            blob = rng.bytes(int(rng.integers(0, 64)))
        elif mode == 1:
            base = corpus[i % len(corpus)]
            blob = base[: int(rng.integers(0, len(base) + 1))]
        else:
            base = bytearray(corpus[i % len(corpus)])
            base[int(rng.integers(0, len(base)))] ^= int(rng.integers(1, 256))
            blob = bytes(base)
        try:
            wire.decode(blob)
        except FrameError:
            pass
        except Exception:
            crashes += 1
    assert crashes == 0, f"{crashes} decoder crashes"

    for i in range(10_000):
        msg = _random_message(rng)
        back = wire.decode(wire.encode(msg))
        assert _messages_equivalent(msg, back), f"roundtrip mismatch for {type(msg).__name__}"
    report_pass(8, "10^6 fuzz frames crash-free; encode-decode identity on 10^4 random messages")


# ---------------------------------------------------------------------------
# Criterion 9: bit-identical reruns and transport transparency.
# ---------------------------------------------------------------------------


def test_criterion_9_determinism():
    dataset = random_tabular(600, 6, 5, seed=77)
    config = PAPER.with_(rounds=5, rho=0.001)

    def one_run(kind):
        parts = partition_clients(dataset, "iid", seed=4, k=4)
        return run_federated(parts, config, transport_kind=kind)

    runs = [one_run("sim"), one_run("sim"), one_run("codec")]
    prints = {ensembles_bitwise_fingerprint(r.ensemble) for r in runs}
    assert len(prints) == 1, "ensembles differ across reruns or transports"
    assert len({tuple(r.objectives) for r in runs}) == 1

    central = train_central(dataset, config)
    central2 = train_central(dataset, config)
    assert ensembles_bitwise_fingerprint(central.ensemble) == ensembles_bitwise_fingerprint(central2.ensemble)

    reports = [
        report_csv_text(build_report(config, central=central, fed=r, train_data=dataset))
        for r in runs
    ]
    assert len(set(reports)) == 1, "serialized reports differ"
    report_pass(9, "reruns and sim-vs-codec transports give bit-identical ensembles and reports")
