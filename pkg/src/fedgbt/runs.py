"""High-level run helpers shared by the CLI, verification suites and tests."""

from __future__ import annotations

import numpy as np

from .config import TrainConfig
from .data import Dataset
from .engine import TrainResult, train_central
from .metrics import accuracy, macro_f1, predicted_classes
from .protocol import ClientState, FedTrainResult, run_training
from .report import ClientMetrics, RunReport
from .transport import CodecTransport, SimTransport
from .trees import Ensemble, ensemble_diff_summary, predict_margins


def make_clients(parts: list[Dataset], config: TrainConfig, *, _eta_power: int = 1) -> list[ClientState]:
    return [
        ClientState(client_id=i, dataset=part, eta=config.eta, _eta_power=_eta_power)
        for i, part in enumerate(parts)
    ]


def run_federated(
    parts: list[Dataset],
    config: TrainConfig,
    *,
    transport_kind: str = "sim",
    record_rounds: bool = False,
    latency_seed: int | None = None,
    _eta_power: int = 1,
    _tie_break_largest: bool = False,
) -> FedTrainResult:
    """Train over a simulated federation of the given data parts."""
    clients = make_clients(parts, config, _eta_power=_eta_power)
    transport = SimTransport(clients, latency_seed=latency_seed)
    if transport_kind == "codec":
        transport = CodecTransport(transport)
    elif transport_kind != "sim":
        raise ValueError(f"unknown transport kind {transport_kind!r}")
    return run_training(
        config,
        clients,
        transport,
        record_rounds=record_rounds,
        _tie_break_largest=_tie_break_largest,
    )


def evaluate_ensemble(ensemble: Ensemble, dataset: Dataset) -> tuple[float, float]:
    margins = predict_margins(ensemble, dataset.features)
    preds = predicted_classes(margins)
    return accuracy(dataset.labels, preds), macro_f1(dataset.labels, preds, dataset.n_classes)


def client_validation_metrics(ensemble: Ensemble, valid_parts: list[Dataset], names: list[str]) -> list[ClientMetrics]:
    out = []
    for name, part in zip(names, valid_parts):
        acc, f1 = evaluate_ensemble(ensemble, part)
        out.append(ClientMetrics(client=name, n_valid=part.n_samples, accuracy=acc, macro_f1=f1))
    return out


def build_report(
    config: TrainConfig,
    *,
    central: TrainResult | None = None,
    fed: FedTrainResult | None = None,
    train_data: Dataset | None = None,
    valid_data: Dataset | None = None,
    client_metrics: list[ClientMetrics] | None = None,
    extra_config: dict | None = None,
) -> RunReport:
    """Assemble a RunReport from run results, scoring the primary model.

    The federated model is scored when present, otherwise the central one.
    """
    echo = {
        "rounds": config.rounds,
        "max_depth": config.max_depth,
        "bins": config.bins,
        "lambda": config.lam,
        "gamma": config.gamma,
        "eta": config.eta,
        "seed": config.seed,
        "rho": config.rho,
    }
    if extra_config:
        echo.update(extra_config)
    report = RunReport(config_echo=echo)
    if central is not None:
        report.objectives_central = list(central.objectives)
    if fed is not None:
        report.objectives_fed = list(fed.objectives)
    report.max_objective_gap = report.recomputed_gap()
    if central is not None and fed is not None:
        report.tree_diff = ensemble_diff_summary(central.ensemble, fed.ensemble)
    model = fed.ensemble if fed is not None else (central.ensemble if central is not None else None)
    if model is not None and train_data is not None:
        report.accuracy_train, report.macro_f1_train = evaluate_ensemble(model, train_data)
    if model is not None and valid_data is not None:
        report.accuracy_valid, report.macro_f1_valid = evaluate_ensemble(model, valid_data)
    if client_metrics:
        report.client_metrics = client_metrics
    return report


def ensembles_bitwise_fingerprint(ensemble: Ensemble) -> bytes:
    """Byte fingerprint for determinism checks."""
    import hashlib

    h = hashlib.sha256()
    h.update(np.float64(ensemble.eta).tobytes())
    h.update(np.float64(ensemble.base_margin).tobytes())
    for rt in ensemble.rounds:
        for node in rt.nodes:
            if node.is_leaf:
                h.update(b"L")
                h.update(np.asarray(node.weights, dtype=np.float64).tobytes())
            else:
                h.update(b"S")
                h.update(np.asarray([node.feature, node.bin_q, node.left, node.right], dtype=np.int64).tobytes())
                h.update(np.float64(node.threshold).tobytes())
    return h.digest()
