"""Two-phase federated training protocol.

Each boosting round runs a sketch phase and an atom phase behind synchronous
barriers:

  server                                  clients
    SketchReq(t, B, rho)      ->            derivatives at current margins,
                                            per-feature weighted sketches
    <- SketchResp(t, sketches)
    [barrier: all cohort sketches]  merge -> global edges
    AtomReq(t, delta trees of t-1, edges) ->
                                            apply delta once, re-derive,
                                            quantize, aggregate atoms
    <- AtomResp(t, atoms, loss sum)
    [barrier: all cohort atoms]     merge -> depth-wise growth -> round trees

After the last round the server broadcasts ModelFinal; clients apply the
final round's trees and acknowledge with their local loss sums, completing
the per-round objective series without centralizing anything beyond
scalar loss sums.

Clients never send raw feature values: outbound payloads are sketch bucket
weights, aggregated atom statistics, and scalar loss sums.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .binning import AtomMap, EdgeSet, aggregate_atoms, build_edges, merge_atom_maps
from .config import TrainConfig
from .data import Dataset
from .engine import grow_round
from .errors import BarrierTimeout, InvalidInput, ProtocolError, TrainingAborted
from .losses import logloss_per_sample, sketch_weights, softmax_grad_hess
from .sketch import make_summary
from .trees import Ensemble, RoundTrees, apply_round

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


# ---------------------------------------------------------------------------
# Message schema
# ---------------------------------------------------------------------------


@dataclass
class SketchReq:
    t: int
    bins: int
    rho: float  # 0.0 requests the exact weighted quantiler


@dataclass
class SketchResp:
    t: int
    client_id: int
    sketches: list  # one weighted quantile summary per feature


@dataclass
class AtomReq:
    t: int
    delta: RoundTrees | None  # previous round's trees, raw leaf weights
    edge_set: EdgeSet


@dataclass
class AtomResp:
    t: int
    client_id: int
    atoms: AtomMap
    loss_sum: float  # local training log-loss sum at the just-updated margins
    n_samples: int


@dataclass
class ModelFinal:
    ensemble: Ensemble


@dataclass
class FinalAck:
    t: int
    client_id: int
    loss_sum: float
    n_samples: int


Message = SketchReq | SketchResp | AtomReq | AtomResp | ModelFinal | FinalAck


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    eta: float
    margins: np.ndarray = field(init=False)
    last_sketch_round: int = 0
    last_atom_round: int = 0
    applied_tree_rounds: int = 0
    # Fault-injection hook for verification suites: 2 applies the learning
    # rate twice during margin updates.
    _eta_power: int = 1
    # Diagnostics: per-round sketch weights, kept only when asked.
    record_weights: bool = False
    weight_history: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.margins = np.zeros((self.dataset.n_samples, self.dataset.n_classes))

    @property
    def _eta_eff(self) -> float:
        return self.eta**self._eta_power


def client_handle(state: ClientState, message: Message) -> Message | None:
    """Process one server message; returns the response or None for stale."""
    if isinstance(message, SketchReq):
        if message.t < state.last_sketch_round:
            logger.warning("client %d: stale SketchReq round %d ignored", state.client_id, message.t)
            return None
        state.last_sketch_round = message.t
        gh = softmax_grad_hess(state.margins, state.dataset.labels)
        w = sketch_weights(gh.h)
        if state.record_weights:
            state.weight_history[message.t] = w.copy()
        sketches = []
        for f in range(state.dataset.n_features):
            s = make_summary(message.rho)
            s.insert_many(state.dataset.features[:, f], w)
            sketches.append(s)
        return SketchResp(t=message.t, client_id=state.client_id, sketches=sketches)

    if isinstance(message, AtomReq):
        if message.t < state.last_atom_round:
            logger.warning("client %d: stale AtomReq round %d ignored", state.client_id, message.t)
            return None
        if message.edge_set.n_features != state.dataset.n_features:
            raise ProtocolError(
                f"edge set has {message.edge_set.n_features} features, client data has {state.dataset.n_features}"
            )
        if message.t > state.last_atom_round:
            # Apply the previous round's trees exactly once.
            if message.delta is not None:
                state.margins = apply_round(state.margins, message.delta, state.dataset.features, state._eta_eff)
                state.applied_tree_rounds = message.t - 1
            state.last_atom_round = message.t
        gh = softmax_grad_hess(state.margins, state.dataset.labels)
        atoms = aggregate_atoms(state.dataset.features, gh, message.edge_set)
        loss_sum = float(np.sum(logloss_per_sample(state.margins, state.dataset.labels)))
        return AtomResp(
            t=message.t,
            client_id=state.client_id,
            atoms=atoms,
            loss_sum=loss_sum,
            n_samples=state.dataset.n_samples,
        )

    if isinstance(message, ModelFinal):
        ens = message.ensemble
        for tree_round in range(state.applied_tree_rounds, ens.n_rounds):
            state.margins = apply_round(state.margins, ens.rounds[tree_round], state.dataset.features, state._eta_eff)
        state.applied_tree_rounds = max(state.applied_tree_rounds, ens.n_rounds)
        loss_sum = float(np.sum(logloss_per_sample(state.margins, state.dataset.labels)))
        return FinalAck(
            t=ens.n_rounds,
            client_id=state.client_id,
            loss_sum=loss_sum,
            n_samples=state.dataset.n_samples,
        )

    raise ProtocolError(f"client cannot handle message type {type(message).__name__}")


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


class Phase(Enum):
    IDLE = "idle"
    AWAIT_SKETCHES = "await-sketches"
    AWAIT_ATOMS = "await-atoms"
    DONE = "done"


@dataclass
class ServerState:
    config: TrainConfig
    client_ids: list[int]
    phase: Phase = Phase.IDLE
    t: int = 0
    cohort: list[int] = field(default_factory=list)
    edge_set: EdgeSet | None = None
    prev_round: RoundTrees | None = None
    ensemble: Ensemble | None = None
    # (loss_sum, n) pairs reported with atom responses, keyed by round.
    loss_reports: dict[int, tuple[float, int]] = field(default_factory=dict)
    keep_raw_quantiles: bool = False
    edge_history: list[EdgeSet] = field(default_factory=list)
    _tie_break_largest: bool = False


def start_round(state: ServerState, cohort: list[int] | None = None) -> list[tuple[int, SketchReq]]:
    """Open round t+1; an empty cohort skips the round entirely."""
    if state.phase not in (Phase.IDLE,):
        raise ProtocolError(f"cannot start a round in phase {state.phase.value}")
    chosen = list(state.client_ids) if cohort is None else list(cohort)
    if not chosen:
        return []
    unknown = set(chosen) - set(state.client_ids)
    if unknown:
        raise ProtocolError(f"unknown cohort members: {sorted(unknown)}")
    state.t += 1
    state.cohort = sorted(chosen)
    state.phase = Phase.AWAIT_SKETCHES
    req = SketchReq(t=state.t, bins=state.config.bins, rho=state.config.rho)
    return [(cid, req) for cid in state.cohort]


def _check_barrier(state: ServerState, responses: list, kind: str) -> dict:
    by_client: dict[int, object] = {}
    for resp in responses:
        if resp is None:
            raise BarrierTimeout(f"round {state.t}: missing {kind} response")
        if resp.t != state.t:
            raise ProtocolError(f"round {state.t}: {kind} response tagged round {resp.t}")
        if resp.client_id in by_client:
            raise ProtocolError(f"round {state.t}: duplicate {kind} response from client {resp.client_id}")
        by_client[resp.client_id] = resp
    missing = [cid for cid in state.cohort if cid not in by_client]
    if missing:
        raise BarrierTimeout(f"round {state.t}: no {kind} response from clients {missing}")
    return by_client


def receive_sketches(state: ServerState, responses: list[SketchResp]) -> list[tuple[int, AtomReq]]:
    """Sketch barrier: merge per-feature sketches, build edges, request atoms."""
    if state.phase is not Phase.AWAIT_SKETCHES:
        raise ProtocolError(f"unexpected sketches in phase {state.phase.value}")
    by_client = _check_barrier(state, responses, "sketch")
    d = len(next(iter(by_client.values())).sketches)
    merged = []
    for f in range(d):
        acc = None
        for cid in state.cohort:  # fixed merge order for determinism
            s = by_client[cid].sketches[f]
            acc = s if acc is None else acc.merge(s)
        merged.append(acc)
    state.edge_set = build_edges(merged, state.config.bins, round_t=state.t, keep_raw=state.keep_raw_quantiles)
    state.edge_history.append(state.edge_set)
    state.phase = Phase.AWAIT_ATOMS
    req = AtomReq(t=state.t, delta=state.prev_round, edge_set=state.edge_set)
    return [(cid, req) for cid in state.cohort]


def receive_atoms(state: ServerState, responses: list[AtomResp]) -> RoundTrees:
    """Atom barrier: merge atom maps, grow this round's trees."""
    if state.phase is not Phase.AWAIT_ATOMS:
        raise ProtocolError(f"unexpected atoms in phase {state.phase.value}")
    by_client = _check_barrier(state, responses, "atom")
    atom_maps = [by_client[cid].atoms for cid in state.cohort]
    merged = merge_atom_maps(atom_maps)
    trees = grow_round(merged, state.edge_set, state.config, tie_break_largest=state._tie_break_largest)
    loss_sum = 0.0
    n_total = 0
    for cid in state.cohort:
        loss_sum += by_client[cid].loss_sum
        n_total += by_client[cid].n_samples
    state.loss_reports[state.t] = (loss_sum, n_total)
    if state.ensemble is None:
        state.ensemble = Ensemble(
            n_classes=merged.n_classes, eta=state.config.eta, n_features=merged.n_features
        )
    state.ensemble.rounds.append(trees)
    state.prev_round = trees
    state.phase = Phase.IDLE
    return trees


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class FedRoundRecord:
    edge_set: EdgeSet
    # Pooled per-sample sketch weights in cohort order, for accuracy audits.
    weights_by_client: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class FedTrainResult:
    ensemble: Ensemble
    objectives: list[float]  # [J_0, ..., J_T]
    records: list[FedRoundRecord] = field(default_factory=list)
    delivery_log: list = field(default_factory=list)


def run_training(
    config: TrainConfig,
    clients: list[ClientState],
    transport,
    *,
    record_rounds: bool = False,
    cohort_sampler=None,
    _tie_break_largest: bool = False,
) -> FedTrainResult:
    """Drive T synchronous rounds over a transport and finalize the model.

    ``transport.exchange(client_id, message)`` must return the client's
    response (None models a lost response and aborts the round). ``clients``
    is either the in-process ClientState list or, for remote transports,
    just the client ids. The optional ``cohort_sampler(t, client_ids)``
    selects partial cohorts; default is full participation.
    """
    if not clients:
        raise InvalidInput("need at least one client")
    local_states = [c for c in clients if isinstance(c, ClientState)]
    ids = [c.client_id if isinstance(c, ClientState) else int(c) for c in clients]
    if len(set(ids)) != len(ids):
        raise InvalidInput("duplicate client ids")
    if record_rounds:
        for c in local_states:
            c.record_weights = True
    state = ServerState(
        config=config,
        client_ids=sorted(ids),
        keep_raw_quantiles=record_rounds,
        _tie_break_largest=_tie_break_largest,
    )
    n_classes = local_states[0].dataset.n_classes if local_states else 0
    objectives: list[float] = []
    records: list[FedRoundRecord] = []

    def _aborted(reason: str) -> TrainingAborted:
        ens = state.ensemble or Ensemble(n_classes=n_classes, eta=config.eta)
        return TrainingAborted(reason, ensemble=ens, objectives=objectives)

    for _ in range(config.rounds):
        cohort = None
        if cohort_sampler is not None:
            cohort = cohort_sampler(state.t + 1, state.client_ids)
        sketch_out = start_round(state, cohort)
        if not sketch_out:
            continue
        try:
            sketch_resps = [transport.exchange(cid, msg) for cid, msg in sketch_out]
            atom_out = receive_sketches(state, sketch_resps)
            atom_resps = [transport.exchange(cid, msg) for cid, msg in atom_out]
            receive_atoms(state, atom_resps)
        except BarrierTimeout as exc:
            raise _aborted(str(exc)) from exc
        loss_sum, n_total = state.loss_reports[state.t]
        objectives.append(loss_sum / n_total)  # loss of the model after t-1 rounds
        if record_rounds:
            rec = FedRoundRecord(edge_set=state.edge_set)
            for c in local_states:
                if state.t in c.weight_history:
                    rec.weights_by_client[c.client_id] = c.weight_history[state.t]
            records.append(rec)

    ensemble = state.ensemble or Ensemble(n_classes=n_classes, eta=config.eta)
    final = ModelFinal(ensemble=ensemble)
    loss_sum = 0.0
    n_total = 0
    for cid in state.client_ids:
        ack = transport.exchange(cid, final)
        if ack is None:
            raise _aborted("final acknowledgment missing")
        loss_sum += ack.loss_sum
        n_total += ack.n_samples
    objectives.append(loss_sum / n_total)  # J_T (J_0 when no rounds ran)
    state.phase = Phase.DONE

    log = getattr(transport, "delivery_log", [])
    return FedTrainResult(ensemble=ensemble, objectives=objectives, records=records, delivery_log=list(log))


def uniform_cohort_sampler(fraction: float, seed: int):
    """Uniform without-replacement cohort sampling at a fixed fraction."""
    rng = np.random.default_rng(seed)

    def sample(t: int, client_ids: list[int]) -> list[int]:
        k = max(1, int(round(fraction * len(client_ids))))
        return sorted(rng.choice(client_ids, size=k, replace=False).tolist())

    return sample
