"""Histogram boosting engine: split gain, depth-wise growth, central training.

One growth routine consumes an AtomMap and an EdgeSet; the centralized
trainer and the federated server both call it, so their trees can only
differ through the statistics they feed in. The centralized round mirrors
the two-phase protocol timeline exactly:

  phase 1: derivatives at the CURRENT margins -> per-sample weights ->
           quantile summaries -> edges        (previous round not yet applied)
  phase 2: apply the previous round's trees to margins, recompute
           derivatives, aggregate atoms, grow this round's trees.

Keeping that order (including the one-round lag of the edge weights) is
what makes an exact-quantile federated run reproduce the central run
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binning import AtomMap, EdgeSet, NodePath, aggregate_atoms, build_edges
from .config import TrainConfig
from .data import Dataset
from .errors import InvalidInput
from .losses import mean_logloss, sketch_weights, softmax_grad_hess
from .sketch import make_summary
from .trees import Ensemble, RoundTrees, TreeNode, apply_round


def split_gain(gl: float, hl: float, gr: float, hr: float, lam: float, gamma: float) -> float:
    """Second-order gain of splitting (gl+gr, hl+hr) into left/right parts."""
    g = gl + gr
    h = hl + hr
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam)) - gamma


def leaf_weight(g: float, h: float, lam: float) -> float:
    return -g / (h + lam)


@dataclass
class _Frontier:
    node_id: int
    depth: int
    mask: np.ndarray
    path: NodePath


def grow_round(atoms: AtomMap, edge_set: EdgeSet, config: TrainConfig, *, tie_break_largest: bool = False) -> RoundTrees:
    """Depth-wise growth from atom statistics with class-summed gains.

    A node becomes a leaf at depth max_depth, when its Hessian mass is zero,
    or when no candidate has gain > 0. Ties break to the smallest feature
    index, then the smallest bin index (``tie_break_largest`` flips that and
    exists only for fault-injection checks). Candidate gains per class follow
    the second-order formula including the split penalty, summed over
    classes.
    """
    k = atoms.n_classes
    lam, gamma = config.lam, config.gamma
    nodes: list[TreeNode] = [TreeNode(is_leaf=True)]
    frontier = [_Frontier(0, 0, np.ones(atoms.n_atoms, dtype=bool), NodePath())]
    arange_k = np.arange(k, dtype=np.int64)

    while frontier:
        cur = frontier.pop(0)
        sub_keys = atoms.keys[cur.mask]
        sub_g = atoms.g[cur.mask]
        sub_h = atoms.h[cur.mask]
        total_g = sub_g.sum(axis=0) if sub_g.size else np.zeros(k)
        total_h = sub_h.sum(axis=0) if sub_h.size else np.zeros(k)
        node = nodes[cur.node_id]
        node.weights = -total_g / (total_h + lam)

        if cur.depth >= config.max_depth or float(total_h.sum()) == 0.0:
            continue

        best_gain = 0.0
        best_f = -1
        best_q = -1
        best = None
        lo, hi = cur.path.bin_ranges(atoms.bins_per_feature)
        for f in range(atoms.n_features):
            q_lo = max(int(lo[f]) + 1, 1)
            q_hi = min(int(hi[f]), atoms.bins_per_feature[f])
            if q_hi - q_lo < 1:
                continue
            nb = atoms.bins_per_feature[f]
            # One fused bincount per statistic: flat index (bin * K + class)
            # accumulates in sample-major order, identical to per-class
            # bincounts over the same subset.
            flat = (sub_keys[:, f].astype(np.int64)[:, None] * k + arange_k).ravel()
            g_hist = np.bincount(flat, weights=sub_g.ravel(), minlength=nb * k).reshape(nb, k)
            h_hist = np.bincount(flat, weights=sub_h.ravel(), minlength=nb * k).reshape(nb, k)
            g_cum = np.cumsum(g_hist, axis=0)
            h_cum = np.cumsum(h_hist, axis=0)
            tot_g = g_cum[-1]
            tot_h = h_cum[-1]
            gl = g_cum[q_lo - 1 : q_hi - 1]  # (nq, K)
            hl = h_cum[q_lo - 1 : q_hi - 1]
            gr = tot_g[None, :] - gl
            hr = tot_h[None, :] - hl
            parent_term = (tot_g * tot_g) / (tot_h + lam)
            gains = 0.5 * (
                gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent_term[None, :]
            ) - gamma
            gains_summed = gains.sum(axis=1)
            # argmax returns the first maximum: the smallest-q tie-break.
            if tie_break_largest:
                idx = gains_summed.size - 1 - int(np.argmax(gains_summed[::-1]))
            else:
                idx = int(np.argmax(gains_summed))
            gain = float(gains_summed[idx])
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_q = q_lo + idx
                best = (gl[idx].copy(), hl[idx].copy(), gr[idx].copy(), hr[idx].copy())

        if best is None:
            continue

        gl_v, hl_v, gr_v, hr_v = best
        left_id = len(nodes)
        right_id = left_id + 1
        nodes.append(TreeNode(is_leaf=True, weights=-gl_v / (hl_v + lam)))
        nodes.append(TreeNode(is_leaf=True, weights=-gr_v / (hr_v + lam)))
        node.is_leaf = False
        node.feature = best_f
        node.bin_q = best_q
        node.threshold = float(edge_set.edges[best_f][best_q])
        node.left = left_id
        node.right = right_id
        node.gain = best_gain
        node.weights = None

        key_f = atoms.keys[:, best_f]
        left_mask = cur.mask & (key_f < best_q)
        right_mask = cur.mask & (key_f >= best_q)
        frontier.append(_Frontier(left_id, cur.depth + 1, left_mask, cur.path.extended(best_f, best_q, "L")))
        frontier.append(_Frontier(right_id, cur.depth + 1, right_mask, cur.path.extended(best_f, best_q, "R")))

    return RoundTrees(nodes=nodes, n_classes=k)


def build_round_edges(features: np.ndarray, weights: np.ndarray, config: TrainConfig, round_t: int, keep_raw: bool = False) -> EdgeSet:
    """Per-feature weighted quantile edges for one round."""
    summaries = []
    for f in range(features.shape[1]):
        s = make_summary(config.rho)
        s.insert_many(features[:, f], weights)
        summaries.append(s)
    return build_edges(summaries, config.bins, round_t=round_t, keep_raw=keep_raw)


def grow_round_central(dataset: Dataset, margins: np.ndarray, edge_set: EdgeSet, config: TrainConfig) -> RoundTrees:
    """One centralized round conditional on a given edge set."""
    gh = softmax_grad_hess(margins, dataset.labels)
    atoms = aggregate_atoms(dataset.features, gh, edge_set)
    return grow_round(atoms, edge_set, config)


@dataclass
class RoundRecord:
    """Diagnostics captured per round when requested."""

    edge_set: EdgeSet
    weight_values: np.ndarray | None = None  # per-sample sketch weights
    feature_values: np.ndarray | None = None


@dataclass
class TrainResult:
    ensemble: Ensemble
    objectives: list[float]          # [J_0, ..., J_T], training log-loss
    records: list[RoundRecord] = field(default_factory=list)


def train_central(dataset: Dataset, config: TrainConfig, *, record_rounds: bool = False) -> TrainResult:
    """Centralized training with exact Hessian-weighted quantile binning.

    Always uses the exact quantiler (the rho -> 0 limit) regardless of
    config.rho; the federated path owns sketched edges.
    """
    if dataset.n_classes < 2:
        raise InvalidInput("need at least two classes")
    exact_cfg = config.with_(rho=0.0)
    x = dataset.features
    margins = np.zeros((dataset.n_samples, dataset.n_classes))
    ensemble = Ensemble(n_classes=dataset.n_classes, eta=config.eta, n_features=dataset.n_features)
    objectives = [mean_logloss(margins, dataset.labels)]
    records: list[RoundRecord] = []
    prev: RoundTrees | None = None
    eta_eff = config.eta

    for t in range(1, config.rounds + 1):
        # Phase 1: edge weights at the margins the previous round has not
        # yet touched (the protocol's sketch phase sees exactly these).
        gh1 = softmax_grad_hess(margins, dataset.labels)
        w = sketch_weights(gh1.h)
        edge_set = build_round_edges(x, w, exact_cfg, round_t=t, keep_raw=record_rounds)
        if record_rounds:
            records.append(RoundRecord(edge_set=edge_set, weight_values=w.copy(), feature_values=x))
        # Phase 2: advance margins by the previous round, then grow.
        if prev is not None:
            margins = apply_round(margins, prev, x, eta_eff)
            objectives.append(mean_logloss(margins, dataset.labels))
        rt = grow_round_central(dataset, margins, edge_set, config)
        ensemble.rounds.append(rt)
        prev = rt

    if prev is not None:
        margins = apply_round(margins, prev, x, eta_eff)
        objectives.append(mean_logloss(margins, dataset.labels))
    return TrainResult(ensemble=ensemble, objectives=objectives, records=records)
