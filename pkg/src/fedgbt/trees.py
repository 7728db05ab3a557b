"""Tree and ensemble structures shared by the central and federated paths.

A boosting round grows one split structure whose leaves carry a K-vector of
class weights; this realizes "one tree per class per round" as K structurally
identical trees differing only in leaf weights. Leaf weights are stored RAW;
the learning rate is applied exactly once, at margin accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput


@dataclass
class TreeNode:
    """Either an internal split (feature, bin_q, threshold) or a leaf."""

    is_leaf: bool
    feature: int = -1
    bin_q: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    weights: np.ndarray | None = None  # (K,) raw leaf weights
    gain: float = 0.0                  # recorded split gain (diagnostics)


@dataclass
class RoundTrees:
    """The shared-structure tree group of one boosting round."""

    nodes: list[TreeNode]
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def route(self, features: np.ndarray) -> np.ndarray:
        """Leaf index per sample; left iff x[feature] < threshold."""
        n = features.shape[0]
        assign = np.zeros(n, dtype=np.int64)
        for i, node in enumerate(self.nodes):
            if node.is_leaf:
                continue
            here = assign == i
            if not here.any():
                continue
            go_left = features[:, node.feature] < node.threshold
            assign[here & go_left] = node.left
            assign[here & ~go_left] = node.right
        return assign

    def leaf_matrix(self) -> np.ndarray:
        """(n_nodes, K) matrix of leaf weights; internal rows are zero."""
        out = np.zeros((len(self.nodes), self.n_classes))
        for i, node in enumerate(self.nodes):
            if node.is_leaf:
                out[i] = node.weights
        return out

    def predict_raw(self, features: np.ndarray) -> np.ndarray:
        """(n, K) raw (unscaled) leaf weights for each sample."""
        return self.leaf_matrix()[self.route(features)]

    def internal_nodes(self):
        return [n for n in self.nodes if not n.is_leaf]


@dataclass
class Ensemble:
    """Additive model: margins = base + eta * sum of per-round raw trees."""

    n_classes: int
    eta: float
    rounds: list[RoundTrees] = field(default_factory=list)
    base_margin: float = 0.0
    n_features: int = 0  # 0 = unknown (hand-built); set by the trainers

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)


def apply_round(margins: np.ndarray, round_trees: RoundTrees, features: np.ndarray, eta: float) -> np.ndarray:
    """margins + eta * tree(features); the single place eta is applied."""
    return margins + eta * round_trees.predict_raw(features)


def predict_margins(ensemble: Ensemble, features: np.ndarray) -> np.ndarray:
    """Replay the ensemble's rounds from the base margin."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise InvalidInput("features must be (n, d)")
    if ensemble.n_features and features.shape[1] != ensemble.n_features:
        raise InvalidInput(
            f"ensemble was trained on {ensemble.n_features} features, input has {features.shape[1]}"
        )
    margins = np.full((features.shape[0], ensemble.n_classes), ensemble.base_margin, dtype=np.float64)
    for rt in ensemble.rounds:
        dmax = _tree_feature_dim(rt)
        if dmax is not None and dmax >= features.shape[1]:
            raise InvalidInput(
                f"ensemble references feature {dmax} but input has {features.shape[1]} columns"
            )
        margins = apply_round(margins, rt, features, ensemble.eta)
    return margins


def _tree_feature_dim(rt: RoundTrees) -> int | None:
    feats = [n.feature for n in rt.nodes if not n.is_leaf]
    return max(feats) if feats else None


def round_trees_equal(a: RoundTrees, b: RoundTrees, leaf_rtol: float = 0.0) -> bool:
    """Structural equality plus leaf weights within a relative tolerance."""
    if a.n_nodes != b.n_nodes or a.n_classes != b.n_classes:
        return False
    for na, nb in zip(a.nodes, b.nodes):
        if na.is_leaf != nb.is_leaf:
            return False
        if na.is_leaf:
            wa, wb = na.weights, nb.weights
            if leaf_rtol == 0.0:
                if not np.array_equal(wa, wb):
                    return False
            else:
                scale = np.maximum(np.abs(wa), np.abs(wb))
                if not (np.abs(wa - wb) <= leaf_rtol * np.maximum(scale, 1e-300)).all():
                    return False
        else:
            if (na.feature, na.bin_q, na.left, na.right) != (nb.feature, nb.bin_q, nb.left, nb.right):
                return False
            if leaf_rtol == 0.0 and na.threshold != nb.threshold:
                return False
    return True


def ensembles_equal(a: Ensemble, b: Ensemble, leaf_rtol: float = 0.0) -> bool:
    if a.n_rounds != b.n_rounds or a.n_classes != b.n_classes:
        return False
    return all(round_trees_equal(x, y, leaf_rtol) for x, y in zip(a.rounds, b.rounds))


def ensemble_diff_summary(a: Ensemble, b: Ensemble, leaf_rtol: float = 1e-12) -> str:
    """'identical' or the first divergent (round, node) location."""
    if a.n_rounds != b.n_rounds:
        return f"round-count mismatch: {a.n_rounds} vs {b.n_rounds}"
    for t, (ra, rb) in enumerate(zip(a.rounds, b.rounds), start=1):
        if ra.n_nodes != rb.n_nodes:
            return f"first divergence: round {t} (node count {ra.n_nodes} vs {rb.n_nodes})"
        for i, (na, nb) in enumerate(zip(ra.nodes, rb.nodes)):
            if na.is_leaf != nb.is_leaf:
                return f"first divergence: round {t} node {i} (leaf vs split)"
            if na.is_leaf:
                scale = np.maximum(np.abs(na.weights), np.abs(nb.weights))
                if not (np.abs(na.weights - nb.weights) <= leaf_rtol * np.maximum(scale, 1e-300)).all():
                    return f"first divergence: round {t} node {i} (leaf weights)"
            elif (na.feature, na.bin_q) != (nb.feature, nb.bin_q):
                return f"first divergence: round {t} node {i} (split {na.feature}/{na.bin_q} vs {nb.feature}/{nb.bin_q})"
    return "identical"
