"""Global surrogate binning and atom algebra.

Per-feature edge vectors quantize samples to bin-index vectors; samples
sharing a bin vector collapse into an "atom" carrying (count, per-class
gradient sum, per-class Hessian sum). Tree growth consumes atoms only,
which is what makes the server-side split search equivalent to histogram
boosting on the quantized data.

Conventions fixed here and relied on everywhere else:

* A feature with deduped edges e_0 < ... < e_B has B bins; bin(x) is the
  largest b in [0, B-1] with e_b <= x (clamped to 0 below e_0).
* Split candidates are q in {1..B-1} with threshold e_q; a sample routes
  left iff bin(x) < q iff x < e_q.
* Every reduction over atoms iterates keys in lexicographic order, so
  central and federated paths produce bit-comparable sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySketch, InvalidInput, ProtocolError
from .losses import GradHess


@dataclass(frozen=True)
class EdgeSet:
    """Per-feature strictly increasing bin edges for one boosting round.

    ``raw_quantiles`` optionally keeps the undeduplicated B+1 quantile
    values per feature for accuracy diagnostics; it is not part of the wire
    contract or of equality.
    """

    round_t: int
    edges: tuple[np.ndarray, ...]
    raw_quantiles: tuple[np.ndarray, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        for e in self.edges:
            if e.ndim != 1 or e.size < 1:
                raise InvalidInput("each feature needs at least one edge")
            if e.size > 1 and not (np.diff(e) > 0).all():
                raise InvalidInput("edges must be strictly increasing")

    @property
    def n_features(self) -> int:
        return len(self.edges)

    @property
    def bins_per_feature(self) -> tuple[int, ...]:
        # B_f = len(edges) - 1 bins; a single (degenerate) edge still forms
        # one catch-all bin with no split candidates.
        return tuple(max(e.size - 1, 1) for e in self.edges)

    def candidate_range(self, f: int) -> range:
        return range(1, self.bins_per_feature[f])


def build_edges(summaries, n_bins: int, round_t: int = 0, keep_raw: bool = False) -> EdgeSet:
    """Quantile edges at levels b/B for b = 0..B from per-feature summaries.

    ``summaries`` is one quantile summary (sketch or exact) per feature.
    Consecutive duplicate quantiles collapse to one edge, shrinking the
    candidate set; a summary with no weight yields a single degenerate bin
    rather than an error.
    """
    if n_bins < 2:
        raise InvalidInput("n_bins must be >= 2")
    qs = np.arange(n_bins + 1, dtype=np.float64) / n_bins
    edges: list[np.ndarray] = []
    raw: list[np.ndarray] = []
    for summary in summaries:
        try:
            vals = np.asarray(summary.quantiles(qs), dtype=np.float64)
        except EmptySketch:
            vals = np.zeros(1)
        raw.append(vals)
        edges.append(np.unique(vals))
    return EdgeSet(
        round_t=round_t,
        edges=tuple(edges),
        raw_quantiles=tuple(raw) if keep_raw else None,
    )


def bin_index(edges: np.ndarray, x: float) -> int:
    """Largest bin b in [0, B_f - 1] with edges[b] <= x, clamped to 0."""
    if np.isnan(x):
        raise InvalidInput("bin_index: NaN input")
    n_bins = max(edges.size - 1, 1)
    b = int(np.searchsorted(edges, x, side="right")) - 1
    return min(max(b, 0), n_bins - 1)


def bin_matrix(features: np.ndarray, edge_set: EdgeSet) -> np.ndarray:
    """Quantize an (n, d) feature matrix to uint16 bin indices."""
    n, d = features.shape
    if d != edge_set.n_features:
        raise InvalidInput("feature count does not match edge set")
    out = np.empty((n, d), dtype=np.uint16)
    for f in range(d):
        e = edge_set.edges[f]
        n_bins = max(e.size - 1, 1)
        b = np.searchsorted(e, features[:, f], side="right") - 1
        np.clip(b, 0, n_bins - 1, out=b)
        out[:, f] = b
    return out


@dataclass
class AtomMap:
    """Sufficient statistics per occupied bin-index vector.

    ``keys`` is (m, d) uint16 sorted lexicographically; ``w`` sample counts,
    ``g``/``h`` per-class gradient/Hessian sums aligned with keys.
    """

    round_t: int
    keys: np.ndarray   # (m, d) uint16, lexicographically sorted rows
    w: np.ndarray      # (m,) int64
    g: np.ndarray      # (m, K) float64
    h: np.ndarray      # (m, K) float64
    bins_per_feature: tuple[int, ...]

    @property
    def n_atoms(self) -> int:
        return self.keys.shape[0]

    @property
    def n_features(self) -> int:
        return self.keys.shape[1]

    @property
    def n_classes(self) -> int:
        return self.g.shape[1]

    def key_width(self) -> int:
        """Bytes per feature in the wire key encoding."""
        return 1 if max(self.bins_per_feature) <= 256 else 2


def _lex_sort_rows(keys: np.ndarray) -> np.ndarray:
    """Indices sorting rows lexicographically (first column major)."""
    return np.lexsort(tuple(keys[:, f] for f in range(keys.shape[1] - 1, -1, -1)))


def _group_rows(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique rows in lexicographic order plus each row's group index."""
    order = _lex_sort_rows(keys)
    sorted_keys = keys[order]
    if sorted_keys.shape[0] == 0:
        return sorted_keys, np.empty(0, dtype=np.int64)
    new_group = np.empty(sorted_keys.shape[0], dtype=bool)
    new_group[0] = True
    np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1, out=new_group[1:])
    group_of_sorted = np.cumsum(new_group) - 1
    inverse = np.empty(keys.shape[0], dtype=np.int64)
    inverse[order] = group_of_sorted
    return sorted_keys[new_group], inverse


def aggregate_atoms(features: np.ndarray, grad_hess: GradHess, edge_set: EdgeSet) -> AtomMap:
    """Quantize samples and sum (1, g, h) per occupied bin vector.

    Per-atom sums accumulate in sample order; atoms emerge sorted by key.
    """
    g, h = grad_hess.g, grad_hess.h
    n, d = features.shape
    if g.shape[0] != n or h.shape != g.shape:
        raise InvalidInput("gradient/Hessian shapes do not match the dataset")
    bins = bin_matrix(features, edge_set)
    uniq, inverse = _group_rows(bins)
    m = uniq.shape[0]
    k = g.shape[1]
    w = np.bincount(inverse, minlength=m).astype(np.int64)
    g_sum = np.empty((m, k))
    h_sum = np.empty((m, k))
    for c in range(k):
        g_sum[:, c] = np.bincount(inverse, weights=g[:, c], minlength=m)
        h_sum[:, c] = np.bincount(inverse, weights=h[:, c], minlength=m)
    return AtomMap(
        round_t=edge_set.round_t,
        keys=uniq.copy(),
        w=w,
        g=g_sum,
        h=h_sum,
        bins_per_feature=edge_set.bins_per_feature,
    )


def merge_atom_maps(maps: list[AtomMap]) -> AtomMap:
    """Keywise sum of per-client atom maps from the same round."""
    if not maps:
        raise InvalidInput("merge_atom_maps needs at least one map")
    first = maps[0]
    for m in maps[1:]:
        if m.round_t != first.round_t:
            raise ProtocolError(
                f"atom maps from different rounds: {m.round_t} vs {first.round_t}"
            )
        if m.n_features != first.n_features or m.n_classes != first.n_classes:
            raise ProtocolError("atom maps disagree on shape")
        if m.bins_per_feature != first.bins_per_feature:
            raise ProtocolError("atom maps built against different edge sets")
    if len(maps) == 1:
        return first
    keys = np.vstack([m.keys for m in maps])
    uniq, inverse = _group_rows(keys)
    n_out = uniq.shape[0]
    k = first.n_classes
    w = np.bincount(inverse, weights=np.concatenate([m.w for m in maps]), minlength=n_out).astype(np.int64)
    g = np.empty((n_out, k))
    h = np.empty((n_out, k))
    g_all = np.vstack([m.g for m in maps])
    h_all = np.vstack([m.h for m in maps])
    for c in range(k):
        g[:, c] = np.bincount(inverse, weights=g_all[:, c], minlength=n_out)
        h[:, c] = np.bincount(inverse, weights=h_all[:, c], minlength=n_out)
    return AtomMap(
        round_t=first.round_t,
        keys=uniq.copy(),
        w=w,
        g=g,
        h=h,
        bins_per_feature=first.bins_per_feature,
    )


@dataclass(frozen=True)
class NodePath:
    """Root-to-node split constraints, compiled to per-feature bin ranges."""

    constraints: tuple[tuple[int, int, str], ...] = ()  # (feature, q, 'L'|'R')

    def extended(self, feature: int, q: int, direction: str) -> "NodePath":
        if direction not in ("L", "R"):
            raise InvalidInput("direction must be 'L' or 'R'")
        return NodePath(self.constraints + ((feature, q, direction),))

    def bin_ranges(self, bins_per_feature: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature [lo, hi) bin intervals implied by the constraints."""
        d = len(bins_per_feature)
        lo = np.zeros(d, dtype=np.int64)
        hi = np.asarray(bins_per_feature, dtype=np.int64).copy()
        for f, q, direction in self.constraints:
            if direction == "L":
                hi[f] = min(hi[f], q)
            else:
                lo[f] = max(lo[f], q)
        return lo, hi


def path_mask(atoms: AtomMap, path: NodePath) -> np.ndarray:
    """Boolean mask of atoms satisfying the path's bin ranges."""
    lo, hi = path.bin_ranges(atoms.bins_per_feature)
    mask = np.ones(atoms.n_atoms, dtype=bool)
    for f in range(atoms.n_features):
        if lo[f] > 0:
            mask &= atoms.keys[:, f] >= lo[f]
        if hi[f] < atoms.bins_per_feature[f]:
            mask &= atoms.keys[:, f] < hi[f]
    return mask


def feature_histograms(atoms: AtomMap, mask: np.ndarray, f: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bin (W, G, H) sums over masked atoms for one feature.

    Accumulation follows the atoms' sorted key order.
    """
    nb = atoms.bins_per_feature[f]
    keys_f = atoms.keys[mask, f]
    w_hist = np.bincount(keys_f, weights=atoms.w[mask].astype(np.float64), minlength=nb)
    k = atoms.n_classes
    g_hist = np.empty((nb, k))
    h_hist = np.empty((nb, k))
    g_sub = atoms.g[mask]
    h_sub = atoms.h[mask]
    for c in range(k):
        g_hist[:, c] = np.bincount(keys_f, weights=g_sub[:, c], minlength=nb)
        h_hist[:, c] = np.bincount(keys_f, weights=h_sub[:, c], minlength=nb)
    return w_hist, g_hist, h_hist


def prefix_stats(atoms: AtomMap, path: NodePath, f: int, q: int):
    """Left/right sufficient statistics for candidate split (f, q).

    Atoms on the node path split by key[f] < q. Returns
    (GL, HL, GR, HR, WL, WR) with per-class vectors; q == B_f is the
    conceptual all-left boundary. The right side comes from subtracting the
    left prefix from the node total, mirroring the histogram engine.
    """
    nb = atoms.bins_per_feature[f]
    if not (1 <= q <= nb):
        raise InvalidInput(f"candidate q={q} outside 1..{nb}")
    mask = path_mask(atoms, path)
    w_hist, g_hist, h_hist = feature_histograms(atoms, mask, f)
    w_cum = np.cumsum(w_hist)
    g_cum = np.cumsum(g_hist, axis=0)
    h_cum = np.cumsum(h_hist, axis=0)
    gl = g_cum[q - 1].copy()
    hl = h_cum[q - 1].copy()
    wl = float(w_cum[q - 1])
    gr = g_cum[-1] - gl
    hr = h_cum[-1] - hl
    wr = float(w_cum[-1] - wl)
    return gl, hl, gr, hr, wl, wr
