"""Weighted, mergeable quantile summaries.

Two interchangeable implementations sit behind one query interface:

* ``WeightedQuantileSketch`` — geometric-bucket sketch with relative value
  accuracy ``rho``; buckets hold accumulated weight, negatives live in a
  mirrored map, and near-zero values in a dedicated band. Merging adds
  bucket weights, so partitioned streams summarize to the pooled stream.
* ``ExactWeightedQuantiler`` — the exact weighted empirical CDF, used as
  the zero-error limit of the sketch and as the oracle in accuracy tests.

Quantiles follow the left convention: the smallest value whose cumulative
weight reaches q * total_weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, EmptySketch, InvalidInput

# Values with |v| at or below this land in the zero band.
ZERO_BAND = 1e-12


class WeightedQuantileSketch:
    """Relative-accuracy weighted quantile sketch.

    Bucket i covers gamma**(i-1) < v <= gamma**i with
    gamma = (1 + rho) / (1 - rho); the representative 2*gamma**i/(gamma+1)
    is within relative error rho of every value in the bucket. Buckets are
    unbounded in number (no collapse): feature ranges at the intended scale
    are bounded, so memory stays small.
    """

    __slots__ = ("rho", "gamma", "_log_gamma", "pos", "neg", "zero_weight", "total_weight")

    def __init__(self, rho: float):
        if not (0.0 < rho < 1.0):
            raise InvalidInput("rho must lie in (0, 1)")
        self.rho = float(rho)
        self.gamma = (1.0 + rho) / (1.0 - rho)
        self._log_gamma = math.log(self.gamma)
        self.pos: dict[int, float] = {}
        self.neg: dict[int, float] = {}
        self.zero_weight = 0.0
        self.total_weight = 0.0

    # -- insertion ---------------------------------------------------------

    def insert(self, value: float, weight: float) -> None:
        if not np.isfinite(value):
            raise InvalidInput("sketch values must be finite")
        if not np.isfinite(weight) or weight < 0:
            raise InvalidInput("sketch weights must be finite and >= 0")
        if weight == 0.0:
            return
        if value > ZERO_BAND:
            key = math.ceil(math.log(value) / self._log_gamma)
            self.pos[key] = self.pos.get(key, 0.0) + weight
        elif value < -ZERO_BAND:
            key = math.ceil(math.log(-value) / self._log_gamma)
            self.neg[key] = self.neg.get(key, 0.0) + weight
        else:
            self.zero_weight += weight
        self.total_weight += weight

    def insert_many(self, values: np.ndarray, weights: np.ndarray) -> None:
        """Vectorized bulk insert; same result as repeated insert()."""
        values = np.asarray(values, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if not np.isfinite(values).all():
            raise InvalidInput("sketch values must be finite")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise InvalidInput("sketch weights must be finite and >= 0")
        live = weights > 0
        values, weights = values[live], weights[live]
        if values.size == 0:
            return
        pos_mask = values > ZERO_BAND
        neg_mask = values < -ZERO_BAND
        zero_mask = ~(pos_mask | neg_mask)
        for mask, store, sign in ((pos_mask, self.pos, 1.0), (neg_mask, self.neg, -1.0)):
            if not mask.any():
                continue
            keys = np.ceil(np.log(sign * values[mask]) / self._log_gamma).astype(np.int64)
            uniq, inv = np.unique(keys, return_inverse=True)
            sums = np.bincount(inv, weights=weights[mask])
            for k, w in zip(uniq.tolist(), sums.tolist()):
                store[k] = store.get(k, 0.0) + w
        if zero_mask.any():
            self.zero_weight += float(weights[zero_mask].sum())
        self.total_weight += float(weights.sum())

    # -- merging -----------------------------------------------------------

    def merge(self, other: "WeightedQuantileSketch") -> "WeightedQuantileSketch":
        """Bucket-wise sum of two sketches with equal rho."""
        if not isinstance(other, WeightedQuantileSketch) or other.rho != self.rho:
            raise InvalidInput("can only merge sketches with identical rho")
        out = WeightedQuantileSketch(self.rho)
        out.pos = dict(self.pos)
        out.neg = dict(self.neg)
        for key in sorted(other.pos):
            out.pos[key] = out.pos.get(key, 0.0) + other.pos[key]
        for key in sorted(other.neg):
            out.neg[key] = out.neg.get(key, 0.0) + other.neg[key]
        out.zero_weight = self.zero_weight + other.zero_weight
        out.total_weight = self.total_weight + other.total_weight
        return out

    # -- queries -----------------------------------------------------------

    def _ordered_buckets(self) -> tuple[np.ndarray, np.ndarray]:
        """Bucket representatives in ascending value order with weights."""
        reps: list[float] = []
        weights: list[float] = []
        scale = 2.0 / (self.gamma + 1.0)
        for key in sorted(self.neg, reverse=True):  # most negative first
            reps.append(-scale * self.gamma**key)
            weights.append(self.neg[key])
        if self.zero_weight > 0.0:
            reps.append(0.0)
            weights.append(self.zero_weight)
        for key in sorted(self.pos):
            reps.append(scale * self.gamma**key)
            weights.append(self.pos[key])
        return np.asarray(reps), np.asarray(weights)

    def quantile(self, q: float) -> float:
        return float(self.quantiles(np.asarray([q]))[0])

    def quantiles(self, qs: np.ndarray) -> np.ndarray:
        """Left-convention quantiles of the bucketed weight distribution."""
        qs = np.asarray(qs, dtype=np.float64)
        if ((qs < 0) | (qs > 1)).any():
            raise InvalidInput("quantile levels must lie in [0, 1]")
        if self.total_weight <= 0.0:
            raise EmptySketch("quantile query on an empty sketch")
        reps, weights = self._ordered_buckets()
        cum = np.cumsum(weights)
        targets = qs * cum[-1]
        idx = np.searchsorted(cum, targets, side="left")
        idx = np.minimum(idx, reps.size - 1)
        return reps[idx]


class ExactWeightedQuantiler:
    """Exact weighted empirical CDF with left-convention quantiles.

    Stores every (value, weight) pair; queries sort lazily. Also answers
    rank queries, which the sketch-accuracy tests use as ground truth.
    """

    __slots__ = ("_values", "_weights", "total_weight", "_sorted_values", "_cum")

    # Exact quantilers advertise rho 0.0 so protocol plumbing can treat the
    # two summary kinds uniformly.
    rho = 0.0

    def __init__(self):
        self._values: list[np.ndarray] = []
        self._weights: list[np.ndarray] = []
        self.total_weight = 0.0
        self._sorted_values: np.ndarray | None = None
        self._cum: np.ndarray | None = None

    def insert(self, value: float, weight: float) -> None:
        self.insert_many(np.asarray([value]), np.asarray([weight]))

    def insert_many(self, values: np.ndarray, weights: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if not np.isfinite(values).all():
            raise InvalidInput("values must be finite")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise InvalidInput("weights must be finite and >= 0")
        live = weights > 0
        values, weights = values[live], weights[live]
        if values.size == 0:
            return
        self._values.append(values.copy())
        self._weights.append(weights.copy())
        self.total_weight += float(weights.sum())
        self._sorted_values = None
        self._cum = None

    def merge(self, other: "ExactWeightedQuantiler") -> "ExactWeightedQuantiler":
        if not isinstance(other, ExactWeightedQuantiler):
            raise InvalidInput("can only merge exact quantilers together")
        out = ExactWeightedQuantiler()
        out._values = list(self._values) + list(other._values)
        out._weights = list(self._weights) + list(other._weights)
        out.total_weight = self.total_weight + other.total_weight
        return out

    def _materialize(self) -> None:
        if self._sorted_values is not None:
            return
        if not self._values:
            self._sorted_values = np.empty(0)
            self._cum = np.empty(0)
            return
        values = np.concatenate(self._values)
        weights = np.concatenate(self._weights)
        order = np.argsort(values, kind="stable")
        self._sorted_values = values[order]
        self._cum = np.cumsum(weights[order])

    def quantile(self, q: float) -> float:
        return float(self.quantiles(np.asarray([q]))[0])

    def quantiles(self, qs: np.ndarray) -> np.ndarray:
        qs = np.asarray(qs, dtype=np.float64)
        if ((qs < 0) | (qs > 1)).any():
            raise InvalidInput("quantile levels must lie in [0, 1]")
        if self.total_weight <= 0.0:
            raise EmptySketch("quantile query on an empty quantiler")
        self._materialize()
        targets = qs * self._cum[-1]
        idx = np.searchsorted(self._cum, targets, side="left")
        idx = np.minimum(idx, self._sorted_values.size - 1)
        return self._sorted_values[idx]

    # -- rank/CDF oracle ---------------------------------------------------

    def cdf(self, v: float) -> float:
        """F(v): weight fraction of values <= v."""
        self._materialize()
        if self._sorted_values.size == 0:
            raise EmptySketch("CDF query on an empty quantiler")
        i = np.searchsorted(self._sorted_values, v, side="right")
        return float(self._cum[i - 1] / self._cum[-1]) if i > 0 else 0.0

    def cdf_below(self, v: float) -> float:
        """F(v-): weight fraction of values strictly below v."""
        self._materialize()
        if self._sorted_values.size == 0:
            raise EmptySketch("CDF query on an empty quantiler")
        i = np.searchsorted(self._sorted_values, v, side="left")
        return float(self._cum[i - 1] / self._cum[-1]) if i > 0 else 0.0


def make_summary(rho: float):
    """Factory: rho == 0 selects the exact quantiler, else the sketch."""
    if rho == 0.0:
        return ExactWeightedQuantiler()
    return WeightedQuantileSketch(rho)


# ---------------------------------------------------------------------------
# Rank-accuracy measurement and calibration.
#
# The sketch guarantees relative VALUE error; the protocol's accuracy
# assumption is about RANK error of the edges it produces. The helpers below
# make the connection operational: measure the worst rank deviation of
# sketch-derived edges against the exact CDF over seeded streams, and pick
# the largest rho whose measured error clears the requested target with
# margin.
# ---------------------------------------------------------------------------

RHO_LADDER = (0.02, 0.01, 0.005, 0.002, 0.001, 0.0005, 0.0002, 0.0001)


@dataclass(frozen=True)
class CalibrationResult:
    rho: float
    alpha: float           # the rank-error budget the caller asked for
    measured_error: float  # worst edge rank deviation seen during calibration


def calibration_streams(n_streams: int, seed: int = 0, n_points: int = 2000):
    """Seeded weighted streams spanning the shapes edge-building sees.

    Mixes uniform, gaussian, lognormal and wide multi-cluster value
    families with Hessian-like weights in (0, 0.5].
    """
    rng = np.random.default_rng(seed)
    for s in range(n_streams):
        family = s % 4
        if family == 0:
            values = rng.uniform(-5.0, 5.0, n_points)
        elif family == 1:
            values = rng.normal(0.0, 2.0, n_points)
        elif family == 2:
            values = rng.lognormal(0.0, 1.0, n_points)
        else:
            centers = rng.normal(0.0, 10.0, 16)
            values = centers[rng.integers(0, 16, n_points)] + rng.normal(0.0, 1.0, n_points)
        weights = rng.uniform(0.01, 0.5, n_points)
        yield values, weights


def measure_rank_error(rho: float, streams, n_edges: int = 64) -> float:
    """Worst rank deviation of sketch edges at levels b/B over the streams."""
    worst = 0.0
    qs = np.arange(n_edges + 1) / n_edges
    for values, weights in streams:
        sketch = WeightedQuantileSketch(rho)
        sketch.insert_many(values, weights)
        exact = ExactWeightedQuantiler()
        exact.insert_many(values, weights)
        edges = sketch.quantiles(qs)
        for b, e in enumerate(edges):
            level = qs[b]
            lo = exact.cdf_below(float(e)) - level   # F(e-) <= level + alpha
            hi = level - exact.cdf(float(e))         # F(e)  >= level - alpha
            worst = max(worst, lo, hi)
    return worst


def calibrate_rho(alpha_target: float, n_streams: int = 40, seed: int = 0, n_edges: int = 64, margin: float = 2.0) -> CalibrationResult:
    """Select the coarsest ladder rho whose measured rank error fits alpha.

    The measured error must clear alpha_target / margin so fresh streams of
    the same families stay inside the budget.
    """
    if not (0.0 < alpha_target < 1.0):
        raise InvalidInput("alpha_target must lie in (0, 1)")
    for rho in RHO_LADDER:
        err = measure_rank_error(rho, calibration_streams(n_streams, seed=seed), n_edges=n_edges)
        if err <= alpha_target / margin:
            return CalibrationResult(rho=rho, alpha=alpha_target, measured_error=err)
    raise CalibrationError(
        f"no ladder rho reaches rank error <= {alpha_target / margin:g} (target {alpha_target:g})"
    )
