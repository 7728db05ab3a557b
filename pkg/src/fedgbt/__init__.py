"""Federated histogram gradient-boosted trees.

A server-centric two-phase protocol (Hessian-weighted quantile sketches ->
global bin edges -> aggregated atom statistics -> depth-wise tree growth)
plus a centralized reference engine with the same round semantics, so the
two can be compared tree for tree.
"""

from .binning import AtomMap, EdgeSet, NodePath, aggregate_atoms, bin_index, build_edges, merge_atom_maps, prefix_stats
from .config import RunConfig, TrainConfig
from .data import CsvSchema, Dataset, SplitSpec, hash_split, load_csv, partition_clients
from .engine import grow_round, grow_round_central, leaf_weight, split_gain, train_central
from .losses import GradHess, mean_logloss, softmax_grad_hess
from .protocol import ClientState, FedTrainResult, run_training
from .sketch import ExactWeightedQuantiler, WeightedQuantileSketch, calibrate_rho
from .transport import CodecTransport, SimTransport
from .trees import Ensemble, RoundTrees, predict_margins

__version__ = "0.1.0"

__all__ = [
    "AtomMap",
    "ClientState",
    "CodecTransport",
    "CsvSchema",
    "Dataset",
    "EdgeSet",
    "Ensemble",
    "ExactWeightedQuantiler",
    "FedTrainResult",
    "GradHess",
    "NodePath",
    "RoundTrees",
    "RunConfig",
    "SimTransport",
    "SplitSpec",
    "TrainConfig",
    "WeightedQuantileSketch",
    "aggregate_atoms",
    "bin_index",
    "build_edges",
    "calibrate_rho",
    "grow_round",
    "grow_round_central",
    "hash_split",
    "leaf_weight",
    "load_csv",
    "mean_logloss",
    "merge_atom_maps",
    "partition_clients",
    "predict_margins",
    "prefix_stats",
    "run_training",
    "softmax_grad_hess",
    "split_gain",
    "train_central",
]
