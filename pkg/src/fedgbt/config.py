"""Training configuration and the key=value run-config file format."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import InvalidInput

# Defaults follow the reference experimental setup.
DEFAULT_ROUNDS = 10
DEFAULT_MAX_DEPTH = 4
DEFAULT_BINS = 64
DEFAULT_LAMBDA = 1.0
DEFAULT_GAMMA = 0.1
DEFAULT_ETA = 0.2
DEFAULT_RHO = 0.001


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run (central or federated)."""

    rounds: int = DEFAULT_ROUNDS
    max_depth: int = DEFAULT_MAX_DEPTH
    bins: int = DEFAULT_BINS
    lam: float = DEFAULT_LAMBDA
    gamma: float = DEFAULT_GAMMA
    eta: float = DEFAULT_ETA
    seed: int = 0
    # Sketch accuracy for the federated path; 0.0 selects the exact
    # weighted quantiler (the zero-error limit).
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if self.rounds < 0:
            raise InvalidInput("rounds must be >= 0")
        if self.max_depth < 1:
            raise InvalidInput("max_depth must be >= 1")
        if self.bins < 2:
            raise InvalidInput("bins must be >= 2")
        if not self.lam > 0:
            raise InvalidInput("lambda must be > 0 (gain denominators are bounded below by it)")
        if self.gamma < 0:
            raise InvalidInput("gamma must be >= 0")
        if not (0.0 < self.eta <= 1.0):
            raise InvalidInput("eta must lie in (0, 1]")
        if self.rho < 0 or self.rho >= 1:
            raise InvalidInput("rho must lie in [0, 1); 0 means exact quantiles")

    @property
    def exact_sketch(self) -> bool:
        return self.rho == 0.0

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class RunConfig:
    """Full run description: data, split, partition and training knobs."""

    train: TrainConfig = field(default_factory=TrainConfig)
    data_path: str | None = None
    label_column: str = "label"
    id_column: str | None = None
    mode: str = "central"  # central | fed
    # Partition spec: "by-id", "iid:K", or "label-skew:K:ALPHA".
    clients: str = "iid:1"
    train_fraction: float = 0.8
    split_seed: int = 0
    out_dir: str | None = None
    compare_central: bool = True

    def partition_mode(self) -> tuple[str, dict]:
        spec = self.clients.strip()
        if spec == "by-id":
            return "by-id", {}
        parts = spec.split(":")
        if parts[0] == "iid" and len(parts) == 2:
            return "iid", {"k": int(parts[1])}
        if parts[0] == "label-skew" and len(parts) == 3:
            return "label-skew", {"k": int(parts[1]), "alpha": float(parts[2])}
        raise InvalidInput(f"unrecognized client partition spec: {spec!r}")


# Keys accepted in run-config files, mapped onto RunConfig/TrainConfig fields.
_TRAIN_KEYS = {
    "rounds": int,
    "max_depth": int,
    "bins": int,
    "lambda": float,
    "gamma": float,
    "eta": float,
    "seed": int,
    "rho": float,
}
_RUN_KEYS = {
    "data": str,
    "label_column": str,
    "id_column": str,
    "mode": str,
    "clients": str,
    "train_fraction": float,
    "split_seed": int,
    "out": str,
}


def parse_config_file(path: str | Path) -> dict:
    """Parse a ``key = value`` config file.

    Lines are ``key = value``; blank lines and ``#`` comments are ignored.
    Unknown keys raise InvalidInput so typos cannot silently pass.
    """
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in _TRAIN_KEYS:
            values[key] = _TRAIN_KEYS[key](val)
        elif key in _RUN_KEYS:
            values[key] = _RUN_KEYS[key](val)
        elif key == "exact_sketch":
            values["rho"] = 0.0 if val.lower() in ("1", "true", "yes") else values.get("rho", DEFAULT_RHO)
        else:
            raise InvalidInput(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def apply_config_values(run: RunConfig, values: dict) -> RunConfig:
    """Overlay parsed config-file values on a RunConfig.

    Config-file values take precedence over anything already set from
    command-line flags (documented in the README).
    """
    train_kw = {}
    for key, val in values.items():
        if key in _TRAIN_KEYS:
            train_kw["lam" if key == "lambda" else key] = val
    if train_kw:
        run.train = run.train.with_(**train_kw)
    if "data" in values:
        run.data_path = values["data"]
    if "label_column" in values:
        run.label_column = values["label_column"]
    if "id_column" in values:
        run.id_column = values["id_column"]
    if "mode" in values:
        run.mode = values["mode"]
    if "clients" in values:
        run.clients = values["clients"]
    if "train_fraction" in values:
        run.train_fraction = values["train_fraction"]
    if "split_seed" in values:
        run.split_seed = values["split_seed"]
    if "out" in values:
        run.out_dir = values["out"]
    return run
