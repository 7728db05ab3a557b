"""Command-line entry point.

Subcommands: ``train`` (central or federated with --mode), ``sweep``
(bins or rho axis), ``verify`` (built-in property suites) and ``gen-data``
(synthetic CSV for demos). Exit codes: 0 success, 1 verification failure,
2 usage/config/data errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, TrainConfig, apply_config_values, parse_config_file
from .data import CsvSchema, SplitSpec, hash_split, load_csv, partition_clients
from .engine import train_central
from .errors import FedGbtError, InvalidInput
from .report import SweepPoint, console_table, write_run_report, write_sweep_report
from .runs import build_report, client_validation_metrics, evaluate_ensemble, run_federated
from .verify import run_verification

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="key=value config file (overrides flags)")
    p.add_argument("--data", type=str, default=None, help="CSV dataset path")
    p.add_argument("--label-column", type=str, default="label")
    p.add_argument("--id-column", type=str, default=None)
    p.add_argument("--clients", type=str, default="iid:1", help="by-id | iid:K | label-skew:K:ALPHA")
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--exact-sketch", action="store_true", help="use exact weighted quantiles (rho=0)")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", type=str, default=None, help="directory for CSV reports and figures")


def _run_config_from_args(args) -> RunConfig:
    train_kw = {}
    for attr, field in (
        ("rounds", "rounds"),
        ("depth", "max_depth"),
        ("bins", "bins"),
        ("lam", "lam"),
        ("gamma", "gamma"),
        ("eta", "eta"),
        ("seed", "seed"),
        ("rho", "rho"),
    ):
        val = getattr(args, attr, None)
        if val is not None:
            train_kw[field] = val
    if getattr(args, "exact_sketch", False):
        train_kw["rho"] = 0.0
    run = RunConfig(train=TrainConfig(**train_kw))
    run.data_path = args.data
    run.label_column = args.label_column
    run.id_column = args.id_column
    run.clients = args.clients
    run.train_fraction = args.train_fraction
    run.out_dir = args.out
    if getattr(args, "mode", None):
        run.mode = args.mode
    if args.config:
        run = apply_config_values(run, parse_config_file(args.config))
    return run


def _load_split(run: RunConfig):
    if not run.data_path:
        raise InvalidInput("--data (or a config-file 'data' entry) is required")
    path = Path(run.data_path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    schema = CsvSchema(label_column=run.label_column, id_column=run.id_column)
    full = load_csv(path, schema)
    if run.train_fraction >= 1.0:
        return full, None
    train, valid = hash_split(full, SplitSpec(train_fraction=run.train_fraction, seed=run.split_seed))
    if train is None:
        raise InvalidInput("hash split produced an empty training set; raise --train-fraction")
    return train, valid


def _cmd_train(args) -> int:
    run = _run_config_from_args(args)
    train_ds, valid_ds = _load_split(run)
    config = run.train
    extra = {"mode": run.mode, "clients": run.clients, "data": run.data_path}

    if run.mode == "central":
        central = train_central(train_ds, config)
        report = build_report(config, central=central, train_data=train_ds, valid_data=valid_ds, extra_config=extra)
    elif run.mode == "fed":
        mode, kw = run.partition_mode()
        parts = partition_clients(train_ds, mode, seed=config.seed, **kw)
        fed = run_federated(parts, config)
        central = train_central(train_ds, config) if run.compare_central else None
        client_metrics = None
        if run.id_column and valid_ds is not None and valid_ds.client_ids is not None:
            valid_parts = partition_clients(valid_ds, "by-id")
            names = []
            for part in valid_parts:
                names.append(str(part.client_ids[0]) if part.client_ids else "unknown")
            client_metrics = client_validation_metrics(fed.ensemble, valid_parts, names)
        report = build_report(
            config,
            central=central,
            fed=fed,
            train_data=train_ds,
            valid_data=valid_ds,
            client_metrics=client_metrics,
            extra_config=extra,
        )
    else:
        raise InvalidInput(f"--mode must be central or fed, got {run.mode!r}")

    print(console_table(report))
    if run.out_dir:
        paths = write_run_report(report, run.out_dir, stem=f"train_{run.mode}")
        print("\nwrote: " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    run = _run_config_from_args(args)
    values = args.values
    if len(values) < 2:
        raise InvalidInput("sweep needs at least two --values")
    train_ds, valid_ds = _load_split(run)
    mode, kw = run.partition_mode()

    points = []
    for v in values:
        if args.axis == "bins":
            config = run.train.with_(bins=int(v))
        else:
            config = run.train.with_(rho=float(v))
        parts = partition_clients(train_ds, mode, seed=config.seed, **kw)
        fed = run_federated(parts, config)
        central = train_central(train_ds, config)
        gap = max(abs(a - b) for a, b in zip(central.objectives, fed.objectives))
        acc_c = acc_f = None
        if valid_ds is not None:
            acc_c, _ = evaluate_ensemble(central.ensemble, valid_ds)
            acc_f, _ = evaluate_ensemble(fed.ensemble, valid_ds)
        points.append(SweepPoint(value=float(v), max_gap=gap, accuracy_central=acc_c, accuracy_fed=acc_f))
        print(f"{args.axis}={v}: max objective gap {gap:.3e}"
              + (f", valid acc central {acc_c:.4f} fed {acc_f:.4f}" if acc_c is not None else ""))

    if run.out_dir:
        paths = write_sweep_report(args.axis, points, run.out_dir)
        print("wrote: " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_verification(inject=args.inject)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
    if failed:
        print(f"\nfirst failing property: {failed[0].name}", file=sys.stderr)
        return EXIT_VERIFY_FAIL
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    from .synthetic import gaussian_blobs, write_csv

    ds = gaussian_blobs(
        n_samples=args.samples,
        n_features=args.features,
        n_classes=args.classes,
        seed=args.seed if args.seed is not None else 0,
        n_subjects=args.subjects,
    )
    write_csv(ds, args.out_file, label_column="label", id_column="subject" if args.subjects else None)
    print(f"wrote {args.out_file}: {ds.n_samples} rows, {ds.n_features} features, {ds.n_classes} classes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedgbt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model centrally or over a simulated federation")
    p_train.add_argument("--mode", choices=("central", "fed"), default="central")
    _add_common_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_sweep = sub.add_parser("sweep", help="train across an axis of bins or sketch accuracies")
    p_sweep.add_argument("--axis", choices=("bins", "rho"), required=True)
    p_sweep.add_argument("--values", nargs="+", type=float, required=True)
    _add_common_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the built-in property suites")
    p_verify.add_argument("--inject", choices=("tie-break", "double-eta"), default=None,
                          help="plant a known fault to confirm the suites catch it")
    p_verify.set_defaults(func=_cmd_verify)

    p_gen = sub.add_parser("gen-data", help="write a synthetic blob CSV")
    p_gen.add_argument("out_file", type=str)
    p_gen.add_argument("--samples", type=int, default=2000)
    p_gen.add_argument("--features", type=int, default=8)
    p_gen.add_argument("--classes", type=int, default=16)
    p_gen.add_argument("--subjects", type=int, default=None)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=_cmd_gen_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FedGbtError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
