"""CLI surface: subcommands, exit codes, config-file precedence, outputs."""

from pathlib import Path

import pytest

from fedgbt.cli import main
from fedgbt.synthetic import gaussian_blobs, write_csv


@pytest.fixture(scope="module")
def blob_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    ds = gaussian_blobs(700, 5, 4, seed=1, n_subjects=4)
    path = d / "blobs.csv"
    write_csv(ds, path, id_column="subject")
    return path


def test_train_central_writes_report_and_figures(blob_csv, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main([
        "train", "--mode", "central", "--data", str(blob_csv), "--id-column", "subject",
        "--rounds", "3", "--bins", "16", "--out", str(out),
    ])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "valid accuracy" in captured
    names = {p.name for p in out.iterdir()}
    assert "train_central_report.csv" in names
    assert "train_central_objectives.png" in names


def test_train_fed_reports_identical_trees_with_exact_sketch(blob_csv, capsys):
    rc = main([
        "train", "--mode", "fed", "--data", str(blob_csv), "--id-column", "subject",
        "--clients", "by-id", "--rounds", "3", "--bins", "16", "--exact-sketch",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "tree diff             identical" in out
    assert "subject" in out  # per-client table present


def test_missing_file_exits_2(capsys):
    rc = main(["train", "--mode", "central", "--data", "/nonexistent/x.csv"])
    assert rc == 2
    assert "/nonexistent/x.csv" in capsys.readouterr().err


def test_single_value_sweep_rejected(blob_csv, capsys):
    rc = main(["sweep", "--axis", "bins", "--values", "64", "--data", str(blob_csv), "--id-column", "subject"])
    assert rc == 2
    assert "at least two" in capsys.readouterr().err


def test_sweep_writes_summary(blob_csv, tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = main([
        "sweep", "--axis", "bins", "--values", "16", "32", "--data", str(blob_csv),
        "--id-column", "subject", "--rounds", "2", "--out", str(out),
    ])
    assert rc == 0
    assert (out / "sweep_bins.csv").exists() and (out / "sweep_bins.png").exists()


def test_config_file_overrides_flags(blob_csv, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("rounds = 2\nbins = 8\n# comment\n", encoding="utf-8")
    rc = main([
        "train", "--mode", "central", "--data", str(blob_csv), "--id-column", "subject",
        "--rounds", "9", "--bins", "64", "--config", str(cfg), "--out", str(tmp_path / "o"),
    ])
    assert rc == 0
    report = (tmp_path / "o" / "train_central_report.csv").read_text()
    assert "config,rounds,2" in report  # config file wins over --rounds 9
    assert "config,bins,8" in report


def test_unknown_config_key_exits_2(blob_csv, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 1\n", encoding="utf-8")
    rc = main(["train", "--mode", "central", "--data", str(blob_csv), "--config", str(cfg)])
    assert rc == 2


def test_gen_data_then_train_roundtrip(tmp_path, capsys):
    csv_path = tmp_path / "gen.csv"
    rc = main(["gen-data", str(csv_path), "--samples", "300", "--features", "4", "--classes", "3", "--seed", "7"])
    assert rc == 0
    rc = main(["train", "--mode", "central", "--data", str(csv_path), "--rounds", "2", "--bins", "16"])
    assert rc == 0


def test_verify_passes_and_detects_faults(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 5
    assert main(["verify", "--inject", "tie-break"]) == 1
    err = capsys.readouterr()
    assert "exact-surrogate-equivalence" in err.err
    assert main(["verify", "--inject", "double-eta"]) == 1
