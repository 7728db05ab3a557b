"""Run reports: console tables, CSV files and rendered figures.

A RunReport stores the raw per-round lists alongside its aggregates; the
writers recompute every aggregate from the raw lists on serialization and
refuse to emit inconsistent reports. Reports contain no timestamps so two
identical runs serialize to identical bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import InvalidInput


@dataclass
class ClientMetrics:
    client: str
    n_valid: int
    accuracy: float
    macro_f1: float


@dataclass
class RunReport:
    config_echo: dict
    objectives_central: list[float] = field(default_factory=list)
    objectives_fed: list[float] = field(default_factory=list)
    accuracy_train: float | None = None
    accuracy_valid: float | None = None
    macro_f1_train: float | None = None
    macro_f1_valid: float | None = None
    client_metrics: list[ClientMetrics] = field(default_factory=list)
    max_objective_gap: float | None = None
    tree_diff: str | None = None
    header_note: str = (
        "per-client metrics score the global model on each client's local validation slice"
    )

    def recomputed_gap(self) -> float | None:
        if not self.objectives_central or not self.objectives_fed:
            return None
        n = min(len(self.objectives_central), len(self.objectives_fed))
        return max(
            abs(self.objectives_fed[i] - self.objectives_central[i]) for i in range(n)
        )

    def validate(self) -> None:
        gap = self.recomputed_gap()
        if self.max_objective_gap is not None:
            if gap is None or abs(gap - self.max_objective_gap) > 1e-12:
                raise InvalidInput(
                    f"report inconsistent: stored gap {self.max_objective_gap} vs recomputed {gap}"
                )


def _objective_rows(report: RunReport) -> list[list]:
    rows = []
    n = max(len(report.objectives_central), len(report.objectives_fed))
    for t in range(n):
        c = report.objectives_central[t] if t < len(report.objectives_central) else ""
        f = report.objectives_fed[t] if t < len(report.objectives_fed) else ""
        rows.append([t, c, f])
    return rows


def report_csv_text(report: RunReport) -> str:
    """Stable-column CSV rendering (validated before writing)."""
    report.validate()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "key", "value"])
    writer.writerow(["meta", "note", report.header_note])
    for key in sorted(report.config_echo):
        writer.writerow(["config", key, report.config_echo[key]])
    for name, val in (
        ("accuracy_train", report.accuracy_train),
        ("accuracy_valid", report.accuracy_valid),
        ("macro_f1_train", report.macro_f1_train),
        ("macro_f1_valid", report.macro_f1_valid),
        ("max_objective_gap", report.max_objective_gap),
        ("tree_diff", report.tree_diff),
    ):
        if val is not None:
            writer.writerow(["summary", name, repr(val) if isinstance(val, float) else val])
    writer.writerow(["objectives", "columns", "round,central,federated"])
    for row in _objective_rows(report):
        writer.writerow(["objectives", row[0], f"{row[1]!r},{row[2]!r}" if row[1] != "" or row[2] != "" else ""])
    for cm in report.client_metrics:
        writer.writerow(["client", cm.client, f"n={cm.n_valid},acc={cm.accuracy!r},f1={cm.macro_f1!r}"])
    return buf.getvalue()


def objectives_csv_text(report: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "central", "federated"])
    for row in _objective_rows(report):
        writer.writerow(row)
    return buf.getvalue()


def console_table(report: RunReport) -> str:
    report.validate()
    lines = [report.header_note, ""]
    lines.append(f"{'metric':<22}{'value'}")
    lines.append("-" * 40)
    for name, val in (
        ("train accuracy", report.accuracy_train),
        ("valid accuracy", report.accuracy_valid),
        ("train macro-F1", report.macro_f1_train),
        ("valid macro-F1", report.macro_f1_valid),
        ("max |J_fed - J_cen|", report.max_objective_gap),
        ("tree diff", report.tree_diff),
    ):
        if val is not None:
            if isinstance(val, float):
                lines.append(f"{name:<22}{val:.6g}")
            else:
                lines.append(f"{name:<22}{val}")
    if report.client_metrics:
        lines.append("")
        lines.append(f"{'client':<14}{'n':>6}{'acc':>10}{'macro-F1':>10}")
        for cm in report.client_metrics:
            lines.append(f"{cm.client:<14}{cm.n_valid:>6}{cm.accuracy:>10.4f}{cm.macro_f1:>10.4f}")
    return "\n".join(lines)


def render_objective_figure(report: RunReport, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if report.objectives_central:
        ax.plot(range(len(report.objectives_central)), report.objectives_central, marker="o", label="central")
    if report.objectives_fed:
        ax.plot(range(len(report.objectives_fed)), report.objectives_fed, marker="s", label="federated")
    ax.set_xlabel("boosting round")
    ax.set_ylabel("training log-loss")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_client_figure(report: RunReport, path: Path) -> None:
    if not report.client_metrics:
        return
    names = [cm.client for cm in report.client_metrics]
    accs = [cm.accuracy for cm in report.client_metrics]
    f1s = [cm.macro_f1 for cm in report.client_metrics]
    x = range(len(names))
    fig, ax = plt.subplots(figsize=(max(6, len(names)), 4))
    ax.bar([i - 0.2 for i in x], accs, width=0.4, label="accuracy")
    ax.bar([i + 0.2 for i in x], f1s, width=0.4, label="macro-F1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_run_report(report: RunReport, out_dir: str | Path, stem: str = "run") -> list[Path]:
    """Write report CSVs and figures; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out / f"{stem}_report.csv"
    p.write_text(report_csv_text(report), encoding="utf-8")
    paths.append(p)
    p = out / f"{stem}_objectives.csv"
    p.write_text(objectives_csv_text(report), encoding="utf-8")
    paths.append(p)
    if report.objectives_central or report.objectives_fed:
        p = out / f"{stem}_objectives.png"
        render_objective_figure(report, p)
        paths.append(p)
    if report.client_metrics:
        p = out / f"{stem}_clients.png"
        render_client_figure(report, p)
        paths.append(p)
    return paths


@dataclass
class SweepPoint:
    value: float
    max_gap: float | None
    accuracy_central: float | None
    accuracy_fed: float | None


def sweep_csv_text(axis: str, points: list[SweepPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([axis, "max_objective_gap", "accuracy_central", "accuracy_fed"])
    for p in points:
        writer.writerow([p.value, p.max_gap, p.accuracy_central, p.accuracy_fed])
    return buf.getvalue()


def render_sweep_figure(axis: str, points: list[SweepPoint], path: Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    xs = [p.value for p in points]
    gaps = [p.max_gap for p in points]
    axes[0].plot(xs, gaps, marker="o")
    axes[0].set_xlabel(axis)
    axes[0].set_ylabel("max objective gap")
    if axis == "rho":
        axes[0].set_xscale("log")
        axes[0].set_yscale("log")
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(xs, [p.accuracy_central for p in points], marker="o", label="central")
    axes[1].plot(xs, [p.accuracy_fed for p in points], marker="s", label="federated")
    axes[1].set_xlabel(axis)
    axes[1].set_ylabel("validation accuracy")
    axes[1].legend()
    axes[1].grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_sweep_report(axis: str, points: list[SweepPoint], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"sweep_{axis}.csv"
    csv_path.write_text(sweep_csv_text(axis, points), encoding="utf-8")
    fig_path = out / f"sweep_{axis}.png"
    render_sweep_figure(axis, points, fig_path)
    return [csv_path, fig_path]
