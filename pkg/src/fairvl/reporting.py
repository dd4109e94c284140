"""Report rendering: plain-text tables, CSV, and matplotlib figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import FairnessReport  # noqa: E402

_COLUMNS = ["DPD", "DEOdds", "AUC", "ES-AUC", "Group-wise AUC", "Worst-group AUC"]


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def report_table(report: FairnessReport) -> str:
    """One row per attribute, mirroring the usual column order."""
    lines = [f"Overall AUC: {_fmt(report.auc)}   Weighted F1: "
             f"{_fmt(report.weighted_f1)}   threshold={report.threshold}"]
    header = f"{'attribute':<12}" + "".join(f"{c:>18}" for c in _COLUMNS)
    lines.append(header)
    lines.append("-" * len(header))
    for name, a in report.per_attribute.items():
        groupwise = " ".join(f"{g}={_fmt(v)}" for g, v in a.group_auc.items())
        lines.append(
            f"{name:<12}"
            f"{_fmt(a.dpd):>18}{_fmt(a.deodds):>18}{_fmt(report.auc):>18}"
            f"{_fmt(a.es_auc):>18}{groupwise:>18}{_fmt(a.worst_group_auc):>18}"
        )
        for flag in a.flags:
            lines.append(f"    ! {name}: {flag}")
    return "\n".join(lines)


def write_report_files(report: FairnessReport, out_dir, stem: str = "report"):
    """JSON + CSV + figures for one evaluation report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.json").write_text(report.to_json())
    rows = report.csv_rows()
    with open(out_dir / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["attribute", "metric", "group",
                                                "value", "flag"])
        writer.writeheader()
        writer.writerows(rows)
    (out_dir / f"{stem}.txt").write_text(report_table(report) + "\n")
    plot_group_auc(report, out_dir / f"{stem}_group_auc.png")
    return out_dir / f"{stem}.json"


def plot_group_auc(report: FairnessReport, path):
    attrs = list(report.per_attribute)
    fig, axes = plt.subplots(1, max(len(attrs), 1),
                             figsize=(4 * max(len(attrs), 1), 3.2), squeeze=False)
    for ax, name in zip(axes[0], attrs):
        a = report.per_attribute[name]
        groups = list(a.group_auc)
        vals = [a.group_auc[g] if a.group_auc[g] is not None else 0.0
                for g in groups]
        ax.bar(groups, vals, color="tab:blue")
        if report.auc is not None:
            ax.axhline(report.auc, color="k", ls="--", lw=1, label="overall AUC")
            ax.legend(fontsize=8)
        ax.set_ylim(0, 1)
        ax.set_title(f"{name} (DPD={a.dpd:.3f})" if a.dpd is not None else name)
        ax.set_ylabel("group AUC")
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_curves(log_rows: list[dict], path,
                     keys=("L_total", "L_align", "L_VQ", "L_MI", "L_att_cls")):
    steps, series = [], {k: [] for k in keys}
    for row in log_rows:
        if row.get("kind") != "step":
            continue
        steps.append(int(row["step"]))
        for k in keys:
            v = row.get(k, "")
            series[k].append(float(v) if v not in ("", None) else float("nan"))
    fig, ax = plt.subplots(figsize=(7, 4))
    for k in keys:
        ax.plot(steps, series[k], label=k, lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def load_train_log(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
