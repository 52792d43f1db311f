"""Figure rendering for evaluation reports and training logs.

Uses the Agg backend so figures render to files on headless machines.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .metrics import REPORT_BINS, MetricsReport  # noqa: E402

_METRICS = (("accuracy", "Accuracy"), ("iou", "IoU"), ("f1", "F1"))


def save_metrics_figure(report: MetricsReport, path: str | Path) -> Path:
    """Grouped bars per illumination bin, one panel per metric."""
    labels = []
    for r in report.rows:
        tag = f"{r.mode} ({r.input1}, {r.input2})"
        if tag not in labels:
            labels.append(tag)
    fig, axes = plt.subplots(1, len(_METRICS), figsize=(4.2 * len(_METRICS), 3.4), sharey=True)
    x = np.arange(len(REPORT_BINS))
    width = 0.8 / max(1, len(labels))
    for ax, (field_name, title) in zip(np.atleast_1d(axes), _METRICS):
        for i, tag in enumerate(labels):
            heights = []
            for b in REPORT_BINS:
                row = next(
                    (r for r in report.rows
                     if f"{r.mode} ({r.input1}, {r.input2})" == tag and r.bin == b),
                    None,
                )
                value = getattr(row, field_name) if row else None
                heights.append(np.nan if value is None else value)
            ax.bar(x + (i - (len(labels) - 1) / 2) * width, heights, width, label=tag)
        ax.set_xticks(x)
        ax.set_xticklabels(REPORT_BINS)
        ax.set_ylim(0.0, 1.05)
        ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
    np.atleast_1d(axes)[0].set_ylabel("score")
    np.atleast_1d(axes)[-1].legend(fontsize=8, loc="lower right")
    if report.fps is not None:
        fig.suptitle(f"throughput {report.fps.fps:.2f} fps — {report.fps.machine}", fontsize=9)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def save_training_curves(log: list[dict], path: str | Path) -> Path:
    """Loss per step (left axis) and validation IoU when measured (right)."""
    steps = [row["step"] for row in log]
    losses = [row["loss"] for row in log]
    val_pts = [(row["step"], row["val_iou"]) for row in log if row["val_iou"] is not None]

    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(steps, losses, color="tab:blue", lw=1.2, label="train loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss", color="tab:blue")
    ax.grid(alpha=0.3)
    if val_pts:
        ax2 = ax.twinx()
        vx, vy = zip(*val_pts)
        ax2.plot(vx, vy, color="tab:orange", marker="o", ms=3, lw=1.0, label="val IoU")
        ax2.set_ylabel("val IoU", color="tab:orange")
        ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out
