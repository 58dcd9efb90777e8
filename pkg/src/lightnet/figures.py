"""Matplotlib figure rendering for the CLI report paths.

Each report that writes delimited output gets a companion PNG next to it:
cost breakdowns, training curves, sweep trends, and confusion matrices.
Rendering is headless (Agg) and deterministic.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (6.4, 4.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
})


def save_cost_figure(report, path) -> None:
    """Horizontal bars of per-layer operation counts."""
    rows = [r for r in report.rows if r.madds > 0]
    names = [r.name for r in rows]
    ops = [report.row_ops(r) for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, max(3.0, 0.22 * len(rows) + 1.0)))
    ax.barh(np.arange(len(rows)), ops, color="steelblue")
    ax.set_yticks(np.arange(len(rows)))
    ax.set_yticklabels(names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel(f"{report.convention} per layer")
    ax.set_title(f"{report.arch_name} ({report.total_madds / 1e9:.3f}G {report.convention} total)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_history_figure(history, path) -> None:
    """Loss curve with train accuracy on a twin axis."""
    epochs = [h.epoch for h in history]
    fig, ax = plt.subplots()
    ax.plot(epochs, [h.loss for h in history], color="firebrick", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss", color="firebrick")
    ax2 = ax.twinx()
    ax2.plot(epochs, [100 * h.train_accuracy for h in history],
             color="steelblue", label="train accuracy")
    ax2.set_ylabel("train accuracy (%)", color="steelblue")
    ax2.set_ylim(0, 105)
    ax2.grid(False)
    ax.set_title("training history")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_sweep_figure(report, path) -> None:
    """Mean test accuracy against per-class training-set size."""
    fig, ax = plt.subplots()
    for row in report.rows:
        ax.scatter(row.k, 100 * row.average, color="gray", s=12, zorder=2)
    ks = [k for k, _ in report.summaries]
    means = [100 * m for _, m in report.summaries]
    ax.plot(ks, means, "o-", color="steelblue", zorder=3, label="mean over seeds")
    ax.set_xlabel("training chips per class")
    ax.set_ylabel("average test accuracy (%)")
    ax.set_title("limited-data sweep")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_confusion_figure(metrics, path) -> None:
    """Row-normalized confusion matrix heatmap."""
    conf = metrics.confusion.astype(np.float64)
    totals = np.maximum(conf.sum(axis=1, keepdims=True), 1)
    fig, ax = plt.subplots(figsize=(5.4, 4.8))
    im = ax.imshow(conf / totals, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(np.arange(len(metrics.class_names)))
    ax.set_yticks(np.arange(len(metrics.class_names)))
    ax.set_xticklabels(metrics.class_names, rotation=45, ha="right", fontsize=7)
    ax.set_yticklabels(metrics.class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.grid(False)
    ax.set_title(f"confusion (average {100 * metrics.average_accuracy:.2f}%)")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
