"""Figure rendering for reports. Uses the Agg backend; every function writes
a PNG next to the delimited output and returns the path."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(log_rows, path):
    epochs = [r["epoch"] for r in log_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [r["train_loss"] for r in log_rows], marker="o")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax1.grid(alpha=0.3)
    for key, label in (("dev_strategy_f1", "strategy"), ("dev_emotion_f1", "emotion")):
        ys = [r[key] for r in log_rows]
        if any(y is not None for y in ys):
            ax2.plot(epochs, [np.nan if y is None else y for y in ys],
                     marker="o", label=label)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("dev macro F1")
    ax2.set_ylim(0, 1)
    ax2.legend()
    ax2.grid(alpha=0.3)
    return _finish(fig, path)


def plot_confusion(matrix, class_names, path):
    matrix = np.asarray(matrix)
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    im = ax.imshow(matrix, cmap="Blues")
    ax.set_xticks(range(len(class_names)))
    ax.set_xticklabels(class_names, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(class_names)))
    ax.set_yticklabels(class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _finish(fig, path)


def plot_reuse_rates(analysis, path):
    emotions = ["pos", "neu", "neg"]
    rates = [analysis["reuse_rate"][e] for e in emotions]
    counts = [analysis["events"][e] for e in emotions]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = np.arange(len(emotions))
    ax.bar(xs, [0.0 if r is None else r for r in rates], color=["#4c9f70", "#999999", "#c0504d"])
    for x, rate, n in zip(xs, rates, counts):
        label = "n/a" if rate is None else f"{rate:.2f}"
        ax.text(x, (0.0 if rate is None else rate) + 0.02, f"{label}\n(n={n})",
                ha="center", fontsize=8)
    ax.set_xticks(xs)
    ax.set_xticklabels(emotions)
    ax.set_ylim(0, 1.15)
    ax.set_ylabel("strategy reuse rate")
    ax.set_title(f"window: {analysis['window']}")
    return _finish(fig, path)


def plot_confidence_curve(values_by_k, path):
    ks = sorted(int(k) for k in values_by_k)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(ks, [values_by_k[str(k)] if str(k) in values_by_k else values_by_k[k] for k in ks],
            marker="o")
    ax.set_xticks(ks)
    ax.set_xlabel("k")
    ax.set_ylabel("mean k-th probability")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    return _finish(fig, path)
