"""Matplotlib figure rendering for the CLI report paths.

Every renderer writes a PNG next to the delimited/JSON output it illustrates:
training curves, confusion heatmaps, BLEU-convention comparisons, and the
projection profile behind the grid estimate.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .imaging import BinaryRaster
from .metrics import BleuReport, ConfusionMatrix


def plot_history(history: list[dict], path) -> None:
    """Per-epoch loss and accuracy, train and (when present) validation."""
    epochs = [h["epoch"] for h in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    loss_key = "train_loss" if "train_loss" in history[0] else "loss"
    acc_key = "train_acc" if "train_acc" in history[0] else "token_acc"
    ax_loss.plot(epochs, [h[loss_key] for h in history], label="train")
    ax_acc.plot(epochs, [h[acc_key] for h in history], label="train")
    if "valid_loss" in history[0]:
        ax_loss.plot(epochs, [h["valid_loss"] for h in history], label="validation")
        ax_acc.plot(epochs, [h["valid_acc"] for h in history], label="validation")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_confusion(cm: ConfusionMatrix, labels: list[str], path) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * cm.k), max(3.5, 0.45 * cm.k)))
    im = ax.imshow(cm.counts, cmap="Blues")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if cm.k <= 30:
        ax.set_xticks(range(cm.k), labels, rotation=90, fontsize=7)
        ax.set_yticks(range(cm.k), labels, fontsize=7)
        for i in range(cm.k):
            for j in range(cm.k):
                if cm.counts[i, j]:
                    ax.text(j, i, str(cm.counts[i, j]), ha="center", va="center", fontsize=6)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bleu_modes(reports: dict[str, BleuReport], path) -> None:
    """Bar chart of BLEU under each convention; the spread is the message."""
    names = list(reports)
    values = [reports[n].score_x100 for n in names]
    fig, ax = plt.subplots(figsize=(1.8 * len(names) + 2, 4))
    bars = ax.bar(names, values, color="steelblue")
    ax.bar_label(bars, fmt="%.2f")
    ax.set_ylabel("BLEU (x100)")
    ax.set_ylim(0, max(values) * 1.2 if values else 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_grid_profile(binary: BinaryRaster, col_cuts: list[int], row_cuts: list[int], path) -> None:
    """Projection profiles with the chosen cut positions marked."""
    fig, (ax_v, ax_h) = plt.subplots(2, 1, figsize=(8, 5))
    v = binary.bits.sum(axis=0)
    h = binary.bits.sum(axis=1)
    ax_v.plot(np.arange(len(v)), v, lw=0.8)
    for cut in col_cuts:
        ax_v.axvline(cut, color="crimson", ls="--", lw=0.8)
    ax_v.set_ylabel("column ink")
    ax_h.plot(np.arange(len(h)), h, lw=0.8)
    for cut in row_cuts:
        ax_h.axvline(cut, color="crimson", ls="--", lw=0.8)
    ax_h.set_ylabel("row ink")
    ax_h.set_xlabel("pixel")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
