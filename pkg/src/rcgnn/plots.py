"""Figure rendering for the report paths (written next to the CSV outputs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_acc_curves(report, path) -> None:
    """One fidelity curve per explainer over the selection-ratio grid."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for row in report.rows:
        ax.plot(report.rho_grid, row["curve"], marker="o", ms=3, label=row["explainer"])
    ax.set_xlabel("selection ratio")
    ax.set_ylabel("ACC")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ablation_bars(rows: list[list], path) -> None:
    """Grouped bars: accuracy and explanation precision per ablation variant."""
    if not rows:
        return
    variants = [r[0] for r in rows]
    acc = [float(r[1]) for r in rows]
    prec = [float(r[4]) for r in rows]
    x = range(len(variants))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([i - 0.2 for i in x], acc, width=0.4, label="test accuracy")
    ax.bar([i + 0.2 for i in x], prec, width=0.4, label="precision@N")
    ax.set_xticks(list(x))
    ax.set_xticklabels(variants, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_curves(log_rows: list[dict], path) -> None:
    """Loss components and accuracies per epoch, side by side."""
    if not log_rows:
        return
    epochs = [r["epoch"] for r in log_rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for key in ("l_sup", "l_dis", "l_con"):
        ax1.plot(epochs, [r[key] for r in log_rows], label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax1.grid(alpha=0.3)
    for key in ("train_acc", "val_acc"):
        ax2.plot(epochs, [r[key] for r in log_rows], label=key)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(-0.02, 1.02)
    ax2.legend(fontsize=8)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
