"""Figure rendering for curves and speed/accuracy reports (files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_exploration_figure(path, fast_ex, slow_ex, handover=None, fast_entropy=None, slow_entropy=None):
    """Exploration % per walk step for both models, plus optional entropy panel."""
    panels = 2 if fast_entropy is not None or slow_entropy is not None else 1
    fig, axes = plt.subplots(panels, 1, figsize=(7, 3.2 * panels), sharex=True, squeeze=False)
    steps = np.arange(len(slow_ex))

    ax = axes[0][0]
    ax.plot(steps, fast_ex, marker="d", ms=3, color="tab:red", label="fast")
    ax.plot(steps, slow_ex, marker="p", ms=3, color="tab:blue", label="slow")
    if handover is not None:
        ax.axvline(handover, color="gray", ls="--", lw=1, label=f"handover j={handover}")
    ax.set_ylabel("exploration %")
    ax.set_ylim(bottom=0)
    ax.legend(loc="upper left")

    if panels == 2:
        ax = axes[1][0]
        if fast_entropy is not None:
            ax.plot(steps, fast_entropy, color="tab:red", label="fast")
        if slow_entropy is not None:
            ax.plot(steps, slow_entropy, color="tab:blue", label="slow")
        ax.set_ylabel("entropy (nats)")
        ax.legend(loc="lower right")

    axes[-1][0].set_xlabel("walk step")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_tradeoff_figure(path, reports):
    """AUC and generation time bars for the fast/slow/cascade triplet.

    reports: list of EvalReport-like objects with tag, auc, and
    wall_clock_generation_seconds.
    """
    tags = [r.tag or f"run{i}" for i, r in enumerate(reports)]
    aucs = [100.0 * r.auc for r in reports]
    times = [r.wall_clock_generation_seconds for r in reports]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.4))
    x = np.arange(len(tags))
    ax1.bar(x, aucs, color=["tab:red", "tab:blue", "tab:green"][: len(tags)])
    ax1.set_xticks(x, tags)
    ax1.set_ylabel("link-prediction AUC (%)")
    ax1.set_ylim(0, 100)
    for xi, v in zip(x, aucs):
        ax1.text(xi, v + 1, f"{v:.1f}", ha="center", fontsize=8)

    ax2.bar(x, times, color=["tab:red", "tab:blue", "tab:green"][: len(tags)])
    ax2.set_xticks(x, tags)
    ax2.set_ylabel("generation time (s)")
    for xi, v in zip(x, times):
        ax2.text(xi, v, f"{v:.1f}", ha="center", va="bottom", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
