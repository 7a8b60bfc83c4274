"""Matplotlib figure rendering for training curves and sparsity schedules."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_training_curves(curves: dict, path: str | Path) -> Path:
    """Mean episodic reward per iteration with a +-1 std band per method."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, data in curves.items():
        iters = np.asarray(data["iterations"])
        mean = np.asarray(data["mean"])
        std = np.asarray(data["std"])
        line, = ax.plot(iters, mean, label=label, linewidth=1.5)
        ax.fill_between(iters, mean - std, mean + std, alpha=0.2,
                        color=line.get_color(), linewidth=0)
    ax.set_xlabel("training iteration")
    ax.set_ylabel("mean episodic reward")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_schedules(table: dict, path: str | Path) -> Path:
    """Target sparsity versus iteration for each scheduler."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, series in table.items():
        series = np.asarray(series)
        ax.plot(np.arange(len(series)), series, label=label, linewidth=1.5)
    ax.set_xlabel("training iteration")
    ax.set_ylabel("target sparsity")
    ax.set_ylim(-0.02, 1.0)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
