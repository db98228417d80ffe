"""Figure rendering for the report paths (all files, no interactive UI)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_latency(records: list, path) -> None:
    """Median wall time vs horizon, one line per decode mode."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, style in (("ar", "o-"), ("nar", "s-")):
        rows = sorted((r.horizon, r.wall_ns) for r in records if r.mode == mode)
        if rows:
            h, w = zip(*rows)
            label = "sequential (AR)" if mode == "ar" else "segment-parallel (NAR)"
            ax.plot(h, np.asarray(w) / 1e6, style, label=label)
    ax.set_xlabel("prediction horizon (steps)")
    ax.set_ylabel("median inference time (ms)")
    ax.set_ylim(bottom=0)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss_curves(metrics: list, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = [m["step"] for m in metrics]
    for key in ("total", "L_pred", "L_aux", "L_budget", "L_reg"):
        values = [m[key] for m in metrics]
        if any(v != 0 for v in values) or key == "total":
            ax.plot(steps, values, label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_forecast(context: np.ndarray, target: np.ndarray, forecast: np.ndarray,
                  path, max_windows: int = 4) -> None:
    """Overlay context, truth and prediction for the first channel."""
    n = min(max_windows, context.shape[0])
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), squeeze=False)
    t_ctx = np.arange(context.shape[2])
    t_fut = np.arange(context.shape[2], context.shape[2] + target.shape[2])
    for i in range(n):
        ax = axes[i][0]
        ax.plot(t_ctx, context[i, 0], color="gray", lw=0.8, label="context")
        ax.plot(t_fut, target[i, 0], color="black", lw=1.0, label="truth")
        ax.plot(t_fut, forecast[i, 0], color="tab:red", lw=1.0, label="forecast")
        ax.axvline(context.shape[2] - 0.5, color="gray", ls=":", lw=0.8)
        if i == 0:
            ax.legend(loc="upper left", fontsize=8)
    axes[-1][0].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ablation(rows: list, path) -> None:
    """Bar chart of MSE/MAE per ablation configuration."""
    names = [r["name"] for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.18, [r["mse"] for r in rows], width=0.36, label="MSE")
    ax.bar(x + 0.18, [r["mae"] for r in rows], width=0.36, label="MAE")
    ax.set_xticks(x, names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("error")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
