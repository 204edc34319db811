"""Matplotlib figures for the CLI report paths.

Every function returns a Figure ready for ``savefig``; nothing here touches
pyplot's implicit state, so the CLI (or a notebook) owns figure lifetime.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from .integrators import Trajectory

__all__ = [
    "trajectory_figure",
    "fit_history_figure",
    "closed_loop_figure",
    "bench_figure",
]


def trajectory_figure(traj: Trajectory, title: str = "") -> Figure:
    """Positions and velocities over time; inputs in a third panel if recorded."""
    rows = 3 if traj.inputs is not None else 2
    fig = Figure(figsize=(8, 2.4 * rows))
    axes = fig.subplots(rows, 1, sharex=True)
    axes[0].plot(traj.times, traj.positions, lw=0.9)
    axes[0].set_ylabel("position")
    axes[1].plot(traj.times, traj.velocities, lw=0.9)
    axes[1].set_ylabel("velocity")
    if traj.inputs is not None:
        axes[2].step(traj.times, traj.inputs, where="post", lw=0.9)
        axes[2].set_ylabel("input")
    axes[-1].set_xlabel("time [s]")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    return fig


def fit_history_figure(history: list[dict]) -> Figure:
    """Training curves on a log scale with the best-validation epoch marked."""
    epochs = [h["epoch"] for h in history]
    train = [h["train_loss"] for h in history]
    val = [h["val_loss"] for h in history]
    best = int(np.argmin(val))
    fig = Figure(figsize=(7, 4))
    ax = fig.subplots()
    ax.semilogy(epochs, train, label="train")
    ax.semilogy(epochs, val, label="validation")
    ax.axvline(epochs[best], color="grey", ls=":", lw=1,
               label=f"best @ {epochs[best]}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("rollout loss")
    ax.legend()
    fig.tight_layout()
    return fig


def closed_loop_figure(traj: Trajectory, setpoints, durations, control_hz: float) -> Figure:
    """Tracking plot: measured positions with the reference staircase overlaid."""
    setpoints = np.atleast_2d(np.asarray(setpoints, dtype=float))
    durations = np.broadcast_to(np.asarray(durations, dtype=float), (setpoints.shape[0],))
    fig = Figure(figsize=(8, 4.5))
    ax = fig.subplots()
    n = setpoints.shape[1]
    colors = [f"C{i}" for i in range(n)]
    for i in range(n):
        ax.plot(traj.times, traj.positions[:, i], color=colors[i], lw=1.0,
                label=f"coordinate {i}")
    # reference staircase (piecewise-constant target, may outlast a diverged run)
    t0 = 0.0
    for target, dur in zip(setpoints, durations):
        t1 = t0 + dur
        for i in range(n):
            ax.hlines(target[i], t0, t1, color=colors[i], ls="--", lw=0.8, alpha=0.7)
        t0 = t1
    ax.set_xlabel("time [s]")
    ax.set_ylabel("position")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return fig


def bench_figure(summary: dict) -> Figure:
    """Accuracy (mean ± std RMSE) and throughput per method."""
    methods = [m for m in summary["methods"] if summary["methods"][m]["mean_rmse"] is not None]
    means = [summary["methods"][m]["mean_rmse"] for m in methods]
    stds = [summary["methods"][m]["std_rmse"] for m in methods]
    rates = [summary["methods"][m]["mean_steps_per_sec"] for m in methods]

    fig = Figure(figsize=(9, 4))
    ax_err, ax_rate = fig.subplots(1, 2)
    xs = np.arange(len(methods))
    ax_err.errorbar(xs, means, yerr=stds, fmt="o", capsize=4)
    ax_err.set_yscale("log")
    ax_err.set_xticks(xs, methods, rotation=20)
    ax_err.set_ylabel("position RMSE vs reference")
    ax_err.set_title(f"{summary['n_configs']} configs, n={summary['n']}, "
                     f"{summary['horizon']:g} s")
    if all(r is not None for r in rates):
        ax_rate.bar(xs, rates)
        ax_rate.set_yscale("log")
        ax_rate.set_xticks(xs, methods, rotation=20)
        ax_rate.set_ylabel("integration steps / s")
    fig.tight_layout()
    return fig
