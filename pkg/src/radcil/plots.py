"""Figure rendering for reports and sweeps. Files only, no interactive backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SERIES_STYLE = {
    "rad": {"color": "#c0392b", "marker": "o"},
    "featstar": {"color": "#2471a3", "marker": "s"},
    "finetune": {"color": "#7f8c8d", "marker": "^", "linestyle": "--"},
}


def save_accuracy_curves(curves: dict[str, dict], protocol: str, path) -> Path:
    """One line per strategy: pooled held-out accuracy after each task,
    mean across seeds with a std band."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, curve in sorted(curves.items()):
        steps = np.array(curve["steps"])
        mean = 100.0 * np.array(curve["mean"])
        std = 100.0 * np.array(curve["std"])
        style = _SERIES_STYLE.get(name, {"marker": "o"})
        ax.plot(steps, mean, label=name, **style)
        if np.any(std > 0):
            ax.fill_between(steps, mean - std, mean + std, alpha=0.15, color=style.get("color"))
    ax.set_xlabel("task")
    ax.set_ylabel("accuracy over seen classes (%)")
    ax.set_title(f"incremental accuracy, protocol {protocol}")
    ax.set_xticks(sorted({s for c in curves.values() for s in c["steps"]}))
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def save_sensitivity(rows: list[dict], param: str, path) -> Path:
    """Average incremental accuracy against one loss-weight grid."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    values = [r["value"] for r in rows]
    means = [100.0 * r["avg_acc_mean"] for r in rows]
    stds = [100.0 * r["avg_acc_std"] for r in rows]
    ax.errorbar(values, means, yerr=stds, marker="o", capsize=3, color="#c0392b")
    ax.set_xscale("log", base=2)
    ax.set_xticks(values)
    ax.set_xticklabels([f"{v:g}" for v in values])
    ax.set_xlabel(param)
    ax.set_ylabel("avg incremental accuracy (%)")
    ax.set_title(f"sensitivity to {param}")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def save_ablation(rows: list[dict], path) -> Path:
    """Bar chart of the component on/off grid."""
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    labels = [r["components"] for r in rows]
    means = [100.0 * r["avg_acc_mean"] for r in rows]
    stds = [100.0 * r["avg_acc_std"] for r in rows]
    xs = np.arange(len(rows))
    ax.bar(xs, means, yerr=stds, capsize=3, color="#2471a3", width=0.6)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=12, ha="right", fontsize=8)
    ax.set_ylabel("avg incremental accuracy (%)")
    ax.set_title("component ablation")
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path
