"""Figures written next to reports and training logs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_f1_bars(reports, path) -> Path:
    fig, axes = plt.subplots(1, len(reports), figsize=(4.5 * len(reports), 3.4), squeeze=False)
    for ax, rep in zip(axes[0], reports):
        names = [c.name for c in rep.classes]
        f1 = [c.f1 for c in rep.classes]
        colors = ["C0" if c.defined else "0.8" for c in rep.classes]
        bars = ax.bar(names, f1, color=colors)
        for bar, c in zip(bars, rep.classes):
            label = f"{c.f1:.2f}" if c.defined else "n/a"
            ax.annotate(label, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                        ha="center", va="bottom", fontsize=8)
        ax.set_ylim(0, 1.08)
        ax.set_title(f"{rep.task} (macro {rep.macro_f1:.2f})", fontsize=10)
        ax.set_ylabel("F1")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_curve(log, path, keys=("loss", "loss_p", "loss_c")) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for key in keys:
        pts = [(r["step"], r[key]) for r in log if r.get(key) is not None]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, label=key, lw=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
