"""Figures written next to the delimited outputs (PNG, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ideology import CENTER, LEFT, RIGHT  # noqa: E402

CLASS_COLORS = {LEFT: "#2166ac", CENTER: "#7f7f7f", RIGHT: "#b2182b"}
# fixed metadata keeps the PNG bytes reproducible
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_grid(labels, auc, best: int, path) -> None:
    """Mean AUC per grid point, selected point highlighted."""
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(labels) + 2), 3))
    colors = ["#d95f02" if i == best else "#7570b3" for i in range(len(labels))]
    ax.bar(range(len(labels)), auc, color=colors)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    lo = min(auc) if auc else 0
    ax.set_ylim(max(0.0, lo - 0.05), 1.0)
    ax.set_ylabel("mean AUC")
    _save(fig, path)


def plot_position_hist(rows, path, title: str = "") -> None:
    """Step histograms of recommended-item positions, one line per user class."""
    fig, ax = plt.subplots(figsize=(5, 3))
    for cls in (LEFT, CENTER, RIGHT):
        sub = [r for r in rows if r[0] == cls]
        if not sub:
            continue
        total = sum(r[3] for r in sub)
        if total == 0:
            continue
        width = sub[0][2] - sub[0][1]
        edges = [r[1] for r in sub] + [sub[-1][2]]
        dens = [r[3] / (total * width) for r in sub]
        ax.stairs(dens, edges, label=f"{cls} users", color=CLASS_COLORS[cls])
    ax.set_xlabel("position of recommended item")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    _save(fig, path)
