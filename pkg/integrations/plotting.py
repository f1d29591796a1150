"""
GnarLab — Plotting
Statischer GIC-Verlauf über die Kandidaten G (PNG, ohne Display).
"""
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger("gnarlab.plot")


def plot_gic_curve(selection, path, title: str = "GIC") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(selection.g_grid, selection.gic_values, marker="o", color="tab:blue")
    best = selection.g_grid.index(selection.g_hat)
    ax.scatter([selection.g_hat], [selection.gic_values[best]], s=120, facecolors="none",
               edgecolors="tab:red", zorder=3, label=f"Ĝ = {selection.g_hat}")
    ax.set_xlabel("G")
    ax.set_ylabel("GIC")
    ax.set_xticks(selection.g_grid)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info(f"GIC-Plot gespeichert: {path}")
    return path
