"""Training-curve figures rendered from the plot-data CSV.

The CLI report path writes these PNGs next to the delimited output so a run
directory is self-describing; the delimited CSV remains the canonical data.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import BatchPoint, read_plot_data

_SERIES = (
    ("mean_return", "Mean batch return"),
    ("pool_size", "Pool size"),
    ("mean_online_score", "Mean online score"),
)


def render_points(points: Sequence[BatchPoint], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    xs = [p.batch_index for p in points]
    paths: list[Path] = []
    for attr, label in _SERIES:
        ys = [getattr(p, attr) for p in points]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.2)
        ax.set_xlabel("batch")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out / f"{attr}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def render_run_figures(plot_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """Render the standard training curves from a run's plot-data CSV."""
    return render_points(read_plot_data(plot_csv), out_dir)
