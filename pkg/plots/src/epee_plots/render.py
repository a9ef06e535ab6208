"""Figure rendering over parsed evaluation outputs.

Pure view layer: every plotted number is a value parsed from the input
files.  Rendering is deterministic (fixed sizes, fixed ordering, no
embedded dates), so rerunning on the same inputs reproduces the same
images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .parsing import GridTable, parse_curve, parse_frontier, parse_grid

IMAGE_FORMATS = ("png", "svg")


@dataclass(frozen=True)
class PlotJob:
    """One rendering request: input paths, output directory, format, dpi."""

    grid_path: Path | None = None
    curve_path: Path | None = None
    frontier_path: Path | None = None
    out_dir: Path = Path(".")
    image_format: str = "png"
    dpi: int = 150

    def __post_init__(self):
        if self.image_format not in IMAGE_FORMATS:
            raise ValueError(f"image format must be one of {IMAGE_FORMATS}")
        if self.dpi < 30:
            raise ValueError("dpi too small to render readable figures")


def _save(fig, path: Path, dpi: int) -> None:
    # Date metadata would break byte-stable reruns of svg output.
    metadata = {"Date": None} if path.suffix == ".svg" else None
    fig.savefig(path, dpi=dpi, metadata=metadata)
    plt.close(fig)


def _heatmap(ax, matrix: np.ndarray, grid: GridTable, label: str):
    image = ax.imshow(matrix, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(grid.patience_values)))
    ax.set_xticklabels([str(p) for p in grid.patience_values])
    ax.set_yticks(range(len(grid.tau_values)))
    ax.set_yticklabels([f"{t:g}" for t in grid.tau_values])
    ax.set_xlabel("patience")
    ax.set_ylabel("entropy threshold")
    cbar = ax.figure.colorbar(image, ax=ax)
    cbar.set_label(label)
    return image


def plot_grid_heatmaps(grid_path: Path, job: PlotJob) -> list[Path]:
    """Accuracy and speed-up heatmaps over the (tau, patience) grid."""
    grid = parse_grid(grid_path)
    outputs = []
    for matrix, metric in ((grid.accuracy, "accuracy"),
                           (grid.speedup, "speed-up")):
        fig, ax = plt.subplots(figsize=(7, 5))
        _heatmap(ax, matrix, grid, metric)
        ax.set_title(f"{metric} across exit-policy settings")
        fig.tight_layout()
        out = job.out_dir / f"grid_{metric.replace('-', '')}.{job.image_format}"
        _save(fig, out, job.dpi)
        outputs.append(out)
    return outputs


def plot_budgeted_curve(curve_path: Path, job: PlotJob) -> Path:
    """Dual-axis line plot: per-layer accuracy and mean entropy."""
    rows = parse_curve(curve_path)
    layers = [r["layer"] for r in rows]
    fig, ax_acc = plt.subplots(figsize=(7, 4.5))
    ax_acc.plot(layers, [r["accuracy"] for r in rows], "o-", color="tab:blue",
                label="accuracy")
    ax_acc.set_xlabel("exit layer")
    ax_acc.set_ylabel("accuracy", color="tab:blue")
    ax_acc.tick_params(axis="y", labelcolor="tab:blue")
    ax_acc.set_xticks(layers)

    ax_ent = ax_acc.twinx()
    ax_ent.plot(layers, [r["mean_entropy"] for r in rows], "s--",
                color="tab:red", label="mean entropy")
    ax_ent.set_ylabel("mean normalized entropy", color="tab:red")
    ax_ent.tick_params(axis="y", labelcolor="tab:red")

    ax_acc.set_title("fixed-depth accuracy and confidence per layer")
    fig.tight_layout()
    out = job.out_dir / f"budgeted_curve.{job.image_format}"
    _save(fig, out, job.dpi)
    return out


def plot_frontier(frontier_path: Path, grid_path: Path, job: PlotJob) -> Path:
    """All grid cells in gray with the non-dominated set highlighted."""
    frontier = parse_frontier(frontier_path)
    grid = parse_grid(grid_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(grid.speedup.ravel(), grid.accuracy.ravel(), s=18,
               color="lightgray", label="all settings", zorder=1)
    xs = [f["speedup"] for f in frontier]
    ys = [f["accuracy"] for f in frontier]
    ax.plot(xs, ys, "o-", color="tab:green", label="non-dominated", zorder=2)
    for f in frontier:
        ax.annotate(f"({f['tau']:g}, {f['patience']})",
                    (f["speedup"], f["accuracy"]),
                    textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("speed-up ratio")
    ax.set_ylabel("accuracy")
    ax.set_title("speed / accuracy frontier (tau, patience annotated)")
    ax.legend(loc="lower left")
    fig.tight_layout()
    out = job.out_dir / f"frontier.{job.image_format}"
    _save(fig, out, job.dpi)
    return out


def run_job(job: PlotJob) -> list[Path]:
    """Render whichever figures the job's inputs allow."""
    if job.frontier_path is not None and job.grid_path is None:
        raise ValueError("the frontier plot also needs --grid for context cells")
    if not any((job.grid_path, job.curve_path, job.frontier_path)):
        raise ValueError("nothing to plot: pass --grid, --curve, or --frontier")
    job.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if job.grid_path is not None:
        outputs.extend(plot_grid_heatmaps(job.grid_path, job))
    if job.curve_path is not None:
        outputs.append(plot_budgeted_curve(job.curve_path, job))
    if job.frontier_path is not None:
        outputs.append(plot_frontier(job.frontier_path, job.grid_path, job))
    return outputs
