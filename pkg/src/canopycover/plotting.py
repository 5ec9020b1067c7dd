"""Matplotlib figures for coverage reports.

Figures are built on :class:`matplotlib.figure.Figure` directly rather than
pyplot, so rendering needs no display backend and keeps no global state.
"""

from contextlib import contextmanager

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

COVER_COLOR = "#8c8c8c"
CANOPY_COLOR = "#2e7d32"

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


@contextmanager
def report_style():
    with mpl.rc_context(RC):
        yield


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    return path


def plot_coverage(rows, summary, path):
    """Per-file covered-area and canopy percentages with the overall figures as lines."""
    names = [r.file_name for r in rows]
    cover = [r.cover_percentage or 0.0 for r in rows]
    canopy = [np.nan if r.segmentation_percentage is None else r.segmentation_percentage for r in rows]
    x = np.arange(len(rows))
    width = 0.4

    with report_style():
        fig = Figure(figsize=(max(4.0, 0.6 * len(rows) + 2), 3.4))
        ax = fig.add_subplot()
        ax.bar(x - width / 2, cover, width, color=COVER_COLOR, label="covered / total")
        ax.bar(x + width / 2, canopy, width, color=CANOPY_COLOR, label="canopy / covered")
        if summary.area_covered_percent is not None:
            ax.axhline(summary.area_covered_percent, color=COVER_COLOR, ls="--", lw=0.8)
        if summary.canopy_percent is not None:
            ax.axhline(summary.canopy_percent, color=CANOPY_COLOR, ls="--", lw=0.8)
        ax.set_xticks(x, names, rotation=45, ha="right")
        ax.set_ylim(0, 105)
        ax.set_ylabel("percent")
        ax.set_title("Coverage by file")
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0))
        return _save(fig, path)


def plot_comparison(row, path):
    """Estimates for one site against its ground-truth percentage."""
    names = list(row.estimates)
    values = [row.estimates[n] for n in names]
    with report_style():
        fig = Figure(figsize=(max(3.0, 0.9 * len(names) + 1.5), 3.0))
        ax = fig.add_subplot()
        bars = ax.bar(names, values, color=CANOPY_COLOR, width=0.5)
        ax.axhline(row.ground_truth_percent, color="k", lw=1, label=f"ground truth {row.ground_truth_percent:.2f}%")
        for bar, delta in zip(bars, row.deltas.values()):
            ax.annotate(
                f"{delta:+.2f}",
                (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                ha="center",
                va="bottom",
                fontsize=8,
            )
        top = max(values + [row.ground_truth_percent])
        ax.set_ylim(0, min(100.0, top * 1.2 + 1))
        ax.set_ylabel("canopy percent")
        ax.set_title(row.site_name)
        ax.legend(loc="lower right")
        return _save(fig, path)


def plot_gallery(images, path, titles=None, columns=5):
    """Grid of overlay thumbnails."""
    n = len(images)
    if n == 0:
        raise ValueError("no images for the gallery")
    columns = min(columns, n)
    rows = -(-n // columns)
    with report_style():
        fig = Figure(figsize=(2.0 * columns, 2.1 * rows))
        for i, image in enumerate(images):
            ax = fig.add_subplot(rows, columns, i + 1)
            ax.imshow(image, interpolation="nearest")
            ax.set_axis_off()
            if titles is not None:
                ax.set_title(titles[i], fontsize=6)
        fig.subplots_adjust(wspace=0.05, hspace=0.15)
        return _save(fig, path)
