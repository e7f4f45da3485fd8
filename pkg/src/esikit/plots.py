"""Figure rendering for the command line tools.

Everything here draws to files through the Agg backend, so it works in
headless environments. The library core never imports this module; only
the CLI does, right after writing the delimited outputs the figures
accompany.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_field_map", "save_scatter_map", "save_cv_error_figure"]


def save_field_map(path, grid, values: np.ndarray, title: str = "") -> None:
    """Render a field over a two-axis grid as a pseudocolor map."""
    if grid.ndim != 2:
        raise ValueError("field maps need a two-axis grid")
    field = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    fig, ax = plt.subplots(figsize=(7, 5))
    mesh = ax.pcolormesh(grid.axes[0], grid.axes[1], field.T, shading="nearest")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_scatter_map(path, coords: np.ndarray, values: np.ndarray, title: str = "") -> None:
    """Render scattered estimates; colored scatter in 2-D, index plot otherwise."""
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7, 5))
    if coords.ndim == 2 and coords.shape[1] == 2:
        sc = ax.scatter(coords[:, 0], coords[:, 1], c=values, s=12)
        fig.colorbar(sc, ax=ax)
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
    else:
        ax.plot(np.arange(values.size), values, ".", markersize=3)
        ax.set_xlabel("target index")
        ax.set_ylabel("estimate")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_cv_error_figure(path, report) -> None:
    """Render the cross-validation report: histogram plus per-scenario series."""
    fig, (ax_h, ax_s) = plt.subplots(1, 2, figsize=(11, 4.5))
    edges = np.asarray(report.bin_edges, dtype=np.float64)
    counts = np.asarray(report.counts)
    finite = np.isfinite(edges)
    if not finite.all():
        # overflow bin for non-finite errors: draw it one bin-width wide
        width = edges[-2] - edges[0] if edges.size > 2 else 1.0
        edges = edges.copy()
        edges[-1] = edges[-2] + max(width / max(counts.size - 1, 1), 1e-12)
    ax_h.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="black")
    ax_h.set_xlabel("cv error")
    ax_h.set_ylabel("scenarios")
    ax_h.set_title("cv error histogram")
    series = np.asarray(report.series, dtype=np.float64)
    shown = np.where(np.isfinite(series), series, np.nan)
    ax_s.plot(np.arange(series.size), shown, ".-", markersize=4)
    ax_s.set_xlabel("result_data_index")
    ax_s.set_ylabel("cv error")
    ax_s.set_title("cv error by scenario")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
