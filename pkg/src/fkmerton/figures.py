"""Headless figure rendering for the report artifacts.

Two plots mirror the solver's primary diagnostics: the h(t, y) surface as a
heatmap and the per-iteration accuracy on a log scale.  Rendering uses the
Agg backend so the CLI works without a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .grid import GridFunction  # noqa: E402


def render_h_surface(h: GridFunction, path) -> None:
    """Heatmap of h over (t, y); m = 1 grids only."""
    grid = h.grid
    if grid.m != 1:
        raise ValueError("surface rendering supports one factor dimension")
    fig, ax = plt.subplots(figsize=(7.0, 4.2), constrained_layout=True)
    mesh = ax.pcolormesh(grid.t, grid.ys[0], h.values.T, shading="gouraud",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="h(t, y)")
    ax.set_xlabel("t")
    ax.set_ylabel("y")
    ax.set_title("distortion function h")
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_delta_curve(delta_seq, path, metric_seq=None) -> None:
    """Semilog plot of the accuracy delta_n per fixed-point iteration."""
    deltas = np.asarray(delta_seq, dtype=float)
    n = np.arange(1, deltas.size + 1)
    fig, ax = plt.subplots(figsize=(7.0, 4.2), constrained_layout=True)
    ax.semilogy(n, deltas, "o-", label=r"$\delta_n$")
    if metric_seq is not None:
        metric = np.asarray(metric_seq, dtype=float)
        shown = np.where(metric > 0, metric, np.nan)
        k = min(shown.size, n.size)
        if np.any(np.isfinite(shown[:k])):
            ax.semilogy(n[:k], shown[:k], "s--", label="weighted metric gap")
    ax.set_xlabel("iteration n")
    ax.set_ylabel("sup gap between successive iterates")
    ax.set_title("fixed-point convergence")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, dpi=150)
    plt.close(fig)
