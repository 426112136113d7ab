"""Figure rendering for the benchmark reports.

All figures are written as SVG next to the CSV outputs; the CSVs stay
the source of truth and nothing else depends on rendering.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_recovery", "plot_density_map", "plot_dataset"]

# strip volatile metadata so rerenders of identical data are identical files
_SAVEFIG_KW = dict(format="svg", metadata={"Date": None}, bbox_inches="tight")


def plot_recovery(summary, title, path):
    """True sigma(x) with the run-averaged estimate and 1/2-std bands."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    g, m, s = summary.grid, summary.mean, summary.std
    ax.fill_between(g, m - 2 * s, m + 2 * s, color="0.85", label=r"$\pm 2$ std")
    ax.fill_between(g, m - s, m + s, color="0.7", label=r"$\pm 1$ std")
    ax.plot(g, summary.truth, "r-", lw=1.5, label=r"true $\sigma(x)$")
    ax.plot(g, m, "k-", lw=1.2, label="run average")
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\sigma$")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


def plot_density_map(dmap, title, path):
    """Column-normalized density of predicted vs true sigma with the diagonal."""
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    mesh = ax.pcolormesh(dmap.pred_edges, dmap.true_edges, dmap.hist.T, cmap="viridis")
    lo = min(dmap.pred_edges[0], dmap.true_edges[0])
    hi = max(dmap.pred_edges[-1], dmap.true_edges[-1])
    ax.plot([lo, hi], [lo, hi], "r-", lw=1.0)
    ax.set_xlabel(r"predicted $\sigma$")
    ax.set_ylabel(r"true $\sigma$")
    ax.set_title(title)
    fig.colorbar(mesh, ax=ax, label="normalized density")
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


def plot_dataset(x, y, grid, f_true, path, title=""):
    """1-D dataset scatter with the generating mean function."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(np.ravel(x), y, "o", ms=3, alpha=0.6, label="samples")
    ax.plot(grid, f_true, "r-", lw=1.5, label="f(x)")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)
