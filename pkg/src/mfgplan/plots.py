"""Figure rendering for run artifacts.

All figures are written to files (SVG by default); no interactive backend is
ever required.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .measures import GridMeasure


def terminal_histogram(samples: np.ndarray, mu1: GridMeasure | None, path) -> Path:
    """Histogram of terminal states against the target density."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(samples, bins=120, density=True, alpha=0.55, color="#4878cf", label="simulated $X_1$")
    if mu1 is not None:
        ax.plot(mu1.nodes, mu1.w / mu1.grid.spacing, "k-", lw=1.5, label="target density")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def drift_heatmap(ts: np.ndarray, xs: np.ndarray, beta: np.ndarray, path, x0: float = 0.0) -> Path:
    """Heat map of the drift over the (t, x) lattice for one initial node."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    mesh = ax.pcolormesh(ts, xs, beta.T, shading="nearest", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label=r"drift $\beta(t, x_0, x)$")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    ax.set_title(f"equilibrium drift, $x_0={x0:g}$")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def xi_histogram(xi: np.ndarray, path) -> Path:
    """Histogram of per-path incentive values."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(xi, bins=120, density=True, color="#6acc65")
    ax.set_xlabel(r"incentive $\xi$")
    ax.set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
