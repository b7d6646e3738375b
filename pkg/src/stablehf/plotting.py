"""Histogram figure for Monte Carlo results (matplotlib, file output only)."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .harness import MonteCarloResult

_TITLES = {"beta": r"$\sqrt{n}(\hat\beta-\beta)$", "sigma": r"normalized $\hat\sigma-\sigma$", "mu": r"normalized $\hat\mu-\mu$"}


def plot_histograms(result: "MonteCarloResult", path, coords=("beta", "sigma")) -> None:
    """One row per estimator, one column per coordinate, with the efficient normal density overlaid."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .harness import COORDS

    labels = result.labels
    fig, axes = plt.subplots(
        len(labels), len(coords), figsize=(4.2 * len(coords), 2.6 * len(labels)), squeeze=False, sharex="col"
    )
    for i, label in enumerate(labels):
        for j, c in enumerate(coords):
            ax = axes[i, j]
            k = COORDS.index(c)
            counts, edges = result.histogram(label, k)
            width = np.diff(edges)
            total = max(int(counts.sum()), 1)
            ax.bar(edges[:-1], counts / (total * width), width=width, align="edge", color="0.75", edgecolor="0.4", lw=0.4)
            var = result.reference["variance"][c]
            x = np.linspace(edges[0], edges[-1], 400)
            ax.plot(x, np.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var), color="C3", lw=1.2)
            if i == 0:
                ax.set_title(_TITLES[c], fontsize=10)
            if j == 0:
                ax.set_ylabel(label.split("(")[0], fontsize=9)
    fig.suptitle(
        f"beta={result.config.theta_true.beta:g}, sigma={result.config.theta_true.sigma:g}, "
        f"n={result.config.n}, reps={result.config.reps}",
        fontsize=9,
    )
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
