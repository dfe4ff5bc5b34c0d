"""Chromatogram figure for the ``simulate --plot`` path."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_chromatogram(chrom, path, observed=None):
    """Outlet concentrations against time; ``observed`` overlays data points."""
    fig, ax = plt.subplots(figsize=(6, 3.2), layout="constrained")
    for i in range(chrom.n_comp):
        ax.plot(chrom.times, chrom.values[:, i], lw=1, label=f"component {i}")
    if observed is not None:
        ax.plot(observed.times, observed.values, ".", ms=2, color="k", label="data")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("concentration [mol/m^3]")
    ax.legend(fontsize=7)
    fig.savefig(Path(path), dpi=110, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
