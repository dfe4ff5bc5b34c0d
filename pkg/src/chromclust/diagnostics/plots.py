"""Matplotlib figures for reports (file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.cluster.hierarchy import dendrogram  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_elbow(ks, L, k_star, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    ax.plot(ks, L, "o-", color="k")
    ax.axvline(k_star, ls="--", color="tab:red", lw=1)
    ax.set_xlabel("K")
    ax.set_ylabel("distortion")
    return _save(fig, path)


def plot_dendrogram(tree, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    dendrogram(tree.Z, labels=tree.labels, ax=ax, color_threshold=0)
    ax.set_ylabel("average Euclidean distance")
    return _save(fig, path)


def plot_traces(store, path, max_points: int = 4000):
    n = store.n_params
    fig, axes = plt.subplots(n, 1, figsize=(6, 1.6 * n + 0.4), sharex=True, squeeze=False,
                             layout="constrained")
    for i, lab in enumerate(store.labels):
        x = store.samples(i)
        step = max(1, len(x) // max_points)
        it = np.arange(len(x))[::step]
        for j in range(n):
            axes[j, 0].plot(it, x[::step, j], lw=0.5, label=lab)
    for j, name in enumerate(store.names):
        axes[j, 0].set_ylabel(name)
    axes[-1, 0].set_xlabel("iteration")
    axes[0, 0].legend(fontsize=6, ncol=min(6, store.n_chains), loc="upper right")
    return _save(fig, path)


def plot_densities(features, path, groups=None):
    n = len(features.names)
    fig, axes = plt.subplots(1, n, figsize=(3 * n, 2.6), squeeze=False, layout="constrained")
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for j, name in enumerate(features.names):
        ax = axes[0, j]
        for r, lab in enumerate(features.labels):
            c = colors[(groups[r] if groups is not None else r) % len(colors)]
            ax.plot(features.grids[j], features.block(j)[r], color=c, lw=1, label=lab)
        ax.set_xlabel(name)
    axes[0, 0].set_ylabel("density")
    axes[0, -1].legend(fontsize=6)
    return _save(fig, path)


def render_figures(verdict, store, outdir) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    out = {"traces": plot_traces(store, outdir / "traces.png")}
    if verdict.curve is not None:
        out["elbow"] = plot_elbow(*verdict.curve, verdict.K, outdir / "elbow.png")
    if verdict.linkage is not None:
        out["dendrogram"] = plot_dendrogram(verdict.linkage, outdir / "dendrogram.png")
    if verdict.features is not None:
        groups = verdict.assignment.labels if verdict.assignment is not None else None
        out["densities"] = plot_densities(verdict.features, outdir / "densities.png", groups)
    return out
