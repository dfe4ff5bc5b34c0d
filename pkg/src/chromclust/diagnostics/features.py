"""Map chains to concatenated kernel density estimates on shared grids."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .rhat import chain_arrays

_SQRT2PI = np.sqrt(2.0 * np.pi)


class DegenerateParameterWarning(RuntimeWarning):
    """A chain is constant in a parameter; its density was replaced by a spike."""


@dataclass
class FeatureMatrix:
    X: np.ndarray                 # (p, n*s)
    grids: np.ndarray             # (n, s)
    s: int
    labels: list[str]
    names: list[str]
    spikes: list[tuple[str, str]] = field(default_factory=list)

    @property
    def shape(self):
        return self.X.shape

    def block(self, j: int) -> np.ndarray:
        """Density rows of parameter ``j``, shape ``(p, s)``."""
        return self.X[:, j * self.s:(j + 1) * self.s]


def silverman_bandwidth(x: np.ndarray) -> float:
    """Normal-reference bandwidth with a robust scale (MAD/0.6745, else std)."""
    x = np.asarray(x, dtype=float)
    sig = np.median(np.abs(x - np.median(x))) / 0.6745
    if sig <= 0:
        sig = x.std(ddof=1) if len(x) > 1 else 0.0
    return float(sig * (4.0 / (3.0 * len(x))) ** 0.2)


def gaussian_kde(x: np.ndarray, grid: np.ndarray, bandwidth: float, chunk: int = 8192) -> np.ndarray:
    """Gaussian-kernel density of samples ``x`` evaluated at ``grid``."""
    out = np.zeros(len(grid))
    for i in range(0, len(x), chunk):
        u = (grid[None, :] - x[i:i + chunk, None]) / bandwidth
        out += np.exp(-0.5 * u * u).sum(axis=0)
    return out / (len(x) * bandwidth * _SQRT2PI)


def featurize_chains(source, s: int = 64, min_length: int = 10) -> FeatureMatrix:
    """Rows ``x_r = [h_1^r, ..., h_n^r]`` of per-parameter densities.

    Each parameter uses one grid of ``s`` points spanning the pooled
    min-max over all chains, so rows are directly comparable.
    """
    chains, labels, names = chain_arrays(source)
    if s < 2:
        raise ValueError("s must be at least 2")
    short = [lab for lab, c in zip(labels, chains) if len(c) < min_length]
    if short:
        raise ValueError(f"chains {short} have fewer than {min_length} post-burn-in samples")
    n = chains[0].shape[1]
    lo = np.min([c.min(axis=0) for c in chains], axis=0)
    hi = np.max([c.max(axis=0) for c in chains], axis=0)
    grids = np.empty((n, s))
    X = np.empty((len(chains), n * s))
    spikes = []
    for j in range(n):
        a, b = lo[j], hi[j]
        if b <= a:
            half = 0.5 * max(abs(a), 1.0)
            a, b = a - half, b + half
        g = np.linspace(a, b, s)
        grids[j] = g
        for r, c in enumerate(chains):
            x = c[:, j]
            bw = silverman_bandwidth(x)
            row = np.zeros(s)
            if bw > 0:
                row = gaussian_kde(x, g, bw)
            else:
                row[np.argmin(np.abs(g - x[0]))] = 1.0 / (g[1] - g[0])
                spikes.append((labels[r], names[j]))
            X[r, j * s:(j + 1) * s] = row
    if spikes:
        warnings.warn(f"constant parameter in chains, density set to a spike: {spikes}",
                      DegenerateParameterWarning, stacklevel=2)
    return FeatureMatrix(X, grids, s, labels, names, spikes)
