"""Potential scale reduction factor and effective sample size."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InsufficientChainsError(ValueError):
    """Fewer than two chains (or fewer than two samples per chain)."""


class ZeroWithinVarianceError(ArithmeticError):
    """Every chain is constant in some parameter, so R-hat is undefined."""


class UndefinedAutocorrelationError(ArithmeticError):
    """Constant series: the autocorrelation is 0/0."""


def chain_arrays(source) -> tuple[list[np.ndarray], list[str], list[str]]:
    """Post-burn-in samples, chain labels and parameter names.

    ``source`` is a :class:`~chromclust.sampler.ChainStore`, a ``(p, k, n)``
    array, or a list of ``(k_i, n)`` arrays (taken as already burnt in).
    """
    if hasattr(source, "snapshot"):
        return source.snapshot(), list(source.labels), list(source.names)
    if isinstance(source, np.ndarray) and source.ndim == 3:
        chains = list(source)
    else:
        chains = [np.asarray(c, dtype=float) for c in source]
    chains = [c[:, None] if c.ndim == 1 else c for c in chains]
    n = chains[0].shape[1] if chains else 0
    return chains, [str(i) for i in range(len(chains))], [f"x{j}" for j in range(n)]


def truncate(chains: list[np.ndarray]) -> np.ndarray:
    """Stack chains as ``(p, k, n)``, keeping the last ``k`` rows of each (shortest length)."""
    k = min(len(c) for c in chains)
    return np.stack([np.asarray(c, dtype=float)[len(c) - k:] for c in chains])


@dataclass
class RhatReport:
    rhat: np.ndarray
    B: np.ndarray
    W: np.ndarray
    var_plus: np.ndarray
    chains: list[str]
    k: int
    threshold: float = 1.10
    names: list[str] = field(default_factory=list)

    @property
    def max(self) -> float:
        return float(np.max(self.rhat))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.rhat < self.threshold))


def gelman_rubin(phi: np.ndarray):
    """Return ``(rhat, B, W, var_plus)`` for a ``(p, k, n)`` array."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 2:
        phi = phi[..., None]
    p, k = phi.shape[:2]
    if p < 2:
        raise InsufficientChainsError("R-hat needs at least two chains")
    if k < 2:
        raise InsufficientChainsError("R-hat needs at least two post-burn-in samples per chain")
    # Offsets from chain 0 keep B = 0 and W = s_0^2 exact for identical chains.
    d = phi.mean(axis=1)
    d = d - d[0]
    B = k / (p - 1) * np.sum((d - d.mean(axis=0)) ** 2, axis=0)
    v = phi.var(axis=1, ddof=1)
    W = v[0] + (v - v[0]).mean(axis=0)
    if np.any(W <= 0):
        bad = np.flatnonzero(W <= 0).tolist()
        raise ZeroWithinVarianceError(f"zero within-chain variance in parameter(s) {bad}")
    var_plus = (k - 1) / k * W + B / k
    return np.sqrt((k - 1) / k + B / (k * W)), B, W, var_plus


def compute_rhat(source, threshold: float = 1.10, param=None) -> RhatReport:
    """R-hat per parameter over the chains in ``source``.

    Chains of unequal length are truncated to the shortest post-burn-in
    length. ``param`` restricts the report to one parameter index.
    """
    chains, labels, names = chain_arrays(source)
    if len(chains) < 2:
        raise InsufficientChainsError(f"R-hat needs at least two chains, got {len(chains)}")
    phi = truncate(chains)
    if param is not None:
        phi = phi[..., [param]]
        names = [names[param]]
    r, B, W, vp = gelman_rubin(phi)
    return RhatReport(r, B, W, vp, labels, phi.shape[1], threshold, names)


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Autocorrelation of each row of ``x`` (``(p, k)``), averaged over rows.

    Autocovariances are taken around each row's mean and normalised by the
    averaged lag-0 value.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * k)))
    f = np.fft.rfft(xc, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :k].mean(axis=0) / k
    if acov[0] <= 0:
        raise UndefinedAutocorrelationError("autocorrelation of a constant series is undefined")
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """``p k / (1 + 2 sum rho_t)`` with Geyer's initial-positive truncation.

    The sum runs over lags ``t >= 1`` and stops at the first ``t`` with
    ``rho_t + rho_{t+1} < 0``.

    Parameters
    ----------
    x : array_like
        One series ``(k,)`` or equal-length chains ``(p, k)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p, k = x.shape
    if k < 2:
        raise InsufficientChainsError("effective sample size needs at least two samples")
    rho = autocorrelation(x)
    pair = rho[1:-1] + rho[2:]
    neg = np.flatnonzero(pair < 0)
    stop = neg[0] + 1 if len(neg) else k - 1
    tau = 1.0 + 2.0 * rho[1:stop].sum()
    return float(p * k / tau)


def ess_per_parameter(source) -> np.ndarray:
    """Effective sample size of each parameter over all chains (truncated to the shortest)."""
    chains, _, _ = chain_arrays(source)
    phi = truncate(chains)
    return np.array([effective_sample_size(phi[:, :, j]) for j in range(phi.shape[2])])
