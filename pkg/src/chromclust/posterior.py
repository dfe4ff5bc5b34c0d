"""Log-posterior over log-transformed model parameters and analytic test targets.

Samplers talk to targets through one method::

    log_base, sse = target.evaluate(rho_batch)      # rho_batch: (B, n)

``log_base`` holds every term that does not involve the noise variance
(uniform prior, Jacobian of the transform; for analytic targets the whole
log-density).  ``sse`` is the sum of squared residuals per row, or ``None``
when the target has no noise model.  With noise variance ``s2`` the
conditional log-density of ``rho`` is ``log_base - sse / (2 s2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .column.config import ColumnConfig
from .column.io import read_chromatogram
from .column.params import ParameterError
from .column.solver import SimulationError

LOG_2PI = np.log(2.0 * np.pi)


class DegreesOfFreedomError(ValueError):
    """Fewer observations than parameters."""


@dataclass(frozen=True)
class ParameterSpec:
    """Uniform prior bounds in the original scale plus the sampling transform.

    ``targets`` lists the model-configuration paths that receive the value
    (several paths tie mirrored units to one parameter).
    """

    name: str
    lower: float
    upper: float
    transform: str = "log"
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ParameterError(f"{self.name}: lower bound must be < upper bound")
        if self.transform not in ("log", "linear"):
            raise ParameterError(f"{self.name}: unknown transform {self.transform!r}")
        if self.transform == "log" and not self.lower > 0:
            raise ParameterError(f"{self.name}: log transform requires a positive lower bound")
        object.__setattr__(self, "targets", tuple(self.targets) or (self.name,))

    @property
    def rho_bounds(self) -> tuple[float, float]:
        if self.transform == "log":
            return float(np.log(self.lower)), float(np.log(self.upper))
        return float(self.lower), float(self.upper)

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpec":
        targets = d.get("targets", d.get("target", ()))
        if isinstance(targets, str):
            targets = (targets,)
        return cls(d["name"], float(d["min"]), float(d["max"]), d.get("transform", "log"), tuple(targets))


@dataclass(frozen=True)
class NoiseModel:
    """Inverse-gamma prior IG(alpha0, beta0) on the noise variance."""

    alpha0: float = 0.5
    beta0: float = 0.5

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError("inverse-gamma parameters must be > 0")

    def log_prior(self, sigma2) -> np.ndarray:
        s2 = np.asarray(sigma2, dtype=float)
        a, b = self.alpha0, self.beta0
        with np.errstate(divide="ignore"):
            return np.where(s2 > 0, a * np.log(b) - gammaln(a) - (a + 1) * np.log(s2) - b / s2, -np.inf)

    def conditional(self, n_obs: int, sse: float) -> tuple[float, float]:
        """Shape and scale of the conditional IG(alpha0 + md/2, beta0 + S/2)."""
        return self.alpha0 + 0.5 * n_obs, self.beta0 + 0.5 * sse


@dataclass
class Observations:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if len(self.times) != len(self.values) or len(self.times) < 1:
            raise ValueError("observations need matching, non-empty times and values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observations contain non-finite values")

    @property
    def size(self) -> int:
        """Number of scalar observations, ``m * d``."""
        return self.values.size

    @classmethod
    def from_csv(cls, path, components: Sequence[int] | None = None) -> "Observations":
        chrom = read_chromatogram(path)
        vals = chrom.values if components is None else chrom.values[:, list(components)]
        return cls(chrom.times, vals)


def sum_of_squares(y_model, y) -> float:
    r = np.asarray(y, dtype=float) - np.asarray(y_model, dtype=float)
    return float(np.sum(r * r))


def log_likelihood(y_model, y, sigma2: float) -> tuple[float, float]:
    """Gaussian log-likelihood with covariance ``sigma2 * I``.

    Returns ``(value, S)`` where ``S`` is the residual sum of squares.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    y = np.asarray(y, dtype=float)
    s = sum_of_squares(y_model, y)
    return -0.5 * y.size * (LOG_2PI + np.log(sigma2)) - s / (2.0 * sigma2), s


def sample_variance_estimate(y_model, y, n_params: int) -> float:
    """Residual variance ``S / (md - n)`` at a fixed parameter point."""
    y = np.asarray(y, dtype=float)
    dof = y.size - n_params
    if dof <= 0:
        raise DegreesOfFreedomError(f"need more observations ({y.size}) than parameters ({n_params})")
    return sum_of_squares(y_model, y) / dof


class PosteriorProblem:
    """Posterior of ``theta = (eta, sigma2)`` sampled as ``(rho, sigma2)``.

    Parameters
    ----------
    params
        Parameter specifications; uniform priors are flat in ``eta``.
    observations
        Measured data, ``d`` times by ``m`` components.
    forward
        Callable ``eta -> y_model`` with the shape of ``observations.values``.
        Any exception it raises (or non-finite output) counts as a failed
        evaluation and yields a log-density of ``-inf``.
    noise
        Inverse-gamma prior; if omitted, ``alpha0 = 0.5`` and
        ``beta0 = 0.5 * sigma0^2`` with ``sigma0^2`` the sample-variance
        estimate at ``eta0`` (default: midpoint of the transformed bounds).
    """

    def __init__(self, params: Sequence[ParameterSpec], observations: Observations,
                 forward: Callable[[np.ndarray], np.ndarray], noise: NoiseModel | None = None,
                 eta0=None):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ParameterError("parameter names must be unique")
        self.params = list(params)
        self.observations = observations
        self.forward = forward
        self.n_obs = observations.size
        lo, hi = np.array([p.rho_bounds for p in self.params]).T
        self.rho_lower, self.rho_upper = lo, hi
        self._is_log = np.array([p.transform == "log" for p in self.params])
        self._log_volume = float(np.sum(np.log([p.upper - p.lower for p in self.params])))
        if noise is None:
            eta0 = self.to_eta(self.midpoint()) if eta0 is None else np.asarray(eta0, dtype=float)
            y0 = self.simulate(eta0)
            if y0 is None:
                raise SimulationError("forward model failed at the reference point for sigma0^2")
            s0 = sample_variance_estimate(y0, observations.values, self.n_params)
            noise = NoiseModel(0.5, 0.5 * s0)
        self.noise = noise

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.rho_lower + self.rho_upper)

    def to_eta(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return np.where(self._is_log, np.exp(rho), rho)

    def to_rho(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self._is_log, np.log(eta), eta)

    def in_support(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        eta = self.to_eta(rho)
        lo = np.array([p.lower for p in self.params])
        hi = np.array([p.upper for p in self.params])
        return np.all((eta >= lo) & (eta <= hi) & np.isfinite(rho), axis=-1)

    def log_prior(self, rho) -> np.ndarray:
        """Uniform prior density of ``eta`` (normalised), ``-inf`` outside."""
        return np.where(self.in_support(rho), -self._log_volume, -np.inf)

    def log_jacobian(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return np.sum(np.where(self._is_log, rho, 0.0), axis=-1)

    def simulate(self, eta) -> np.ndarray | None:
        try:
            y = np.asarray(self.forward(np.asarray(eta, dtype=float)), dtype=float)
        except (SimulationError, ParameterError, ArithmeticError, ValueError):
            return None
        if y.shape != self.observations.values.shape or not np.all(np.isfinite(y)):
            return None
        return y

    def evaluate(self, rho_batch) -> tuple[np.ndarray, np.ndarray]:
        rho_batch = np.atleast_2d(np.asarray(rho_batch, dtype=float))
        base = self.log_prior(rho_batch) + self.log_jacobian(rho_batch)
        sse = np.full(len(rho_batch), np.inf)
        for i, rho in enumerate(rho_batch):
            if not np.isfinite(base[i]):
                continue
            y = self.simulate(self.to_eta(rho))
            if y is None:
                base[i] = -np.inf
            else:
                sse[i] = sum_of_squares(y, self.observations.values)
        return base, sse

    def log_posterior(self, rho, sigma2: float) -> float:
        """Unnormalised log-density of ``(rho, sigma2)``."""
        base, sse = self.evaluate(rho)
        if not np.isfinite(base[0]):
            return -np.inf
        loglik = -0.5 * self.n_obs * (LOG_2PI + np.log(sigma2)) - sse[0] / (2.0 * sigma2)
        return float(base[0] + loglik + self.noise.log_prior(sigma2))

    def full_log_posterior(self, log_base, sse, sigma2):
        """Vectorised version of :meth:`log_posterior` from cached pieces."""
        log_base, sse, sigma2 = (np.asarray(x, dtype=float) for x in (log_base, sse, sigma2))
        with np.errstate(invalid="ignore"):
            out = (log_base - 0.5 * self.n_obs * (LOG_2PI + np.log(sigma2)) - sse / (2.0 * sigma2)
                   + self.noise.log_prior(sigma2))
        return np.where(np.isfinite(log_base), out, -np.inf)

    def draw_prior(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform-in-``eta`` prior draws returned in the transformed scale."""
        lo = np.array([p.lower for p in self.params])
        hi = np.array([p.upper for p in self.params])
        return self.to_rho(rng.uniform(lo, hi, size=(size, self.n_params)))


@dataclass
class GaussianMixtureTarget:
    """Log-density of ``sum_j w_j N(x; mu_j, C_j)``; no noise model."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    names: list[str] = field(default_factory=list)

    noise = None
    n_obs = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        k, n = self.means.shape
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = np.broadcast_to(covs, (k, n, n))
        self.covs = np.array(covs)
        if self.weights.shape != (k,) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per mode")
        self.weights = self.weights / self.weights.sum()
        if self.covs.shape != (k, n, n) or not np.allclose(self.covs, np.swapaxes(self.covs, 1, 2)):
            raise ValueError("covariances must be symmetric n x n matrices")
        try:
            chol = np.linalg.cholesky(self.covs)
        except np.linalg.LinAlgError:
            raise ValueError("covariances must be positive definite") from None
        self._inv_chol = np.linalg.inv(chol)
        self._log_norm = (np.log(self.weights) - 0.5 * n * LOG_2PI
                          - np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1))
        if not self.names:
            self.names = [f"x{i}" for i in range(n)]

    @property
    def n_params(self) -> int:
        return self.means.shape[1]

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x[..., None, :] - self.means
        z = np.einsum("kij,...kj->...ki", self._inv_chol, d)
        return logsumexp(self._log_norm - 0.5 * np.sum(z * z, axis=-1), axis=-1)

    def evaluate(self, rho_batch):
        return self.log_density(np.atleast_2d(rho_batch)), None

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixtureTarget":
        modes = d["modes"]
        n = len(modes[0]["mean"])
        covs = [np.asarray(m.get("cov", np.eye(n)), dtype=float) for m in modes]
        covs = [c * np.eye(n) if c.ndim == 0 else (np.diag(c) if c.ndim == 1 else c) for c in covs]
        return cls([m.get("weight", 1.0) for m in modes], [m["mean"] for m in modes], covs,
                   list(d.get("names", [])))


def gaussian_mixture_target(modes, names=None) -> GaussianMixtureTarget:
    """Build a mixture from ``[(weight, mean, cov), ...]``."""
    w, mu, cov = zip(*modes)
    return GaussianMixtureTarget(np.array(w), np.array(mu), np.array(cov), list(names or []))


def trimodal_target(separation: float = 12.0, dim: int = 2, names=None) -> GaussianMixtureTarget:
    """Equal-weight unit-covariance modes on an equilateral triangle.

    Mode ``j`` sits at ``separation / sqrt(3) * (cos a_j, sin a_j)`` with
    ``a_j = pi/2 + 2 pi j / 3``, rotated slightly so that no two modes share
    a marginal coordinate.
    """
    r = separation / np.sqrt(3.0)
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3 + 0.3
    means = np.zeros((3, dim))
    means[:, 0] = r * np.cos(angles)
    means[:, 1] = r * np.sin(angles)
    return GaussianMixtureTarget(np.ones(3), means, np.eye(dim), list(names or []))


class ColumnForwardModel:
    """Maps ``eta`` onto the column configuration and returns observed outlets.

    Picklable, so it can be shipped to worker processes.
    """

    def __init__(self, config: ColumnConfig, params: Sequence[ParameterSpec], times,
                 components: Sequence[int] = (1,), disc_overrides: dict | None = None):
        self.config = config
        self.params = list(params)
        self.times = np.asarray(times, dtype=float)
        self.components = list(components)
        self.disc_overrides = dict(disc_overrides or {})
        for p in self.params:
            for path in p.targets:
                config.get(path)

    def __call__(self, eta) -> np.ndarray:
        values = {p.targets: float(v) for p, v in zip(self.params, np.atleast_1d(eta))}
        cfg = self.config.with_values(values)
        chrom = cfg.simulate(times=self.times, disc=cfg.discretization(**self.disc_overrides))
        return chrom.values[:, self.components]
