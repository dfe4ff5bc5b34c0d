"""Steric mass-action (SMA) binding kinetics and isotherm."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .params import ParameterError, SmaParams


class SmaDomainError(ArithmeticError):
    """The free binding capacity went negative."""


def free_capacity(q: np.ndarray, params: SmaParams) -> np.ndarray:
    """Salt capacity available for binding, ``Lambda - sum((nu+sigma) q)``.

    ``q`` holds the protein loadings along its last axis.
    """
    q = np.asarray(q, dtype=float)
    return params.ionic_capacity - q @ (params.nu + params.sigma)


def bound_salt(q: np.ndarray, params: SmaParams) -> np.ndarray:
    """Stationary-phase salt from electroneutrality, ``Lambda - sum(nu q)``."""
    q = np.asarray(q, dtype=float)
    return params.ionic_capacity - q @ params.nu


def _powers(base: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    base = np.maximum(base, 0.0)
    with np.errstate(divide="ignore"):
        return np.exp(exponent * np.log(base))


def sma_rate_unchecked(cp: np.ndarray, q: np.ndarray, params: SmaParams) -> np.ndarray:
    """Vectorised SMA rate used inside the integrator.

    ``cp`` has shape ``(..., 1 + n_protein)`` (salt first), ``q`` has shape
    ``(..., n_protein)``.  Negative free capacity and salt are clipped at
    zero; callers check the domain on accepted states.
    """
    qbar = free_capacity(q, params)[..., None]
    salt = cp[..., :1]
    scale = params.rate_scale
    ads = params.k_a * cp[..., 1:] * _powers(qbar, params.nu)
    des = params.k_d * q * _powers(salt, params.nu)
    return scale * (ads - des)


def sma_rate(cp, q, params: SmaParams, tol: float = 0.0) -> np.ndarray:
    """Rate of change of the protein loadings.

    Parameters
    ----------
    cp : array_like, shape (..., 1 + n_protein)
        Pore-phase concentrations, salt in column 0.
    q : array_like, shape (..., n_protein)
        Stationary-phase protein concentrations.
    params : SmaParams
    tol : float
        Allowed negative excursion of the free capacity before raising.

    Raises
    ------
    SmaDomainError
        If the free capacity is below ``-tol``.
    """
    cp = np.asarray(cp, dtype=float)
    q = np.asarray(q, dtype=float)
    if cp.shape[-1] != params.n_protein + 1 or q.shape[-1] != params.n_protein:
        raise ParameterError("state shapes do not match the SMA component count")
    qbar = free_capacity(q, params)
    if np.any(qbar < -tol):
        raise SmaDomainError(f"negative free binding capacity {np.min(qbar)!r}")
    return sma_rate_unchecked(cp, q, params)


def sma_equilibrium(cp, params: SmaParams) -> np.ndarray:
    """Solve the algebraic isotherm for the loadings at fixed ``cp``.

    The free capacity ``x`` satisfies
    ``x + sum((nu+sigma) k_eq cp_i (x/cp_0)^nu) = Lambda``, whose left side
    is increasing in ``x``; the root is bracketed on ``[0, Lambda]``.
    """
    cp = np.asarray(cp, dtype=float)
    salt, prot = cp[0], cp[1:]
    lam = params.ionic_capacity
    if np.all(prot == 0):
        return np.zeros(params.n_protein)
    if salt <= 0:
        raise ParameterError("algebraic SMA needs a strictly positive salt concentration")
    weight = (params.nu + params.sigma) * params.k_eq * prot

    def residual(x):
        return x + np.sum(weight * (x / salt) ** params.nu) - lam

    x = brentq(residual, 0.0, lam, xtol=1e-14 * lam, rtol=4 * np.finfo(float).eps, maxiter=500)
    return params.k_eq * prot * (x / salt) ** params.nu


def ionic_capacity(c_in_s: float, v_titration: float, v_column: float, total_porosity: float) -> float:
    """Ionic capacity from a titration, ``c V_tit / ((1 - eps_t) V_col)``."""
    if not total_porosity < 1.0:
        raise ParameterError(f"total porosity must be < 1, got {total_porosity!r}")
    if v_column <= 0:
        raise ParameterError("column volume must be > 0")
    return c_in_s * v_titration / ((1.0 - total_porosity) * v_column)
