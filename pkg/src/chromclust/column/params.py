"""Parameter containers for the unit operations of the column model.

All quantities are SI: lengths in m, volumes in m^3, flow rates in m^3/s,
concentrations in mol/m^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ParameterError(ValueError):
    """Raised when a unit parameter violates its physical invariants."""


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0.0 or not math.isfinite(value):
        raise ParameterError(f"{name} must be strictly positive, got {value!r}")
    return value


def _as_vector(name: str, values, n: int, minimum: float = 0.0) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1 and n > 1:
        arr = np.full(n, arr.item())
    if arr.shape != (n,):
        raise ParameterError(f"{name} must have {n} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < minimum):
        raise ParameterError(f"{name} entries must be finite and >= {minimum}, got {arr.tolist()}")
    return arr


@dataclass(frozen=True)
class ComponentSet:
    """Component bookkeeping.

    ``n_protein`` counts bound (protein) components.  When ``salt`` is true
    the salt is component 0 and proteins follow; a salt-free set is used for
    inert tracer studies.
    """

    n_protein: int = 1
    salt: bool = True

    def __post_init__(self):
        if self.n_protein < (1 if self.salt else 0) or self.n_protein + int(self.salt) < 1:
            raise ParameterError(f"invalid component set: {self}")

    @property
    def n_comp(self) -> int:
        return self.n_protein + int(self.salt)

    def names(self) -> list[str]:
        return [f"component_{i}" for i in range(self.n_comp)]


@dataclass(frozen=True)
class CstrParams:
    volume: float
    flow_rate: float

    def __post_init__(self):
        _positive("CSTR volume", self.volume)
        _positive("flow rate", self.flow_rate)


@dataclass(frozen=True)
class DpfrParams:
    """Dispersive plug flow reactor (tubing) parameters.

    ``area`` is the flow cross-section; it only matters for converting the
    outlet concentration into a mass flux (``velocity * area``).
    """

    length: float
    axial_dispersion: float
    velocity: float
    area: float = 1.0

    def __post_init__(self):
        _positive("DPFR length", self.length)
        _positive("DPFR axial dispersion", self.axial_dispersion)
        _positive("DPFR velocity", self.velocity)
        _positive("DPFR cross-section area", self.area)

    @classmethod
    def from_flow(cls, length: float, axial_dispersion: float, flow_rate: float,
                  tube_radius: float) -> "DpfrParams":
        area = math.pi * _positive("tube radius", tube_radius) ** 2
        return cls(length, axial_dispersion, _positive("flow rate", flow_rate) / area, area)

    @property
    def flow_rate(self) -> float:
        return self.velocity * self.area

    @property
    def volume(self) -> float:
        return self.length * self.area


@dataclass(frozen=True)
class GrmParams:
    """General rate model transport parameters.

    Per-component arrays (film mass transfer, pore and surface diffusion)
    are indexed like the component set, salt first when present.
    """

    length: float
    particle_radius: float
    col_porosity: float
    par_porosity: float
    interstitial_velocity: float
    axial_dispersion: float
    film_mass_transfer: Sequence[float]
    pore_diffusion: Sequence[float]
    surface_diffusion: Sequence[float] | None = None
    area: float = 1.0

    def __post_init__(self):
        _positive("column length", self.length)
        _positive("particle radius", self.particle_radius)
        _positive("interstitial velocity", self.interstitial_velocity)
        _positive("column cross-section area", self.area)
        for name in ("col_porosity", "par_porosity"):
            value = float(getattr(self, name))
            if not 0.0 < value < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {value!r}")
        if not self.axial_dispersion >= 0.0:
            raise ParameterError(f"axial_dispersion must be >= 0, got {self.axial_dispersion!r}")
        n = max(np.atleast_1d(v).size for v in (self.film_mass_transfer, self.pore_diffusion,
                                                  0.0 if self.surface_diffusion is None else self.surface_diffusion))
        object.__setattr__(self, "film_mass_transfer", _as_vector("film_mass_transfer", self.film_mass_transfer, n))
        object.__setattr__(self, "pore_diffusion", _as_vector("pore_diffusion", self.pore_diffusion, n))
        surface = np.zeros(n) if self.surface_diffusion is None else self.surface_diffusion
        object.__setattr__(self, "surface_diffusion", _as_vector("surface_diffusion", surface, n))

    @classmethod
    def from_flow(cls, *, length: float, diameter: float, flow_rate: float, col_porosity: float,
                  **kwargs) -> "GrmParams":
        """Build parameters with the interstitial velocity derived from the flow rate."""
        area = math.pi * _positive("column diameter", diameter) ** 2 / 4.0
        u_int = _positive("flow rate", flow_rate) / (area * col_porosity)
        return cls(length=length, col_porosity=col_porosity, interstitial_velocity=u_int,
                   area=area, **kwargs)

    @property
    def n_comp(self) -> int:
        return len(self.film_mass_transfer)

    @property
    def flow_rate(self) -> float:
        return self.interstitial_velocity * self.area * self.col_porosity

    @property
    def total_porosity(self) -> float:
        return self.col_porosity + (1.0 - self.col_porosity) * self.par_porosity


@dataclass(frozen=True)
class SmaParams:
    """Steric mass-action binding of ``len(k_eq)`` proteins against salt.

    ``k_a = k_eq * k_d``.  In quasi-stationary mode both rates are multiplied
    by ``qs_scale`` so the dynamic form relaxes quasi-instantly onto the
    algebraic isotherm.
    """

    k_eq: Sequence[float]
    nu: Sequence[float]
    sigma: Sequence[float]
    ionic_capacity: float
    k_d: Sequence[float] | float = 1.0
    mode: str = "dynamic"
    qs_scale: float = 1e4

    def __post_init__(self):
        n = np.atleast_1d(self.k_eq).size
        object.__setattr__(self, "k_eq", _as_vector("k_eq", self.k_eq, n))
        object.__setattr__(self, "nu", _as_vector("nu", self.nu, n))
        object.__setattr__(self, "sigma", _as_vector("sigma", self.sigma, n))
        object.__setattr__(self, "k_d", _as_vector("k_d", self.k_d, n))
        if np.any(self.k_eq <= 0) or np.any(self.nu <= 0):
            raise ParameterError("k_eq and nu must be strictly positive")
        if not self.ionic_capacity > 0:
            raise ParameterError(f"ionic capacity must be > 0, got {self.ionic_capacity!r}")
        if self.mode not in ("dynamic", "quasi-stationary"):
            raise ParameterError(f"unknown SMA mode {self.mode!r}")
        _positive("qs_scale", self.qs_scale)

    @property
    def n_protein(self) -> int:
        return len(self.k_eq)

    @property
    def rate_scale(self) -> float:
        return self.qs_scale if self.mode == "quasi-stationary" else 1.0

    @property
    def k_a(self) -> np.ndarray:
        return self.k_eq * self.k_d


@dataclass(frozen=True)
class Discretization:
    n_axial: int = 100
    n_radial: int = 10
    dpfr_cells: int = 50
    scheme: str = "vanleer"
    rtol: float = 1e-6
    atol: float = 1e-8
    max_step: float = math.inf
    output_times: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_axial < 2 or self.dpfr_cells < 2:
            raise ParameterError("axial discretizations need at least 2 cells")
        if self.n_radial < 1:
            raise ParameterError("n_radial must be >= 1")
        if self.scheme not in ("vanleer", "upwind"):
            raise ParameterError(f"unknown advection scheme {self.scheme!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ParameterError("integrator tolerances must be > 0")
