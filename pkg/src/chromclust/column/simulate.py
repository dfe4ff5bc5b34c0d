"""Convenience drivers for single units and the full unit chain."""

from __future__ import annotations

import warnings

import numpy as np

from .inlet import InletProfile
from .params import CstrParams, Discretization, DpfrParams, GrmParams, SmaParams
from .solver import Chromatogram, SimulationError, SimulationResult, UnitSystem, integrate
from .units import CstrUnit, DpfrUnit, GrmUnit, Unit


class UndershootWarning(RuntimeWarning):
    """Outlet concentrations dipped below ``-10 * atol``."""


def simulate_cstr(params: CstrParams, inlet: InletProfile, times, init=None,
                  disc: Discretization | None = None) -> Chromatogram:
    """Stirred tank response ``dc/dt = (Q/V)(c_in - c)``."""
    disc = disc or Discretization()
    system = UnitSystem([CstrUnit(params, inlet.n_comp)])
    y0 = None if init is None else np.broadcast_to(np.asarray(init, float), (inlet.n_comp,)).copy()
    return integrate(system, inlet, times, disc, y0=y0).chromatogram


def simulate_dpfr(params: DpfrParams, inlet: InletProfile, times, disc: Discretization | None = None,
                  init=None) -> Chromatogram:
    """Dispersive plug flow response with Danckwerts inlet and free outflow."""
    disc = disc or Discretization()
    unit = DpfrUnit(params, inlet.n_comp, disc.dpfr_cells, disc.scheme)
    y0 = None
    if init is not None:
        y0 = np.broadcast_to(np.asarray(init, float), (disc.dpfr_cells, inlet.n_comp)).ravel().copy()
    return integrate(UnitSystem([unit]), inlet, times, disc, y0=y0).chromatogram


def simulate_grm(params: GrmParams, binding: SmaParams | None, inlet: InletProfile, times,
                 disc: Discretization | None = None, record_states: bool = True) -> SimulationResult:
    """Column alone; states are recorded by default for per-node access."""
    disc = disc or Discretization()
    system = UnitSystem([GrmUnit(params, binding, disc)])
    result = integrate(system, inlet, times, disc, record_states=True)
    check_result(result, disc)
    if not record_states:
        result.states = None
    return result


def simulate_system(units: list[Unit], inlet: InletProfile, times,
                    disc: Discretization | None = None) -> Chromatogram:
    """Simulate units in flow order and return the detector chromatogram."""
    disc = disc or Discretization()
    system = UnitSystem(units)
    try:
        result = integrate(system, inlet, times, disc, record_states=any(isinstance(u, GrmUnit) for u in units))
    except SimulationError as exc:
        exc.unit = _failing_unit(system, exc)
        raise
    check_result(result, disc)
    return result.chromatogram


def _failing_unit(system: UnitSystem, exc: SimulationError):
    return exc.unit if exc.unit is not None else len(system.units) - 1


def check_result(result: SimulationResult, disc: Discretization, capacity_rtol: float = 1e-6) -> dict:
    """Post-integration invariants.

    Raises :class:`SimulationError` when the SMA free capacity leaves
    ``[0, Lambda]`` by more than ``capacity_rtol * Lambda``; warns when any
    outlet dips below ``-10 * atol``.  Returns the extreme values found.
    """
    info = {"min_outlet": min(float(o.min()) for o in result.outlets)}
    if info["min_outlet"] < -10.0 * disc.atol:
        # constant text so repeated calls (e.g. inside a sampler) warn once
        warnings.warn("outlet undershoot below -10*atol; refine the grid or tighten tolerances",
                      UndershootWarning, stacklevel=3)
    if result.states is not None:
        for k, (unit, sl) in enumerate(zip(result.system.units, result.system.slices)):
            if isinstance(unit, GrmUnit) and unit.nb:
                qbar = unit.free_capacity(result.states[:, sl])
                lam = unit.binding.ionic_capacity
                lo, hi = float(qbar.min()), float(qbar.max())
                info[f"free_capacity_{k}"] = (lo, hi)
                tol = capacity_rtol * lam
                if lo < -tol or hi > lam + tol:
                    bad = int(np.argmax(np.any((qbar < -tol) | (qbar > lam + tol),
                                               axis=tuple(range(1, qbar.ndim)))))
                    raise SimulationError(f"SMA free capacity left [0, Lambda]: range [{lo:.6g}, {hi:.6g}]",
                                          time=float(result.times[bad]), unit=k)
    return info
