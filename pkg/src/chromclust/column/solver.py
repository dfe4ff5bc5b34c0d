"""Time integration of chained unit operations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import ode, solve_ivp
from scipy.interpolate import PchipInterpolator

from . import _kernels as K
from .inlet import InletProfile, TabulatedInlet
from .params import Discretization, ParameterError
from .units import Unit

_BANDS: dict = {}


class SimulationError(RuntimeError):
    """Integrator failure or a violated state invariant."""

    def __init__(self, message: str, time: float | None = None, unit: int | None = None):
        super().__init__(message)
        self.time = time
        self.unit = unit


@dataclass
class Chromatogram:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("chromatogram contains non-finite concentrations")

    @property
    def n_comp(self) -> int:
        return self.values.shape[1]

    def interpolate(self, times) -> "Chromatogram":
        """Monotone cubic (PCHIP) resampling onto ``times``."""
        times = np.asarray(times, dtype=float)
        if len(self.times) == len(times) and np.array_equal(self.times, times):
            return Chromatogram(times, self.values.copy())
        interp = PchipInterpolator(self.times, self.values, axis=0, extrapolate=False)
        vals = interp(times)
        if np.any(np.isnan(vals)):
            raise ValueError("requested times lie outside the simulated range")
        return Chromatogram(times, vals)


@dataclass
class SimulationResult:
    times: np.ndarray
    outlets: list[np.ndarray]
    states: np.ndarray | None
    system: "UnitSystem"

    @property
    def chromatogram(self) -> Chromatogram:
        return Chromatogram(self.times, self.outlets[-1])

    def unit_states(self, index: int) -> np.ndarray:
        if self.states is None:
            raise ValueError("states were not recorded")
        return self.states[:, self.system.slices[index]]


class UnitSystem:
    """Units in flow order; outlet of unit k is the inlet of unit k+1."""

    def __init__(self, units: list[Unit]):
        if not units:
            raise ParameterError("a unit system needs at least one unit")
        nc = {u.n_comp for u in units}
        if len(nc) != 1:
            raise ParameterError("all units must carry the same components")
        self.units = units
        self.n_comp = units[0].n_comp
        offsets = np.cumsum([0] + [u.n_states for u in units])
        self.slices = [slice(a, b) for a, b in zip(offsets[:-1], offsets[1:])]
        self.n_states = int(offsets[-1])
        self._pattern = None
        packed = [u.pack() for u in units]
        self._kinds = np.array([u.kind for u in units], dtype=np.int64)
        self._offsets = offsets[:-1].astype(np.int64)
        self._iptr = np.cumsum([0] + [len(p[0]) for p in packed]).astype(np.int64)
        self._fptr = np.cumsum([0] + [len(p[1]) for p in packed]).astype(np.int64)
        self._ints = np.concatenate([p[0] for p in packed]).astype(np.int64)
        self._floats = np.concatenate([p[1] for p in packed]).astype(float)

    def initial_state(self) -> np.ndarray:
        return np.concatenate([u.initial_state() for u in self.units])

    def rhs(self, y: np.ndarray, c_in: np.ndarray, t: float = 0.0,
            slope: np.ndarray | None = None, start: float = 0.0) -> np.ndarray:
        """System derivative for the inlet ``c_in + slope * (t - start)``."""
        c_in = np.asarray(c_in, dtype=float)
        slope = np.zeros_like(c_in) if slope is None else np.asarray(slope, dtype=float)
        return K.system_rhs(t, np.asarray(y, dtype=float), start, c_in, slope, self._kinds,
                            self._offsets, self._iptr, self._fptr, self._ints, self._floats)

    def bandwidth(self) -> tuple[int, int]:
        """Lower and upper Jacobian bandwidth (cached per layout)."""
        key = (self._kinds.tobytes(), self._ints.tobytes())
        if key not in _BANDS:
            pat = self.jac_sparsity().tocoo()
            _BANDS[key] = (int(max(0, (pat.row - pat.col).max())),
                           int(max(0, (pat.col - pat.row).max())))
        return _BANDS[key]

    def outlets(self, y: np.ndarray) -> list[np.ndarray]:
        """Outlet concentrations of every unit for states of shape (..., n_states)."""
        return [y[..., sl][..., u.outlet_cols()] for u, sl in zip(self.units, self.slices)]

    def holdup(self, y: np.ndarray) -> np.ndarray:
        return sum(u.holdup(y[sl]) for u, sl in zip(self.units, self.slices))

    def jac_sparsity(self) -> sparse.csc_matrix:
        if self._pattern is None:
            rows, cols = [], []
            for k, (u, sl) in enumerate(zip(self.units, self.slices)):
                r, c = u.pattern()
                rows.append(r + sl.start)
                cols.append(c + sl.start)
                if k:
                    prev, psl = self.units[k - 1], self.slices[k - 1]
                    rr, cc = np.meshgrid(u.inlet_rows() + sl.start, prev.outlet_cols() + psl.start,
                                         indexing="ij")
                    rows.append(rr.ravel())
                    cols.append(cc.ravel())
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            data = np.ones(len(rows), dtype=bool)
            self._pattern = sparse.csc_matrix((data, (rows, cols)), shape=(self.n_states,) * 2)
        return self._pattern


def integrate(system: UnitSystem, inlet: InletProfile, times, disc: Discretization,
              y0: np.ndarray | None = None, record_states: bool = False,
              method: str = "vode") -> SimulationResult:
    """Integrate ``system`` driven by ``inlet`` and report states at ``times``.

    Integration restarts at every inlet breakpoint so discontinuous inlet
    steps never fall inside a step.  ``method`` is ``"vode"`` (variable-order
    BDF with a banded finite-difference Jacobian) or any implicit
    :func:`scipy.integrate.solve_ivp` method, which then uses the structural
    sparsity pattern.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ParameterError("output times must be a non-negative, non-decreasing 1-D array")
    if inlet.n_comp != system.n_comp:
        raise ParameterError(f"inlet has {inlet.n_comp} components, system has {system.n_comp}")
    y = system.initial_state() if y0 is None else np.array(y0, dtype=float)
    if y.shape != (system.n_states,):
        raise ParameterError(f"initial state must have {system.n_states} entries")
    t_end = times[-1]
    edges = [0.0] + [b for b in inlet.breakpoints if 0.0 < b < t_end] + [t_end]
    states = np.empty((len(times), system.n_states))
    states[times <= 0.0] = y
    tabulated = isinstance(inlet, TabulatedInlet)
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        idx = inlet.segment_index(0.5 * (a + b))
        seg = inlet.segments[idx]
        if tabulated:
            def fun(t, yy):
                return system.rhs(yy, inlet(t), t)
        else:
            value, slope, start = seg.value, seg.slope, seg.start

            def fun(t, yy):
                return system.rhs(yy, value, t, slope, start)

        mask = np.flatnonzero((times > a) & (times <= b))
        targets = times[mask]
        if method == "vode":
            y = _vode_segment(system, fun, a, b, y, targets, mask, states, disc)
        else:
            y = _ivp_segment(system, fun, a, b, y, targets, mask, states, disc, method)
    outlets = system.outlets(states)
    return SimulationResult(times, outlets, states if record_states else None, system)


def _vode_segment(system, fun, a, b, y, targets, mask, states, disc):
    lband, uband = system.bandwidth()
    solver = ode(fun).set_integrator("vode", method="bdf", rtol=disc.rtol, atol=disc.atol,
                                     lband=lband, uband=uband, nsteps=200_000,
                                     max_step=0.0 if not np.isfinite(disc.max_step) else disc.max_step)
    solver.set_initial_value(y, a)
    fail = "integrator failed near t={:.6g} s"
    for k, t in zip(mask, targets):
        if t > solver.t:
            solver.integrate(t)
            if not solver.successful():
                raise SimulationError(fail.format(solver.t), time=float(solver.t))
        states[k] = solver.y
    if solver.t < b:
        solver.integrate(b)
        if not solver.successful():
            raise SimulationError(fail.format(solver.t), time=float(solver.t))
    return solver.y.copy()


def _ivp_segment(system, fun, a, b, y, targets, mask, states, disc, method):
    t_eval = targets if len(targets) and targets[-1] >= b else np.append(targets, b)
    sol = solve_ivp(fun, (a, b), y, method=method, t_eval=t_eval, rtol=disc.rtol, atol=disc.atol,
                    max_step=disc.max_step, jac_sparsity=system.jac_sparsity())
    if sol.status != 0:
        raise SimulationError(f"integrator failed: {sol.message}", time=float(sol.t[-1]))
    states[mask] = sol.y[:, :len(targets)].T
    return sol.y[:, -1].copy()
