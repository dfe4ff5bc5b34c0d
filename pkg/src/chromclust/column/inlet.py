"""Inlet concentration profiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParameterError


@dataclass(frozen=True)
class Segment:
    """Linear inlet segment: ``c(t) = value + slope * (t - start)``."""

    start: float
    end: float
    value: np.ndarray
    slope: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return self.value + self.slope * (t - self.start)


class InletProfile:
    """Piecewise-linear inlet profile, constant after the last segment.

    Segment boundaries are exposed through :attr:`breakpoints` so that the
    integrator can restart at discontinuities.
    """

    def __init__(self, segments: list[Segment]):
        if not segments:
            raise ParameterError("an inlet profile needs at least one segment")
        for a, b in zip(segments[:-1], segments[1:]):
            if not np.isclose(a.end, b.start):
                raise ParameterError("inlet segments must be contiguous")
        for s in segments:
            if not s.end > s.start:
                raise ParameterError(f"segment duration must be > 0 ({s.start} -> {s.end})")
            if np.any(s(s.start) < 0) or np.any(s(s.end) < -1e-12):
                raise ParameterError("inlet concentrations must be >= 0")
        self.segments = list(segments)
        self.n_comp = len(segments[0].value)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.start for s in self.segments] + [self.segments[-1].end])

    def segment_index(self, t: float) -> int:
        starts = [s.start for s in self.segments]
        return max(0, min(int(np.searchsorted(starts, t, side="right")) - 1, len(self.segments) - 1))

    def __call__(self, t: float, index: int | None = None) -> np.ndarray:
        seg = self.segments[self.segment_index(t) if index is None else index]
        if t >= seg.end:
            return seg(seg.end)
        return seg(t)

    def sample(self, times) -> np.ndarray:
        return np.array([self(t) for t in np.asarray(times, dtype=float)])

    @classmethod
    def constant(cls, conc, duration: float = np.inf) -> "InletProfile":
        conc = np.atleast_1d(np.asarray(conc, dtype=float))
        end = duration if np.isfinite(duration) else 1e300
        return cls([Segment(0.0, end, conc, np.zeros_like(conc))])

    @classmethod
    def pulse(cls, conc, width: float, total: float) -> "InletProfile":
        conc = np.atleast_1d(np.asarray(conc, dtype=float))
        zero = np.zeros_like(conc)
        return cls([Segment(0.0, width, conc, zero), Segment(width, total, zero, zero)])

    @classmethod
    def step_gradient(cls, *, salt_load: float, protein_load, t_load: float, t_wash: float,
                      salt_end: float, t_gradient: float, t_hold: float = 0.0) -> "InletProfile":
        """Load, wash and linear salt gradient (salt is component 0).

        ``t_hold`` appends a constant segment at the final salt level.
        """
        protein = np.atleast_1d(np.asarray(protein_load, dtype=float))
        nc = 1 + protein.size
        load = np.concatenate([[salt_load], protein])
        wash = np.zeros(nc)
        wash[0] = salt_load
        slope = np.zeros(nc)
        slope[0] = (salt_end - salt_load) / t_gradient
        zero = np.zeros(nc)
        t1 = t_load
        t2 = t1 + t_wash
        t3 = t2 + t_gradient
        segs = [Segment(0.0, t1, load, zero), Segment(t1, t2, wash, zero),
                Segment(t2, t3, wash, slope)]
        if t_hold > 0:
            hold = np.zeros(nc)
            hold[0] = salt_end
            segs.append(Segment(t3, t3 + t_hold, hold, zero))
        return cls(segs)

    @classmethod
    def from_config(cls, spec: dict, n_comp: int) -> "InletProfile":
        """Build from a ``{"segments": [...]}`` or ``{"step_gradient": {...}}`` block."""
        if "step_gradient" in spec:
            return cls.step_gradient(**spec["step_gradient"])
        segs = []
        t = 0.0
        for raw in spec["segments"]:
            duration = float(raw["duration"])
            value = np.asarray(raw["concentration"], dtype=float)
            if value.shape != (n_comp,):
                raise ParameterError(f"inlet segment concentration needs {n_comp} entries")
            slope = np.asarray(raw.get("slope", np.zeros(n_comp)), dtype=float)
            segs.append(Segment(t, t + duration, value, slope))
            t += duration
        return cls(segs)


class TabulatedInlet(InletProfile):
    """Inlet given as a sampled time series, linearly interpolated."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) != len(values) or len(times) < 2:
            raise ParameterError("tabulated inlet needs matching times/values with >= 2 rows")
        if np.any(np.diff(times) <= 0):
            raise ParameterError("tabulated inlet times must be strictly increasing")
        self.times = times
        self.values = values
        self.n_comp = values.shape[1]
        self.segments = [Segment(times[0], times[-1], values[0], np.zeros(self.n_comp))]

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.times[0], self.times[-1]])

    def segment_index(self, t: float) -> int:
        return 0

    def __call__(self, t: float, index: int | None = None) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.values[:, j]) for j in range(self.n_comp)])
