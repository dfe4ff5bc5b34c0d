"""Method-of-lines discretisations of the unit operations.

Every unit maps its local state vector and an inlet concentration vector to
the local time derivative and its outlet concentration.  Units are chained
in flow order by :class:`~chromclust.column.solver.UnitSystem`.

The right-hand sides themselves are compiled kernels in
:mod:`chromclust.column._kernels`; the classes here own the parameters,
state layout, Jacobian structure and mass bookkeeping.

Axial transport uses cell-centred finite volumes.  The inlet face carries
the Danckwerts flux ``u * c_in``; the outlet face carries the convective
flux of the last cell and no dispersion.  Interior convective face values
are reconstructed with the van Leer limiter (or first-order upwind).
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _kernels as K
from .params import CstrParams, Discretization, DpfrParams, GrmParams, ParameterError, SmaParams
from .sma import bound_salt, free_capacity


class StabilityWarning(RuntimeWarning):
    pass


def _band_pattern(n_blocks: int, block: int, lower: int, upper: int):
    rows, cols = [], []
    idx = np.arange(block)
    for z in range(n_blocks):
        for dz in range(-lower, upper + 1):
            w = z + dz
            if 0 <= w < n_blocks:
                r, c = np.meshgrid(z * block + idx, w * block + idx, indexing="ij")
                rows.append(r.ravel())
                cols.append(c.ravel())
    return np.concatenate(rows), np.concatenate(cols)


class Unit:
    """Base class; subclasses set ``n_comp`` and ``n_states``."""

    n_comp: int
    n_states: int
    label: str = "unit"

    kind: int

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.n_states)

    def pack(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer and float parameter vectors for the compiled kernel."""
        raise NotImplementedError

    def rhs(self, y: np.ndarray, c_in: np.ndarray):
        """Time derivative of the unit state and the outlet concentration."""
        ints, floats = self.pack()
        y = np.ascontiguousarray(y, dtype=float)
        dy = np.empty_like(y)
        c_out = np.empty(self.n_comp)
        kernel = {K.CSTR: K.cstr_rhs, K.DPFR: K.dpfr_rhs, K.GRM: K.grm_rhs}[self.kind]
        kernel(y, 0, ints, floats, np.asarray(c_in, dtype=float), dy, c_out)
        return dy, c_out

    def outlet(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y)[..., self.outlet_cols()]

    def pattern(self):
        """Structural Jacobian pattern as (rows, cols) index arrays."""
        raise NotImplementedError

    def inlet_rows(self) -> np.ndarray:
        raise NotImplementedError

    def outlet_cols(self) -> np.ndarray:
        raise NotImplementedError

    def holdup(self, y: np.ndarray) -> np.ndarray:
        """Moles per component held inside the unit."""
        raise NotImplementedError

    @property
    def flow_rate(self) -> float:
        raise NotImplementedError


class CstrUnit(Unit):
    label = "cstr"
    kind = K.CSTR

    def __init__(self, params: CstrParams, n_comp: int):
        self.params = params
        self.n_comp = n_comp
        self.n_states = n_comp

    def pack(self):
        return (np.array([self.n_comp], dtype=np.int64),
                np.array([self.params.flow_rate / self.params.volume]))

    def pattern(self):
        idx = np.arange(self.n_comp)
        return idx, idx

    def inlet_rows(self):
        return np.arange(self.n_comp)

    def outlet_cols(self):
        return np.arange(self.n_comp)

    def holdup(self, y):
        return self.params.volume * y

    @property
    def flow_rate(self):
        return self.params.flow_rate


class DpfrUnit(Unit):
    label = "dpfr"
    kind = K.DPFR

    def __init__(self, params: DpfrParams, n_comp: int, n_cells: int = 50, scheme: str = "vanleer"):
        self.params = params
        self.n_comp = n_comp
        self.n_cells = n_cells
        self.scheme = scheme
        self.n_states = n_cells * n_comp
        self.dz = params.length / n_cells
        peclet = params.velocity * self.dz / params.axial_dispersion
        if scheme == "upwind" and peclet > 2.0:
            warnings.warn(f"DPFR cell Peclet number {peclet:.3g} > 2: upwind numerical dispersion "
                          "dominates the physical dispersion", StabilityWarning, stacklevel=2)

    def pack(self):
        p = self.params
        return (np.array([self.n_cells, self.n_comp, self.scheme == "vanleer"], dtype=np.int64),
                np.array([p.velocity, p.axial_dispersion, self.dz]))

    def pattern(self):
        return _band_pattern(self.n_cells, self.n_comp, 2, 1)

    def inlet_rows(self):
        return np.arange(self.n_comp)

    def outlet_cols(self):
        return np.arange(self.n_states - self.n_comp, self.n_states)

    def holdup(self, y):
        y = np.asarray(y)
        return self.params.area * self.dz * y.reshape(y.shape[:-1] + (self.n_cells, self.n_comp)).sum(axis=-2)

    @property
    def flow_rate(self):
        return self.params.flow_rate


class GrmUnit(Unit):
    """General rate model column with optional SMA binding.

    Per axial cell the state block is ``[c (nc), cp (Nr*nc), q (Nr*nb)]``
    where ``nb`` is the number of bound proteins (salt loading follows from
    electroneutrality and is not a state).  Particles are split into ``Nr``
    equal-width spherical shells; the outer shell exchanges with the bulk
    through the film and the half-shell pore resistance in series,
    ``J = (c - cp_outer) / (1/k_f + (dr/2)/(eps_p D_p))``.
    """

    label = "grm"
    kind = K.GRM

    def __init__(self, params: GrmParams, binding: SmaParams | None, disc: Discretization):
        self.params = params
        self.binding = binding
        self.n_comp = params.n_comp
        if binding is not None and binding.n_protein + 1 != self.n_comp:
            raise ParameterError("SMA binding requires salt plus one component per protein")
        self.nz = disc.n_axial
        self.nr = disc.n_radial
        self.scheme = disc.scheme
        self.nb = 0 if binding is None else binding.n_protein
        nc, nr, nb = self.n_comp, self.nr, self.nb
        self.block = nc + nr * nc + nr * nb
        self.n_states = self.nz * self.block
        self.dz = params.length / self.nz

        rp = params.particle_radius
        edges = np.linspace(0.0, rp, nr + 1)
        self.dr = rp / nr
        self.shell_volume = (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
        self.inner_area = edges[1:-1] ** 2
        eps_p = params.par_porosity
        kf = np.asarray(params.film_mass_transfer, dtype=float)
        dp = np.asarray(params.pore_diffusion, dtype=float)
        half = 0.5 * self.dr
        with np.errstate(divide="ignore", invalid="ignore"):
            g = kf * eps_p * dp / (eps_p * dp + kf * half)
        self.film_conductance = np.where((kf > 0) & (dp > 0), g, 0.0)
        self.pore_diffusion = dp
        self.surface_diffusion = np.asarray(params.surface_diffusion, dtype=float)
        self.phase_bulk = (1.0 - params.col_porosity) / params.col_porosity * 3.0 / rp
        self.phase_pore = (1.0 - eps_p) / eps_p

    # state layout helpers
    def split(self, y: np.ndarray):
        nc, nr, nb = self.n_comp, self.nr, self.nb
        lead = y.shape[:-1]
        blk = y.reshape(lead + (self.nz, self.block))
        c = blk[..., :nc]
        cp = blk[..., nc:nc + nr * nc].reshape(lead + (self.nz, nr, nc))
        q = blk[..., nc + nr * nc:].reshape(lead + (self.nz, nr, nb))
        return c, cp, q

    def initial_state(self):
        return np.zeros(self.n_states)

    def pack(self):
        p = self.params
        b = self.binding
        ints = np.array([self.nz, self.nr, self.n_comp, self.nb, self.scheme == "vanleer",
                         bool(self.nb and np.any(self.surface_diffusion[1:] > 0))], dtype=np.int64)
        head = [p.interstitial_velocity, p.axial_dispersion, self.dz, self.phase_bulk,
                self.phase_pore, p.particle_radius, p.par_porosity,
                b.ionic_capacity if b else 0.0, b.rate_scale if b else 0.0, self.dr]
        parts = [head, self.film_conductance, self.pore_diffusion, self.surface_diffusion,
                 self.shell_volume, self.inner_area]
        if b is not None:
            parts += [b.k_a, b.k_d, b.nu, b.sigma]
        return ints, np.concatenate([np.asarray(x, dtype=float) for x in parts])

    def pattern(self):
        nc, nr, nb, blk = self.n_comp, self.nr, self.nb, self.block
        rows, cols = [], []

        def add(r, c):
            r, c = np.meshgrid(r, c, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())

        for z in range(self.nz):
            base = z * blk
            bulk = base + np.arange(nc)
            for w in range(max(0, z - 2), min(self.nz, z + 2)):
                add(bulk, w * blk + np.arange(nc))
            outer = base + nc + (nr - 1) * nc + np.arange(nc)
            add(bulk, outer)
            add(outer, bulk)
            for r in range(nr):
                shell = base + nc + r * nc + np.arange(nc)
                qs = base + nc + nr * nc + r * nb + np.arange(nb)
                local = [shell, qs]
                for rr in (r - 1, r + 1):
                    if 0 <= rr < nr:
                        local.append(base + nc + rr * nc + np.arange(nc))
                        local.append(base + nc + nr * nc + rr * nb + np.arange(nb))
                cols_r = np.concatenate(local)
                add(shell, cols_r)
                if nb:
                    add(qs, np.concatenate([shell, qs]))
        return np.concatenate(rows), np.concatenate(cols)

    def inlet_rows(self):
        return np.arange(self.n_comp)

    def outlet_cols(self):
        start = (self.nz - 1) * self.block
        return np.arange(start, start + self.n_comp)

    def holdup(self, y):
        p = self.params
        c, cp, q = self.split(y)
        particle = p.par_porosity * np.einsum("...zrc,r->...c", cp, self.shell_volume)
        if self.nb:
            solid = np.zeros_like(particle)
            solid[..., 1:] = np.einsum("...zrc,r->...c", q, self.shell_volume)
            solid[..., 0] = np.einsum("...zr,r->...", bound_salt(q, self.binding), self.shell_volume)
            particle = particle + (1.0 - p.par_porosity) * solid
        per_particle_volume = 3.0 / p.particle_radius ** 3
        return p.area * self.dz * (p.col_porosity * c.sum(axis=-2)
                                   + (1.0 - p.col_porosity) * per_particle_volume * particle)

    def free_capacity(self, y: np.ndarray) -> np.ndarray:
        if not self.nb:
            raise ParameterError("no binding model attached")
        _, _, q = self.split(y)
        return free_capacity(q, self.binding)

    @property
    def flow_rate(self):
        return self.params.flow_rate
