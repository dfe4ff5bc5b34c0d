"""Unit-chain configuration files.

A model file is a YAML (or JSON) mapping::

    flow_rate: 8.33e-9
    components: {n_protein: 1}
    units:
      - {type: cstr, name: mixer, volume: 5.0e-8}
      - {type: dpfr, name: tubing, length: 0.5, axial_dispersion: 1.0e-11, tube_radius: 2.5e-4}
      - type: grm
        name: column
        length: 0.025
        diameter: 0.007
        ...
        binding: {k_eq: 0.4, nu: 4.5, sigma: 35, k_d: 1.0e-8,
                  ionic_capacity: {titration_concentration: 10, titration_volume: 1.925e-5,
                                   column_volume: 9.62e-7}}
    inlet: {step_gradient: {...}}       # or {segments: [...]}
    discretization: {n_axial: 100, n_radial: 10}
    times: {stop: 2046, num: 500}       # or an explicit list

Parameters are addressed with dotted paths such as ``column.col_porosity``
or ``column.binding.k_eq``; :meth:`ColumnConfig.with_values` returns a copy
with some of them replaced, which is how the sampler drives the model.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np
import yaml

from .inlet import InletProfile
from .params import (ComponentSet, CstrParams, Discretization, DpfrParams, GrmParams,
                     ParameterError, SmaParams)
from .simulate import simulate_system
from .sma import ionic_capacity
from .solver import Chromatogram
from .units import CstrUnit, DpfrUnit, GrmUnit

_GRM_KEYS = {"length", "diameter", "particle_radius", "col_porosity", "par_porosity",
             "axial_dispersion", "film_mass_transfer", "pore_diffusion", "surface_diffusion"}
_SMA_KEYS = {"k_eq", "nu", "sigma", "k_d", "ionic_capacity", "mode", "qs_scale"}


def load_mapping(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        return json.loads(text)
    return yaml.safe_load(text)


def _unit_names(units: list[dict]) -> list[str]:
    names = []
    for i, u in enumerate(units):
        name = u.get("name") or u["type"]
        if name in names:
            name = f"{name}{i}"
        names.append(name)
    return names


class ColumnConfig:
    """Validated, immutable-by-convention view of a model configuration."""

    def __init__(self, raw: dict, source: str | None = None):
        self.raw = copy.deepcopy(raw)
        self.source = source
        if "units" not in raw or not raw["units"]:
            raise ParameterError(self._where("units") + ": at least one unit is required")
        self.names = _unit_names(self.raw["units"])
        comp = self.raw.get("components", {})
        self.components = ComponentSet(**comp) if isinstance(comp, dict) else ComponentSet(int(comp))
        self.n_comp = self.components.n_comp

    @classmethod
    def load(cls, path) -> "ColumnConfig":
        return cls(load_mapping(path), source=str(path))

    def _where(self, field: str) -> str:
        return f"{self.source or '<config>'}: {field}"

    # parameter access
    def _locate(self, path: str):
        parts = path.split(".")
        if parts[0] not in self.names:
            raise KeyError(f"unknown unit {parts[0]!r} in parameter path {path!r}")
        node = self.raw["units"][self.names.index(parts[0])]
        for key in parts[1:-1]:
            node = node.setdefault(key, {})
        return node, parts[-1]

    def get(self, path: str):
        node, key = self._locate(path)
        if key not in node:
            raise KeyError(f"parameter path {path!r} is not set")
        return node[key]

    def with_values(self, values: dict) -> "ColumnConfig":
        """Copy with ``{path: value}`` substituted (paths may be lists of paths)."""
        new = ColumnConfig.__new__(ColumnConfig)
        new.__dict__.update(self.__dict__)
        new.raw = copy.deepcopy(self.raw)
        for path, value in values.items():
            for p in ([path] if isinstance(path, str) else path):
                node, key = new._locate(p)
                node[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return new

    # builders
    def discretization(self, **overrides) -> Discretization:
        block = dict(self.raw.get("discretization", {}))
        block.update(overrides)
        try:
            return Discretization(**block)
        except (TypeError, ParameterError) as exc:
            raise ParameterError(self._where("discretization") + f": {exc}") from None

    def inlet(self) -> InletProfile:
        try:
            return InletProfile.from_config(self.raw["inlet"], self.n_comp)
        except (KeyError, TypeError, ParameterError) as exc:
            raise ParameterError(self._where("inlet") + f": {exc}") from None

    def times(self) -> np.ndarray:
        spec = self.raw.get("times")
        if spec is None:
            return np.linspace(0.0, self.inlet().breakpoints[-1], 501)
        if isinstance(spec, dict):
            return np.linspace(float(spec.get("start", 0.0)), float(spec["stop"]), int(spec.get("num", 501)))
        return np.asarray(spec, dtype=float)

    def units(self, disc: Discretization | None = None) -> list:
        disc = disc or self.discretization()
        flow = self.raw.get("flow_rate")
        built = []
        for name, spec in zip(self.names, self.raw["units"]):
            try:
                built.append(self._build_unit(spec, flow, disc))
            except (TypeError, ValueError, KeyError) as exc:
                raise ParameterError(self._where(f"units[{name}]") + f": {exc}") from None
        return built

    def _build_unit(self, spec: dict, flow, disc: Discretization):
        kind = spec["type"]
        q = float(spec.get("flow_rate", flow))
        if kind == "cstr":
            return CstrUnit(CstrParams(float(spec["volume"]), q), self.n_comp)
        if kind == "dpfr":
            params = DpfrParams.from_flow(float(spec["length"]), float(spec["axial_dispersion"]), q,
                                          float(spec["tube_radius"]))
            return DpfrUnit(params, self.n_comp, disc.dpfr_cells, disc.scheme)
        if kind == "grm":
            unknown = set(spec) - _GRM_KEYS - {"type", "name", "binding", "flow_rate"}
            if unknown:
                raise ParameterError(f"unknown GRM fields {sorted(unknown)}")
            kw = {k: spec[k] for k in _GRM_KEYS if k in spec}
            for key in ("film_mass_transfer", "pore_diffusion", "surface_diffusion"):
                if key in kw:
                    kw[key] = np.broadcast_to(np.asarray(kw[key], float), (self.n_comp,)).copy()
            grm = GrmParams.from_flow(flow_rate=q, **kw)
            binding = None
            if spec.get("binding"):
                b = dict(spec["binding"])
                unknown = set(b) - _SMA_KEYS
                if unknown:
                    raise ParameterError(f"unknown binding fields {sorted(unknown)}")
                lam = b.pop("ionic_capacity")
                if isinstance(lam, dict):
                    lam = ionic_capacity(float(lam["titration_concentration"]), float(lam["titration_volume"]),
                                         float(lam["column_volume"]), grm.total_porosity)
                binding = SmaParams(ionic_capacity=float(lam), **b)
            return GrmUnit(grm, binding, disc)
        raise ParameterError(f"unknown unit type {kind!r}")

    def simulate(self, times=None, disc: Discretization | None = None) -> Chromatogram:
        disc = disc or self.discretization()
        times = self.times() if times is None else np.asarray(times, dtype=float)
        return simulate_system(self.units(disc), self.inlet(), times, disc)
