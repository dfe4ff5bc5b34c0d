"""Mechanistic chromatography model: mixers, tubing and a general rate model column."""

from .config import ColumnConfig
from .inlet import InletProfile, Segment, TabulatedInlet
from .io import read_chromatogram, write_chromatogram
from .params import (ComponentSet, CstrParams, Discretization, DpfrParams, GrmParams,
                     ParameterError, SmaParams)
from .simulate import (UndershootWarning, check_result, simulate_cstr, simulate_dpfr, simulate_grm,
                       simulate_system)
from .sma import SmaDomainError, ionic_capacity, sma_equilibrium, sma_rate
from .solver import Chromatogram, SimulationError, SimulationResult, UnitSystem, integrate
from .units import CstrUnit, DpfrUnit, GrmUnit, StabilityWarning

__all__ = [
    "ColumnConfig", "InletProfile", "Segment", "TabulatedInlet", "read_chromatogram",
    "write_chromatogram", "ComponentSet", "CstrParams", "Discretization", "DpfrParams", "GrmParams",
    "ParameterError", "SmaParams", "UndershootWarning", "check_result", "simulate_cstr",
    "simulate_dpfr", "simulate_grm", "simulate_system", "SmaDomainError", "ionic_capacity",
    "sma_equilibrium", "sma_rate", "Chromatogram", "SimulationError", "SimulationResult",
    "UnitSystem", "integrate", "CstrUnit", "DpfrUnit", "GrmUnit", "StabilityWarning",
]
