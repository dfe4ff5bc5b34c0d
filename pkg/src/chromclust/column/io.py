"""Chromatogram CSV files with header ``time_s,component_0,...``."""

from __future__ import annotations

import numpy as np

from .solver import Chromatogram


def write_chromatogram(path, chrom: Chromatogram, fmt: str = "%.10g") -> None:
    header = ",".join(["time_s"] + [f"component_{i}" for i in range(chrom.n_comp)])
    data = np.column_stack([chrom.times, chrom.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=fmt)


def read_chromatogram(path) -> Chromatogram:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "time_s":
        raise ValueError(f"{path}: expected a 'time_s' first column, got {header[:1]}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Chromatogram(data[:, 0], data[:, 1:])
