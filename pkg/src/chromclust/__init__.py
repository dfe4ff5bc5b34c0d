"""Parallel MCMC with clustered convergence diagnostics for chromatography models."""

__version__ = "0.1.0"
