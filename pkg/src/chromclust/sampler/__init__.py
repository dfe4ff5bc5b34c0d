"""Parallel adaptive Metropolis-within-Gibbs sampling."""

from .core import (AdaptationWarning, ChainState, ProposalState, RunResult, SamplerConfig, advance,
                   default_initial_cov, dr_log_alpha, gibbs_sigma2, init_states, metropolis_log_alpha,
                   resume, run_parallel, sample_sigma2, spd_cholesky, write_run)
from .store import ChainStore, SchemaError

__all__ = [
    "AdaptationWarning", "ChainState", "ProposalState", "RunResult", "SamplerConfig", "advance",
    "default_initial_cov", "dr_log_alpha", "gibbs_sigma2", "init_states", "metropolis_log_alpha",
    "resume", "run_parallel", "sample_sigma2", "spd_cholesky", "write_run", "ChainStore", "SchemaError",
]
