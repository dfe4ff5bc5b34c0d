"""Convergence diagnostics for groups of parallel chains."""

from .cluster import (METHODS, ClusterAssignment, DendrogramLinkage, NoKneeWarning, canonical_labels, cluster,
                      distortion, distortion_curve, elbow_optimal_k, hierarchical_assignment,
                      hierarchical_cluster, kmeans, kmedians, kmedoids, knee_point, same_partition)
from .features import DegenerateParameterWarning, FeatureMatrix, featurize_chains, gaussian_kde, silverman_bandwidth
from .report import format_report, write_report
from .rhat import (InsufficientChainsError, RhatReport, UndefinedAutocorrelationError, ZeroWithinVarianceError,
                   autocorrelation, chain_arrays, compute_rhat, effective_sample_size, ess_per_parameter,
                   gelman_rubin, truncate)
from .verdict import (CONVERGED, NON_ASSESSABLE, NOT_CONVERGED, ClusterResult, DiagnosticError, DiagnosticVerdict,
                      clustered_rhat_verdict)

__all__ = [n for n in dir() if not n.startswith("_")]
