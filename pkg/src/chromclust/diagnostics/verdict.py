"""Clustered R-hat convergence verdict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterAssignment, DendrogramLinkage, cluster, distortion_curve, hierarchical_cluster, knee_point
from .features import FeatureMatrix, featurize_chains
from .rhat import RhatReport, chain_arrays, compute_rhat, ess_per_parameter

CONVERGED = "converged"
NOT_CONVERGED = "non-converged"
NON_ASSESSABLE = "non-assessable"


class DiagnosticError(ValueError):
    """A sub-step of the verdict failed; the message names the step."""


@dataclass
class ClusterResult:
    index: int
    chains: list[str]
    report: RhatReport | None = None
    ess: np.ndarray | None = None

    @property
    def assessable(self) -> bool:
        return self.report is not None

    @property
    def converged(self) -> bool | None:
        return None if self.report is None else self.report.passed


@dataclass
class DiagnosticVerdict:
    global_report: RhatReport
    K: int
    clusters: list[ClusterResult]
    threshold: float
    global_threshold: float
    names: list[str]
    labels: list[str]
    assignment: ClusterAssignment | None = None
    curve: tuple[np.ndarray, np.ndarray] | None = None
    linkage: DendrogramLinkage | None = None
    features: FeatureMatrix | None = None
    method: str = "kmeans"
    settings: dict = field(default_factory=dict)

    @property
    def clustered(self) -> bool:
        return self.assignment is not None

    @property
    def status(self) -> str:
        assessable = [c for c in self.clusters if c.assessable]
        if not assessable:
            return NON_ASSESSABLE
        return CONVERGED if all(c.converged for c in assessable) else NOT_CONVERGED

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def __bool__(self) -> bool:
        return self.converged


def clustered_rhat_verdict(source, threshold: float = 1.10, global_threshold: float | None = None,
                           s: int = 64, ks=None, method: str = "kmeans", restarts: int = 10,
                           seed: int = 0, k: int | None = None, penalty: float = 0.0) -> DiagnosticVerdict:
    """Global R-hat, then (if it fails) cluster chains and assess each cluster.

    Parameters
    ----------
    threshold
        Per-cluster R-hat threshold.
    global_threshold
        Threshold for the global short-circuit; defaults to ``threshold``.
    ks
        Candidate numbers of clusters for the elbow (default ``1..p``).
    k
        Force the number of clusters instead of using the elbow.
    penalty
        ``lambda`` of the penalised distortion ``L + lambda K``; when positive
        ``K`` minimises it instead of using the elbow.
    """
    chains, labels, names = chain_arrays(source)
    gthr = threshold if global_threshold is None else global_threshold
    settings = dict(threshold=threshold, global_threshold=gthr, s=s, method=method,
                    restarts=restarts, seed=seed, forced_k=k, penalty=penalty,
                    linkage="average/euclidean")
    try:
        glob = compute_rhat(chains, gthr)
    except (ValueError, ArithmeticError) as err:
        raise DiagnosticError(f"global R-hat: {err}") from err
    glob.chains, glob.names = labels, names
    if glob.passed and k is None:
        res = ClusterResult(0, labels, glob, _ess(chains))
        return DiagnosticVerdict(glob, 1, [res], threshold, gthr, names, labels, method=method,
                                 settings=settings)
    try:
        feats = featurize_chains(chains, s)
    except ValueError as err:
        raise DiagnosticError(f"featurize: {err}") from err
    feats.labels, feats.names = labels, names
    X = feats.X
    p = len(X)
    tree = hierarchical_cluster(X, labels) if p >= 2 else None
    ks_arr = np.arange(1, p + 1) if ks is None else np.asarray(ks, dtype=int)
    curve = distortion_curve(X, ks_arr, method, seed, restarts)
    if k is not None:
        K = int(k)
    elif penalty > 0:
        K = int(ks_arr[np.argmin(curve[1] + penalty * ks_arr)])
    elif len(ks_arr) >= 3:
        K = knee_point(*curve)
    else:
        # too few candidates for an elbow: every chain is its own cluster
        K = int(ks_arr[-1])
    assign = cluster(X, K, method, seed, restarts)
    results = []
    for j, rows in enumerate(assign.members()):
        sub = [chains[i] for i in rows]
        res = ClusterResult(j, [labels[i] for i in rows])
        if len(rows) >= 2:
            try:
                rep = compute_rhat(sub, threshold)
            except (ValueError, ArithmeticError) as err:
                raise DiagnosticError(f"cluster {j} ({', '.join(res.chains)}): {err}") from err
            rep.chains, rep.names = res.chains, names
            res.report, res.ess = rep, _ess(sub)
        results.append(res)
    return DiagnosticVerdict(glob, assign.K, results, threshold, gthr, names, labels, assign, curve, tree,
                             feats, method, settings)


def _ess(chains):
    try:
        return ess_per_parameter(chains)
    except (ValueError, ArithmeticError):
        return None
