"""Partitional and hierarchical clustering of chain feature rows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

METHODS = ("kmeans", "kmedoids", "kmedians", "hierarchical")


class NoKneeWarning(RuntimeWarning):
    """The distortion curve is flat or linear, so no elbow exists."""


@dataclass
class ClusterAssignment:
    """Partition of ``p`` rows into ``K`` clusters.

    ``labels[r]`` is the cluster of row ``r``; ``centers`` are means, medoid
    rows or coordinate-wise medians depending on ``method``.
    """

    K: int
    labels: np.ndarray
    centers: np.ndarray
    distortion: float
    method: str
    reseeded: int = 0
    medoids: np.ndarray | None = None

    @property
    def indicators(self) -> np.ndarray:
        """Binary ``z`` matrix, ``(p, K)``."""
        z = np.zeros((len(self.labels), self.K), dtype=int)
        z[np.arange(len(self.labels)), self.labels] = 1
        return z

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == j) for j in range(self.K)]


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters by order of first appearance."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = {old: new for new, old in enumerate(order)}
    return np.array([remap[v] for v in labels], dtype=int)


def same_partition(a, b) -> bool:
    return np.array_equal(canonical_labels(a), canonical_labels(b))


def _canonical(a: ClusterAssignment) -> ClusterAssignment:
    """Renumber clusters by first appearance, reordering centres to match."""
    lab = canonical_labels(a.labels)
    order = [int(a.labels[np.flatnonzero(lab == j)[0]]) for j in range(lab.max() + 1)]
    a.labels, a.K = lab, len(order)
    a.centers = a.centers[order]
    if a.medoids is not None:
        a.medoids = a.medoids[order]
    return a


def _sqdist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def distortion(X, labels, centers=None, penalty: float = 0.0) -> float:
    """Sum of squared Euclidean distances from rows to their cluster centre.

    Without ``centers`` the cluster means are used. ``penalty`` adds
    ``penalty * K``.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    ks = np.unique(labels)
    total = 0.0
    for j in ks:
        rows = X[labels == j]
        c = rows.mean(axis=0) if centers is None else np.asarray(centers)[j]
        total += float(np.sum((rows - c) ** 2))
    return total + penalty * len(ks)


def _check_k(X, K):
    p = len(X)
    if not 1 <= K <= p:
        raise ValueError(f"K must lie in [1, {p}], got {K}")


def _plusplus(X, K, rng, dist=_sqdist):
    idx = [int(rng.integers(len(X)))]
    d = dist(X, X[idx]).ravel()
    for _ in range(1, K):
        tot = d.sum()
        nxt = int(rng.choice(len(X), p=d / tot)) if tot > 0 else int(rng.integers(len(X)))
        idx.append(nxt)
        d = np.minimum(d, dist(X, X[[nxt]]).ravel())
    return np.array(idx)


def _lloyd(X, C, update, assign_dist, max_iter):
    """Alternate assignment and update; returns labels, centers, reseed count."""
    K = len(C)
    labels = None
    reseeded = 0
    for _ in range(max_iter):
        d = assign_dist(X, C)
        new = np.argmin(d, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = C.copy()
        for j in range(K):
            rows = X[labels == j]
            if len(rows) == 0:
                # re-seed at the row farthest from its own centre
                own = d[np.arange(len(X)), labels]
                far = int(np.argmax(own))
                C[j] = X[far]
                labels[far] = j
                d[far] = assign_dist(X[[far]], C)
                reseeded += 1
            else:
                C[j] = update(rows)
    return labels, C, reseeded


def _l1dist(X, C):
    return np.abs(X[:, None, :] - C[None, :, :]).sum(-1)


def _partitional(X, K, seed, restarts, max_iter, method):
    X = np.asarray(X, dtype=float)
    _check_k(X, K)
    rng = np.random.default_rng(seed)
    if method == "kmeans":
        update, adist = (lambda r: r.mean(axis=0)), _sqdist
    else:
        update, adist = (lambda r: np.median(r, axis=0)), _l1dist
    best = None
    for _ in range(restarts):
        C0 = X[_plusplus(X, K, rng)].copy()
        labels, C, nre = _lloyd(X, C0, update, adist, max_iter)
        L = distortion(X, labels, C)
        if best is None or L < best.distortion - 1e-12 * max(abs(L), 1.0):
            best = ClusterAssignment(K, labels, C, L, method, nre)
    return _canonical(best)


def kmeans(X, K: int, seed=0, restarts: int = 10, max_iter: int = 300) -> ClusterAssignment:
    """Lloyd iterations from K-means++ seeds; best of ``restarts`` runs."""
    return _partitional(X, K, seed, restarts, max_iter, "kmeans")


def kmedians(X, K: int, seed=0, restarts: int = 10, max_iter: int = 300) -> ClusterAssignment:
    """K-medians: L1 assignment, coordinate-wise median update.

    The reported distortion is the squared Euclidean one, like the other
    methods, so curves are comparable.
    """
    return _partitional(X, K, seed, restarts, max_iter, "kmedians")


def _pam(D, medoids, max_iter):
    p = len(D)
    medoids = list(medoids)
    cost = D[:, medoids].min(axis=1).sum()
    for _ in range(max_iter):
        best = (0.0, None, None)
        others = [o for o in range(p) if o not in medoids]
        for mi in range(len(medoids)):
            for o in others:
                trial = medoids.copy()
                trial[mi] = o
                delta = D[:, trial].min(axis=1).sum() - cost
                if delta < best[0] - 1e-12 * max(cost, 1.0):
                    best = (delta, mi, o)
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
        cost += best[0]
    return np.array(medoids)


def kmedoids(X, K: int, seed=0, restarts: int = 10, max_iter: int = 100) -> ClusterAssignment:
    """PAM with squared Euclidean dissimilarity; medoids are always data rows.

    The first start is the greedy BUILD initialisation, the others are
    K-means++ draws.
    """
    X = np.asarray(X, dtype=float)
    _check_k(X, K)
    D = _sqdist(X, X)
    np.fill_diagonal(D, 0.0)
    rng = np.random.default_rng(seed)
    build = [int(np.argmin(D.sum(axis=1)))]
    while len(build) < K:
        cur = D[:, build].min(axis=1)
        gain = np.maximum(cur[:, None] - D, 0.0).sum(axis=0)
        gain[build] = -1.0
        build.append(int(np.argmax(gain)))
    best = None
    for r in range(max(restarts, 1)):
        start = build if r == 0 else _plusplus(X, K, rng)
        med = _pam(D, start, max_iter)
        labels = np.argmin(D[:, med], axis=1)
        L = distortion(X, labels, X[med])
        if best is None or L < best.distortion - 1e-12 * max(L, 1.0):
            best = ClusterAssignment(K, labels, X[med].copy(), L, "kmedoids", 0, med)
    return _canonical(best)


@dataclass
class DendrogramLinkage:
    """``(p-1)`` merges ``(a, b, distance, size)`` in scipy's linkage layout."""

    Z: np.ndarray
    labels: list[str]
    method: str = "average"
    metric: str = "euclidean"

    @property
    def merges(self):
        return [(int(a), int(b), float(d)) for a, b, d, _ in self.Z]

    def cut(self, K: int) -> np.ndarray:
        """Flat partition into (at most) ``K`` clusters, labels from 0."""
        if K == len(self.labels):
            return np.arange(K)
        return canonical_labels(fcluster(self.Z, K, criterion="maxclust"))


def hierarchical_cluster(X, labels=None) -> DendrogramLinkage:
    """Agglomerative clustering, average linkage on Euclidean distance."""
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        raise ValueError("hierarchical clustering needs at least two rows")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(X))]
    return DendrogramLinkage(linkage(X, method="average", metric="euclidean"), labels)


def hierarchical_assignment(X, K: int, tree: DendrogramLinkage | None = None) -> ClusterAssignment:
    X = np.asarray(X, dtype=float)
    _check_k(X, K)
    tree = tree or hierarchical_cluster(X)
    lab = tree.cut(K)
    k_eff = int(lab.max()) + 1
    C = np.array([X[lab == j].mean(axis=0) for j in range(k_eff)])
    return ClusterAssignment(k_eff, lab, C, distortion(X, lab, C), "hierarchical")


def cluster(X, K: int, method: str = "kmeans", seed=0, restarts: int = 10) -> ClusterAssignment:
    if method == "kmeans":
        return kmeans(X, K, seed, restarts)
    if method == "kmedoids":
        return kmedoids(X, K, seed, restarts)
    if method == "kmedians":
        return kmedians(X, K, seed, restarts)
    if method == "hierarchical":
        return hierarchical_assignment(X, K)
    raise ValueError(f"unknown clustering method {method!r}; expected one of {METHODS}")


def distortion_curve(X, ks=None, method: str = "kmeans", seed=0, restarts: int = 10):
    """``(ks, L)`` with ``L[i]`` the distortion of the best ``ks[i]``-partition."""
    X = np.asarray(X, dtype=float)
    ks = np.arange(1, len(X) + 1) if ks is None else np.asarray(ks, dtype=int)
    L = np.array([cluster(X, int(k), method, seed, restarts).distortion for k in ks])
    return ks, L


def knee_point(ks, L, tol: float = 1e-9) -> int:
    """Point of maximum perpendicular distance from the end-to-end chord.

    Both axes are rescaled to [0, 1] first, which makes the result
    independent of the scale of the features. Ties go to the smaller ``K``.
    """
    ks = np.asarray(ks, dtype=float)
    L = np.asarray(L, dtype=float)
    if len(ks) < 3:
        raise ValueError("the elbow search needs at least three K values")
    span = L.max() - L.min()
    if not span > 0:
        warnings.warn("distortion curve is flat; no knee, returning the smallest K", NoKneeWarning,
                      stacklevel=2)
        return int(ks[0])
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    y = (L - L.min()) / span
    dx, dy = x[-1] - x[0], y[-1] - y[0]
    dist = np.abs(dy * (x - x[0]) - dx * (y - y[0])) / np.hypot(dx, dy)
    if dist.max() <= tol:
        warnings.warn("distortion curve is linear; no knee, returning the smallest K", NoKneeWarning,
                      stacklevel=2)
        return int(ks[0])
    return int(ks[np.flatnonzero(dist >= dist.max() - tol)[0]])


def elbow_optimal_k(X, ks=None, method: str = "kmeans", seed=0, restarts: int = 10):
    """Return ``(K*, ks, L)`` from the elbow of the distortion curve."""
    ks, L = distortion_curve(X, ks, method, seed, restarts)
    return knee_point(ks, L), ks, L
