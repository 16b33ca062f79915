"""Kernel k-means in Gram-matrix form, plus a binary-split refinement step.

Distances to cluster centroids never materialize feature-space coordinates:

    ||phi(x_i) - mu_c||^2 = K_ii - 2/|c| sum_{j in c} K_ij
                                 + 1/|c|^2 sum_{j,l in c} K_jl

Initialization spreads the first centers with a distance-weighted draw
(k-means++ style, falling back to a uniform draw when all remaining
distances are zero), assignment ties go to the lowest cluster id, and an
empty cluster is repaired by moving the sample farthest from its own
centroid out of a multi-member cluster, at most three times per run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeds import derive_seed
from .kernels import KernelConfig, gram_matrix

_MAX_REPAIRS = 3
_MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster labels over one sample set, with the distortion they achieve.

    ``objective`` is the total within-cluster scatter in feature space;
    ``objective_trace`` records it after every completed Lloyd iteration and
    ``repair_iterations`` flags the trace steps on which an empty-cluster
    repair fired (monotonicity is only guaranteed between repairs).
    """

    labels: np.ndarray
    k: int
    objective: float
    objective_trace: tuple[float, ...]
    repair_iterations: tuple[int, ...] = ()

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.k < 1:
            raise ValueError("need at least one cluster")
        counts = np.bincount(labels, minlength=self.k)
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= self.k:
            raise ValueError("cluster label out of range")
        if np.any(counts == 0):
            raise ValueError("empty cluster in assignment")

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def _centroid_distances(gram: np.ndarray, diag: np.ndarray, labels: np.ndarray, k: int):
    """(n, k) squared feature-space distances to each cluster centroid.

    Also returns the per-cluster sizes and the centroid self-terms, which the
    distortion computation reuses.
    """
    n = len(diag)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    sizes = onehot.sum(axis=0)
    # Columns of empty clusters are never read (no sample owns them); guard
    # their size so the vectorized arithmetic stays finite during repairs.
    safe = np.maximum(sizes, 1.0)
    cross = gram @ onehot                       # sum of K_ij over cluster members
    within = np.einsum("ic,ic->c", onehot, cross)  # sum of K_jl within cluster
    self_term = within / (safe * safe)
    dist2 = diag[:, None] - 2.0 * cross / safe[None, :] + self_term[None, :]
    np.maximum(dist2, 0.0, out=dist2)
    return dist2, sizes, self_term


def _distortion(gram: np.ndarray, diag: np.ndarray, labels: np.ndarray, k: int) -> float:
    dist2, _, _ = _centroid_distances(gram, diag, labels, k)
    return float(dist2[np.arange(len(diag)), labels].sum())


def _plusplus_init(gram, diag, k, rng) -> np.ndarray:
    """Pick k distinct seed samples, weighting by squared distance."""
    n = len(diag)
    chosen = [int(rng.integers(n))]
    d2 = diag + diag[chosen[0]] - 2.0 * gram[:, chosen[0]]
    np.maximum(d2, 0.0, out=d2)
    for _ in range(k - 1):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(n), np.array(chosen))
            pick = int(rng.choice(remaining))
        chosen.append(pick)
        trial = diag + diag[pick] - 2.0 * gram[:, pick]
        np.minimum(d2, np.maximum(trial, 0.0), out=d2)
    return np.array(chosen)


def _repair_empty(labels, gram, diag, k):
    """Fill empty clusters by donating the worst-fitting removable sample."""
    repairs = 0
    while True:
        sizes = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(sizes == 0)
        if len(empty) == 0:
            return labels, repairs
        if repairs >= _MAX_REPAIRS:
            raise RuntimeError(f"empty cluster persisted after {_MAX_REPAIRS} repairs")
        dist2, _, _ = _centroid_distances(gram, diag, labels, k)
        own = dist2[np.arange(len(labels)), labels]
        movable = sizes[labels] >= 2
        if not np.any(movable):
            raise RuntimeError("no donor sample available for empty-cluster repair")
        own = np.where(movable, own, -np.inf)
        donor = int(np.argmax(own))
        labels = labels.copy()
        labels[donor] = int(empty[0])
        repairs += 1


def kernel_kmeans(
    features,
    kernel: KernelConfig,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    init_labels=None,
) -> ClusterAssignment:
    """Lloyd iterations on kernel distances until assignments stop changing.

    ``init_labels`` overrides the seeded initialization with an explicit
    starting assignment (used to compare against other Lloyd variants from
    identical starting points).
    """
    x = np.ascontiguousarray(features, dtype=float)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, n={n}]")
    gram = gram_matrix(kernel, x, x)
    diag = np.diag(gram).copy()

    if init_labels is not None:
        labels = np.ascontiguousarray(init_labels, dtype=np.int64).copy()
        if len(labels) != n or labels.min() < 0 or labels.max() >= k:
            raise ValueError("init_labels must assign every sample a cluster in [0, k)")
        labels, _ = _repair_empty(labels, gram, diag, k)
    else:
        rng = np.random.default_rng(seed)
        centers = _plusplus_init(gram, diag, k, rng)
        seed_dist = diag[:, None] - 2.0 * gram[:, centers] + diag[centers][None, :]
        labels = np.argmin(seed_dist, axis=1)
        labels, _ = _repair_empty(labels, gram, diag, k)

    objective = _distortion(gram, diag, labels, k)
    trace = [objective]
    repair_steps = []
    for step in range(1, max_iter + 1):
        dist2, _, _ = _centroid_distances(gram, diag, labels, k)
        new_labels = np.argmin(dist2, axis=1)
        new_labels, repairs = _repair_empty(new_labels, gram, diag, k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        new_objective = _distortion(gram, diag, labels, k)
        if repairs:
            repair_steps.append(step)
        elif new_objective > objective + _MONOTONE_SLACK * max(1.0, abs(objective)):
            raise RuntimeError(
                "kernel k-means objective increased without a repair: "
                f"{objective!r} -> {new_objective!r}"
            )
        objective = new_objective
        trace.append(objective)
    return ClusterAssignment(
        labels=labels,
        k=k,
        objective=objective,
        objective_trace=tuple(trace),
        repair_iterations=tuple(repair_steps),
    )


def single_cluster(features, kernel: KernelConfig) -> ClusterAssignment:
    """Everything in one cluster; the objective is the total scatter."""
    x = np.ascontiguousarray(features, dtype=float)
    if len(x) == 0:
        raise ValueError("cannot cluster an empty sample set")
    gram = gram_matrix(kernel, x, x)
    diag = np.diag(gram).copy()
    labels = np.zeros(len(x), dtype=np.int64)
    objective = _distortion(gram, diag, labels, 1)
    return ClusterAssignment(labels=labels, k=1, objective=objective, objective_trace=(objective,))


def binary_split_largest(
    partition: ClusterAssignment,
    features,
    kernel: KernelConfig,
    seed: int = 0,
) -> ClusterAssignment:
    """Split the largest cluster (ties to the lowest id) into two by 2-means.

    The split half keeps the old cluster id; the other half becomes cluster
    ``k`` (so existing ids stay stable). Fails when every cluster is a
    singleton.
    """
    x = np.ascontiguousarray(features, dtype=float)
    if len(x) != len(partition.labels):
        raise ValueError("features do not match the partition")
    sizes = partition.sizes()
    target = int(np.argmax(sizes))
    if sizes[target] < 2:
        raise ValueError("all clusters are singletons; nothing to split")
    members = np.flatnonzero(partition.labels == target)
    sub = kernel_kmeans(x[members], kernel, k=2, seed=derive_seed(seed, partition.k))
    labels = partition.labels.copy()
    labels[members[sub.labels == 1]] = partition.k
    gram = gram_matrix(kernel, x, x)
    diag = np.diag(gram).copy()
    objective = _distortion(gram, diag, labels, partition.k + 1)
    return ClusterAssignment(
        labels=labels,
        k=partition.k + 1,
        objective=objective,
        objective_trace=(objective,),
    )
