"""K-medoids grouping over hard encodings and per-cluster crowding distances.

Clustering always uses Manhattan distance, since hard encodings are binary
vectors. The crowding distance of a cluster is its density-normalized mean
spread around the medoid; it later acts as a per-prototype softmax
temperature, so it is floored at ``TAU_FLOOR`` to keep divisions sane for
singleton or perfectly tight clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .paths import pairwise_manhattan

#: smoothing constant in the crowding denominator
DEFAULT_BETA = 10.0

#: lower bound applied to every crowding distance
TAU_FLOOR = 1e-3

#: alternation iterations before k_medoids stops regardless of convergence
MAX_ITERATIONS = 100


@dataclass(frozen=True)
class Clustering:
    """Result of one K-medoids run.

    ``medoid_indices[k]`` is the sample index of cluster k's prototype,
    ``assignment[i]`` the cluster index of sample i, and ``taus[k]`` the
    floored crowding distance of cluster k.
    """

    k: int
    medoid_indices: np.ndarray
    assignment: np.ndarray
    taus: np.ndarray

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


def _dists_to(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Manhattan distances, shape (len(points), len(targets))."""
    return pairwise_manhattan(points, targets)


def _seed_medoids(x: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """k-means++-style seeding: squared min-distance weighting on Manhattan."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    min_d = _dists_to(x, x[chosen])[:, 0].astype(np.float64)
    while len(chosen) < k:
        weights = min_d**2
        total = weights.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen medoid
            remaining = np.setdiff1d(np.arange(n), np.array(chosen))
            chosen.append(int(remaining[0]))
        else:
            pick = int(rng.choice(n, p=weights / total))
            chosen.append(pick)
        d_new = np.abs(x - x[chosen[-1]]).sum(axis=1).astype(np.float64)
        min_d = np.minimum(min_d, d_new)
    return chosen


def clustering_cost(x: np.ndarray, medoids: np.ndarray, assignment: np.ndarray) -> int:
    """Total Manhattan distance of every sample to its assigned medoid."""
    return int(np.abs(x - x[medoids[assignment]]).sum())


#: seeded restarts per k_medoids call; the best-cost run wins
DEFAULT_RESTARTS = 3

#: the global swap polish is O(iters * k * n^2); beyond this size the
#: alternation alone is the scalable behavior (as at benchmark-scale batches)
SWAP_POLISH_MAX_POINTS = 256


def _swap_polish(x: np.ndarray, medoids: np.ndarray):
    """Greedy best-improvement medoid/non-medoid swaps until none improves.

    Returns the polished medoid array; ties break toward the lower swap
    position and lower candidate index, so the result is deterministic.
    """
    n, k = x.shape[0], len(medoids)
    d_all = _dists_to(x, x)
    medoids = medoids.copy()
    for _ in range(MAX_ITERATIONS):
        dmed = d_all[:, medoids]
        order = np.argsort(dmed, axis=1, kind="stable")
        rows = np.arange(n)
        nearest = order[:, 0]
        d1 = dmed[rows, nearest]
        d2 = dmed[rows, order[:, 1]]
        base = d1.sum()
        # distance each sample falls back to if medoid j were removed
        removed = np.where(nearest[:, None] == np.arange(k)[None, :], d2[:, None], d1[:, None])
        best = None
        for j in range(k):
            new_costs = np.minimum(d_all, removed[:, j : j + 1]).sum(axis=0)
            c = int(new_costs.argmin())
            delta = int(new_costs[c] - base)
            if delta < 0 and (best is None or delta < best[0]):
                best = (delta, j, c)
        if best is None:
            break
        medoids[best[1]] = best[2]
    return medoids


def _alternate(x: np.ndarray, k: int, rng: np.random.Generator):
    """One seeded run of the assign/update alternation; returns (medoids, assignment, cost)."""
    n = x.shape[0]
    medoids = np.array(_seed_medoids(x, k, rng), dtype=np.int64)
    assignment = np.zeros(n, dtype=np.int64)
    prev_cost = None
    for _ in range(MAX_ITERATIONS):
        d = _dists_to(x, x[medoids])
        assignment = d.argmin(axis=1)  # argmin takes the lowest cluster on ties
        assignment[medoids] = np.arange(k)  # each medoid anchors its own cluster
        new_medoids = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(assignment == c)
            within = _dists_to(x[members], x[members]).sum(axis=1)
            new_medoids[c] = members[int(within.argmin())]
        cost = clustering_cost(x, new_medoids, assignment)
        if prev_cost is not None and cost > prev_cost:  # pragma: no cover - guarded invariant
            raise AssertionError("k-medoids cost increased between iterations")
        if np.array_equal(new_medoids, medoids) and prev_cost == cost:
            break
        medoids = new_medoids
        prev_cost = cost
    return medoids, assignment, clustering_cost(x, medoids, assignment)


def k_medoids(
    encodings,
    k: int,
    rng_seed,
    beta: float = DEFAULT_BETA,
    restarts: int = DEFAULT_RESTARTS,
) -> Clustering:
    """Partition a batch of hard encodings into k medoid-centered clusters.

    Alternates nearest-medoid assignment with per-cluster medoid updates
    (the member minimizing within-cluster cost) until the medoid set is
    stable or ``MAX_ITERATIONS`` is hit; total cost is non-increasing at
    every step. Several seeded restarts guard against poor local optima
    and the lowest-cost run wins (ties to the earlier restart).
    Deterministic for a fixed seed; ties break toward lower indices.
    """
    x = np.asarray(encodings, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ParameterError("encodings must be a nonempty 2-D batch")
    n = x.shape[0]
    if not 2 <= k <= n:
        raise ParameterError(f"k must satisfy 2 <= k <= batch size ({n}), got {k}")

    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    best = None
    for _ in range(max(restarts, 1)):
        medoids, assignment, cost = _alternate(x, k, rng)
        if n <= SWAP_POLISH_MAX_POINTS:
            polished = _swap_polish(x, medoids)
            if not np.array_equal(polished, medoids):
                d = _dists_to(x, x[polished])
                assignment = d.argmin(axis=1)
                assignment[polished] = np.arange(k)
                medoids, cost = polished, clustering_cost(x, polished, assignment)
        if best is None or cost < best[2]:
            best = (medoids, assignment, cost)
    medoids, assignment, _ = best

    taus = np.array(
        [
            crowding_distance(
                [x[i] for i in np.flatnonzero(assignment == c)], x[medoids[c]], beta
            )
            for c in range(k)
        ]
    )
    return Clustering(k=k, medoid_indices=medoids, assignment=assignment, taus=taus)


def crowding_distance(cluster_members, medoid, beta: float = DEFAULT_BETA) -> float:
    """Density-normalized Manhattan spread of a cluster around its medoid.

    tau = sum_g ||E_g - E_medoid||_1 / (gs * ln(gs + beta)), floored at
    ``TAU_FLOOR``. The natural log is a convention choice; it only rescales
    all temperatures uniformly.
    """
    if beta <= 0:
        raise ParameterError("beta must be positive")
    members = np.asarray(cluster_members, dtype=np.int64)
    if members.ndim != 2 or members.shape[0] == 0:
        raise ParameterError("cluster must be nonempty")
    medoid = np.asarray(medoid, dtype=np.int64)
    gs = members.shape[0]
    total = float(np.abs(members - medoid[None, :]).sum())
    tau = total / (gs * math.log(gs + beta))
    return max(tau, TAU_FLOOR)
