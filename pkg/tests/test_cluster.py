import itertools
import math

import numpy as np
import pytest

import pathnas as pn
from pathnas.cluster import TAU_FLOOR, clustering_cost, k_medoids
from pathnas.errors import ParameterError


def two_clouds(rng, n_each=6, dim=24, flip=2):
    """Two well-separated binary clouds: near all-zeros and near all-ones."""
    lo = np.zeros((n_each, dim), dtype=np.int64)
    hi = np.ones((n_each, dim), dtype=np.int64)
    for row in lo:
        row[rng.choice(dim, size=flip, replace=False)] = 1
    for row in hi:
        row[rng.choice(dim, size=flip, replace=False)] = 0
    return np.concatenate([lo, hi])


def brute_force_best_cost(x, k=2):
    """Exhaustive optimum over all medoid subsets of size k."""
    n = len(x)
    best = None
    for medoids in itertools.combinations(range(n), k):
        cost = 0
        for i in range(n):
            cost += min(int(np.abs(x[i] - x[m]).sum()) for m in medoids)
        best = cost if best is None else min(best, cost)
    return best


class TestKMedoids:
    def test_separated_clouds_recover_ground_truth(self):
        rng = np.random.default_rng(0)
        x = two_clouds(rng)
        clustering = k_medoids(x, 2, rng_seed=1)
        first_half = set(clustering.assignment[:6])
        second_half = set(clustering.assignment[6:])
        assert len(first_half) == 1 and len(second_half) == 1
        assert first_half != second_half

    def test_k_equals_batch_size_zero_cost(self):
        rng = np.random.default_rng(2)
        x = rng.integers(0, 2, size=(5, 16))
        # make rows distinct so every point can be its own medoid
        x = np.unique(x, axis=0)
        clustering = k_medoids(x, len(x), rng_seed=0)
        assert sorted(clustering.medoid_indices) == list(range(len(x)))
        assert clustering_cost(x, clustering.medoid_indices, clustering.assignment) == 0

    def test_seeded_determinism(self):
        rng = np.random.default_rng(3)
        x = rng.integers(0, 2, size=(30, 20))
        a = k_medoids(x, 4, rng_seed=9)
        b = k_medoids(x, 4, rng_seed=9)
        assert np.array_equal(a.medoid_indices, b.medoid_indices)
        assert np.array_equal(a.assignment, b.assignment)
        assert np.array_equal(a.taus, b.taus)

    def test_parameter_errors(self):
        x = np.zeros((4, 8), dtype=np.int64)
        with pytest.raises(ParameterError):
            k_medoids(x, 1, 0)
        with pytest.raises(ParameterError):
            k_medoids(x, 5, 0)
        with pytest.raises(ParameterError):
            k_medoids(np.zeros((0, 8)), 2, 0)

    def test_medoids_assigned_to_own_cluster(self):
        rng = np.random.default_rng(5)
        x = rng.integers(0, 2, size=(40, 24))
        clustering = k_medoids(x, 5, rng_seed=5)
        for c, m in enumerate(clustering.medoid_indices):
            assert clustering.assignment[m] == c

    def test_cost_monotone_over_200_seeded_batches(self):
        # the per-iteration invariant is asserted inside k_medoids
        rng = np.random.default_rng(6)
        for trial in range(200):
            n = int(rng.integers(6, 40))
            x = rng.integers(0, 2, size=(n, 30))
            k_medoids(x, int(rng.integers(2, min(6, n) + 1)), rng_seed=trial)

    def test_matches_exhaustive_on_small_batches(self):
        rng = np.random.default_rng(7)
        hits = 0
        for trial in range(200):
            n = int(rng.integers(4, 9))
            x = rng.integers(0, 2, size=(n, 12))
            clustering = k_medoids(x, 2, rng_seed=trial)
            cost = clustering_cost(x, clustering.medoid_indices, clustering.assignment)
            if cost == brute_force_best_cost(x, 2):
                hits += 1
        assert hits >= 190  # >= 95% of 200 trials


class TestCrowdingDistance:
    def test_singleton_floors(self):
        medoid = np.array([0, 1, 0, 1])
        assert pn.crowding_distance([medoid], medoid) == TAU_FLOOR

    def test_two_point_fixture(self):
        medoid = np.zeros(8, dtype=np.int64)
        other = np.zeros(8, dtype=np.int64)
        other[:4] = 1  # distance 4 from the medoid
        tau = pn.crowding_distance([medoid, other], medoid, beta=10.0)
        expected = 4.0 / (2.0 * math.log(12.0))
        assert abs(tau - expected) < 1e-12
        assert abs(tau - 0.8049) < 1e-3

    def test_numerator_linearity(self):
        medoid = np.zeros(30, dtype=np.int64)
        member = np.zeros(30, dtype=np.int64)
        member[:3] = 1
        tau1 = pn.crowding_distance([medoid, member], medoid)
        member_scaled = np.zeros(30, dtype=np.int64)
        member_scaled[:9] = 1  # all pairwise distances scaled by 3
        tau3 = pn.crowding_distance([medoid, member_scaled], medoid)
        assert abs(tau3 - 3 * tau1) < 1e-12

    def test_empty_cluster_rejected(self):
        with pytest.raises(ParameterError):
            pn.crowding_distance([], np.zeros(4))
        with pytest.raises(ParameterError):
            pn.crowding_distance([np.zeros(4)], np.zeros(4), beta=0.0)

    def test_matches_direct_transcription(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            gs = int(rng.integers(1, 12))
            members = rng.integers(0, 2, size=(gs, 20))
            medoid = members[int(rng.integers(gs))]
            got = pn.crowding_distance(members, medoid)
            total = sum(float(np.abs(m - medoid).sum()) for m in members)
            expected = max(total / (gs * math.log(gs + 10.0)), TAU_FLOOR)
            assert abs(got - expected) <= 1e-12 * max(1.0, expected)

    def test_taus_in_clustering_are_floored(self):
        x = np.zeros((6, 10), dtype=np.int64)  # all-identical batch
        clustering = k_medoids(x, 2, rng_seed=0)
        assert (clustering.taus >= TAU_FLOOR).all()
