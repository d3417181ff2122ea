"""
Tests for seeded k-means.
"""
import itertools

import numpy as np
import pytest

from ncdetect.core.exceptions import DimensionMismatchError, DomainError
from ncdetect.schemas.config import KMeansConfig
from ncdetect.services.clustering import compute_inertia, kmeans, repair_empty_clusters
from ncdetect.services.vecmath import squared_euclidean_matrix


def test_q_equals_n_gives_zero_inertia(rng):
    points = rng.normal(size=(6, 3))
    result = kmeans(points, KMeansConfig(q=6, retries=2, seed=1))

    assert result.inertia == pytest.approx(0.0, abs=1e-20)
    assert sorted(result.cluster_sizes().tolist()) == [1] * 6


def test_single_cluster_is_the_mean(rng):
    points = rng.normal(size=(25, 4))
    result = kmeans(points, KMeansConfig(q=1, retries=1))

    np.testing.assert_allclose(result.centers[0], points.mean(axis=0))
    assert result.iterations_run <= 2


def test_more_clusters_than_points():
    with pytest.raises(DomainError):
        kmeans(np.ones((3, 2)), KMeansConfig(q=4))


def test_mixed_dimensions():
    with pytest.raises(DimensionMismatchError):
        kmeans([[1.0, 2.0], [1.0, 2.0, 3.0]], KMeansConfig(q=1))


def test_zero_clusters_rejected_by_config():
    with pytest.raises(ValueError):
        KMeansConfig(q=0)


def test_inertia_trace_is_non_increasing(rng):
    points = rng.normal(size=(200, 5))
    result = kmeans(points, KMeansConfig(q=8, retries=3, seed=5))

    trace = result.inertia_trace
    assert len(trace) == result.iterations_run
    for previous, current in zip(trace, trace[1:]):
        assert current <= previous * (1 + 1e-12)
    assert trace[-1] == result.inertia


def test_best_restart_is_chosen(rng):
    points = rng.normal(size=(120, 3))
    result = kmeans(points, KMeansConfig(q=5, retries=6, seed=11))

    assert len(result.restart_inertias) == 6
    assert result.inertia == min(result.restart_inertias)
    assert result.restart_chosen == result.restart_inertias.index(min(result.restart_inertias))


def test_inertia_matches_assignments(rng):
    points = rng.normal(size=(60, 4))
    result = kmeans(points, KMeansConfig(q=4, retries=2, seed=2))

    assert result.inertia == pytest.approx(compute_inertia(points, result.centers, result.assignments))
    # Every point sits with its nearest center at convergence
    d2 = squared_euclidean_matrix(points, result.centers)
    assert np.all(d2[np.arange(60), result.assignments] <= d2.min(axis=1) + 1e-12)


def test_deterministic_for_seed(rng):
    points = rng.normal(size=(80, 6))
    config = KMeansConfig(q=7, retries=4, seed=123)

    first = kmeans(points, config)
    second = kmeans(points, config)
    threaded = kmeans(points, config, threads=4)

    for other in (second, threaded):
        np.testing.assert_array_equal(first.centers, other.centers)
        np.testing.assert_array_equal(first.assignments, other.assignments)
        assert first.restart_chosen == other.restart_chosen


def _brute_force_partition(points, q):
    best = None
    for labels in itertools.product(range(q), repeat=len(points)):
        labels = np.array(labels)
        if len(set(labels.tolist())) != q:
            continue
        centers = np.array([points[labels == c].mean(axis=0) for c in range(q)])
        inertia = compute_inertia(points, centers, labels)
        if best is None or inertia < best:
            best = inertia
    return best


def test_separated_blobs_reach_optimal_partition(rng):
    """Well separated blobs give the brute-force optimum"""
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    points = np.vstack([c + 0.1 * rng.normal(size=(3, 2)) for c in centers])
    result = kmeans(points, KMeansConfig(q=3, retries=5, seed=0, init="kmeans++"))

    assert result.inertia == pytest.approx(_brute_force_partition(points, 3), rel=1e-9)
    groups = {tuple(result.assignments[i:i + 3].tolist()) for i in (0, 3, 6)}
    assert all(len(set(g)) == 1 for g in groups)
    assert len({g[0] for g in groups}) == 3


def test_duplicate_points_fill_every_cluster():
    """Empty-cluster repair keeps all q clusters populated"""
    points = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    result = kmeans(points, KMeansConfig(q=3, retries=3, seed=0))

    assert np.all(result.cluster_sizes() >= 1)


def test_repair_takes_farthest_member_of_largest_cluster():
    points = np.array([[0.0], [1.0], [5.0], [20.0]])
    centers = np.array([[2.0], [20.0], [100.0]])
    assignments = np.array([0, 0, 0, 1])
    d2 = squared_euclidean_matrix(points, centers)

    repaired = repair_empty_clusters(points, centers, assignments, d2)

    assert repaired == 1
    # Point 2 (|5 - 2| = 3) is the farthest member of cluster 0
    assert assignments.tolist() == [0, 0, 2, 1]
    assert centers[2, 0] == 5.0


def test_tolerance_stops_early(rng):
    points = rng.normal(size=(300, 4))
    exact = kmeans(points, KMeansConfig(q=10, retries=1, seed=3))
    loose = kmeans(points, KMeansConfig(q=10, retries=1, seed=3, tol=0.5))

    assert loose.iterations_run <= exact.iterations_run
    assert loose.iterations_run <= 2


def test_inertia_trace_never_increases_on_random_data(rng):
    for _ in range(100):
        n = int(rng.integers(20, 80))
        points = rng.normal(size=(n, int(rng.integers(2, 6)))) * rng.uniform(0.1, 10.0)
        config = KMeansConfig(q=int(rng.integers(2, 7)), retries=1, seed=int(rng.integers(1000)))
        trace = kmeans(points, config).inertia_trace
        for previous, current in zip(trace, trace[1:]):
            assert current <= previous * (1 + 1e-12) + 1e-12


def test_random_init_recovers_three_blobs(rng):
    """Thirty points in blobs ten noise widths apart split exactly by blob"""
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]])
    points = np.vstack([c + 0.5 * rng.normal(size=(10, 2)) for c in centers])
    result = kmeans(points, KMeansConfig(q=3, retries=30, seed=0))

    assert KMeansConfig().init == "random"
    labels = [set(result.assignments[i:i + 10].tolist()) for i in (0, 10, 20)]
    assert all(len(group) == 1 for group in labels)
    assert len(set.union(*labels)) == 3
