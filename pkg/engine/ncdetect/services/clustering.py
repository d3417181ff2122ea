"""
k-means with seeded restarts and empty-cluster repair.

Each restart draws its own generator from (restart index, seed), so the
result is the same whether restarts run inline or on a thread pool.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from ..core.exceptions import DomainError
from ..core.parallel import ordered_map
from ..models.results import KMeansResult
from ..schemas.config import KMeansConfig
from .vecmath import as_matrix, squared_euclidean_matrix

logger = logging.getLogger(__name__)


@dataclass
class _RestartOutcome:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int
    trace: List[float]


def restart_generator(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([restart, seed % 2**64])


def init_random(points: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """q distinct input points chosen uniformly"""
    return points[rng.choice(points.shape[0], size=q, replace=False)].copy()


def init_kmeans_plus_plus(points: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = squared_euclidean_matrix(points, points[chosen])[:, 0]

    while len(chosen) < q:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # Remaining points all coincide with chosen centers
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, squared_euclidean_matrix(points, points[nxt:nxt + 1])[:, 0])

    return points[chosen].copy()


def repair_empty_clusters(
    points: np.ndarray,
    centers: np.ndarray,
    assignments: np.ndarray,
    d2: np.ndarray,
) -> int:
    """
    Re-seed every empty cluster in place.

    Empty clusters are handled in ascending order. Each takes the member of
    the currently largest cluster (lowest index on ties) that lies farthest
    from that cluster's center (lowest point index on ties); the point becomes
    the new center and moves to the repaired cluster.

    Returns:
        Number of clusters repaired
    """
    q = centers.shape[0]
    sizes = np.bincount(assignments, minlength=q)
    repaired = 0

    for empty in np.flatnonzero(sizes == 0):
        donor = int(np.argmax(sizes))
        members = np.flatnonzero(assignments == donor)
        farthest = int(members[np.argmax(d2[members, donor])])

        centers[empty] = points[farthest]
        assignments[farthest] = empty
        sizes[donor] -= 1
        sizes[empty] += 1
        repaired += 1

    return repaired


def update_centers(points: np.ndarray, assignments: np.ndarray, q: int) -> np.ndarray:
    sums = np.zeros((q, points.shape[1]), dtype=np.float64)
    np.add.at(sums, assignments, points)
    counts = np.bincount(assignments, minlength=q)
    return sums / counts[:, None]


def compute_inertia(points: np.ndarray, centers: np.ndarray, assignments: np.ndarray) -> float:
    diff = points - centers[assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def _run_restart(points: np.ndarray, config: KMeansConfig, restart: int) -> _RestartOutcome:
    rng = restart_generator(config.seed, restart)
    if config.init == "kmeans++":
        centers = init_kmeans_plus_plus(points, config.q, rng)
    else:
        centers = init_random(points, config.q, rng)

    assignments = None
    trace: List[float] = []

    for iteration in range(1, config.max_iter + 1):
        d2 = squared_euclidean_matrix(points, centers)
        new_assignments = np.argmin(d2, axis=1)
        repaired = repair_empty_clusters(points, centers, new_assignments, d2)
        if repaired:
            logger.debug(f"Restart {restart} iteration {iteration}: repaired {repaired} empty clusters")

        centers = update_centers(points, new_assignments, config.q)
        inertia = compute_inertia(points, centers, new_assignments)
        trace.append(inertia)

        # A repeated assignment is a fixed point; further iterations change nothing
        if assignments is not None and np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments

        if config.tol > 0 and len(trace) > 1:
            previous = trace[-2]
            if previous > 0 and (previous - inertia) / previous < config.tol:
                break
            if previous == 0:
                break

    logger.debug(f"Restart {restart}: inertia {trace[-1]:.6g} after {len(trace)} iterations")
    return _RestartOutcome(centers, assignments, trace[-1], len(trace), trace)


def kmeans(points, config: KMeansConfig, threads: int = 1) -> KMeansResult:
    """
    Lloyd's k-means keeping the lowest-inertia restart.

    Args:
        points: (n, D) matrix or list of equal-length vectors
        config: Cluster count, iteration and restart caps, seed, tolerance, init scheme
        threads: Worker threads for the restarts

    Returns:
        KMeansResult of the best restart (lowest restart index on inertia ties)

    Raises:
        DomainError: q < 1 or q larger than the number of points
        DimensionMismatchError: points of different dimension
    """
    points = as_matrix(points, name="point")
    n = points.shape[0]
    if config.q < 1:
        raise DomainError("k-means needs at least one cluster")
    if config.q > n:
        raise DomainError(f"cannot form {config.q} clusters from {n} points", {"q": config.q, "n": n})
    if not np.all(np.isfinite(points)):
        raise DomainError("k-means points must be finite")

    outcomes = ordered_map(lambda r: _run_restart(points, config, r), range(config.retries), threads)
    best = min(range(len(outcomes)), key=lambda r: (outcomes[r].inertia, r))
    chosen = outcomes[best]

    logger.info(
        f"k-means: q={config.q}, n={n}, restarts={config.retries}, "
        f"best restart {best} with inertia {chosen.inertia:.6g} after {chosen.iterations} iterations"
    )

    return KMeansResult(
        centers=chosen.centers,
        assignments=chosen.assignments,
        inertia=chosen.inertia,
        iterations_run=chosen.iterations,
        restart_chosen=best,
        inertia_trace=chosen.trace,
        restart_inertias=[o.inertia for o in outcomes],
    )
