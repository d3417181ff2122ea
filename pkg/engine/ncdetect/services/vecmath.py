"""Distance and similarity kernels shared by every numeric stage."""
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ..core.exceptions import DimensionMismatchError, DomainError
from ..schemas.config import MetricKind, SimilarityMetric

# Squared distances below this saturate the inverse metric
D2_CLAMP = 1e-12

# Upper bound of the inverse metric, so large gamma cannot overflow
MAX_SIMILARITY = 1e300

# Background logit for signed metrics when the background rule does not fire
SIGNED_FLOOR = -np.finfo(np.float64).max


def as_vector(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def as_matrix(vectors, dim: int = None, name: str = "vectors") -> np.ndarray:
    """Stack vectors into an (n, D) float64 matrix, checking dimensions"""
    if isinstance(vectors, np.ndarray):
        matrix = vectors.astype(np.float64, copy=False)
        if matrix.ndim == 1:
            matrix = matrix.reshape(1, -1) if matrix.size else matrix.reshape(0, dim or 0)
    else:
        rows = [as_vector(v, name) for v in vectors]
        if not rows:
            return np.zeros((0, dim or 0), dtype=np.float64)
        expected = dim if dim is not None else rows[0].shape[0]
        for row in rows:
            if row.shape[0] != expected:
                raise DimensionMismatchError(expected, row.shape[0], name)
        matrix = np.vstack(rows)

    if matrix.ndim != 2:
        raise DomainError(f"{name} must form a matrix, got shape {matrix.shape}")
    if dim is not None and matrix.shape[0] and matrix.shape[1] != dim:
        raise DimensionMismatchError(dim, matrix.shape[1], name)
    return matrix


def l2_normalize(v) -> np.ndarray:
    v = as_vector(v)
    if not np.all(np.isfinite(v)):
        raise DomainError("cannot normalize a vector with non-finite entries")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DomainError("cannot normalize a zero vector")
    return v / norm


def l2_normalize_rows(matrix) -> np.ndarray:
    """Normalize every row; a zero or non-finite row raises naming its index"""
    matrix = as_matrix(matrix)
    if not np.all(np.isfinite(matrix)):
        row = int(np.argmax(~np.all(np.isfinite(matrix), axis=1)))
        raise DomainError(f"row {row} has non-finite entries", {"row": row})
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        row = int(np.argmax(norms == 0.0))
        raise DomainError(f"row {row} is a zero vector", {"row": row})
    return matrix / norms[:, None]


def squared_euclidean(a, b) -> float:
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(a.shape[0], b.shape[0])
    diff = a - b
    return float(np.dot(diff, diff))


def squared_euclidean_matrix(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, m) matrix of squared distances, computed exactly (no dot-product expansion)"""
    if points.shape[1] != centers.shape[1]:
        raise DimensionMismatchError(centers.shape[1], points.shape[1])
    if points.shape[0] == 0 or centers.shape[0] == 0:
        return np.zeros((points.shape[0], centers.shape[0]), dtype=np.float64)
    return cdist(points, centers, "sqeuclidean")


def similarity(f, p, metric: SimilarityMetric) -> float:
    """S(f, p); higher is more similar for every metric kind"""
    f = as_vector(f)
    p = as_vector(p)
    return float(similarity_matrix(f[None, :], p[None, :], metric)[0, 0])


def similarity_matrix(features, prototypes, metric: SimilarityMetric) -> np.ndarray:
    """
    Similarity of every feature row to every prototype row.

    Args:
        features: (n, D) matrix
        prototypes: (m, D) matrix
        metric: Similarity definition

    Returns:
        (n, m) matrix of finite similarities
    """
    features = as_matrix(features, name="feature")
    prototypes = as_matrix(prototypes, dim=features.shape[1], name="prototype")
    if features.shape[1] != prototypes.shape[1]:
        raise DimensionMismatchError(features.shape[1], prototypes.shape[1])
    if prototypes.shape[0] == 0:
        return np.zeros((features.shape[0], 0), dtype=np.float64)

    if metric.kind == MetricKind.INV_SQ_EUCLIDEAN:
        gamma = float(metric.gamma)
        floor = max(D2_CLAMP, MAX_SIMILARITY ** (-1.0 / gamma))
        d2 = np.maximum(squared_euclidean_matrix(features, prototypes), floor)
        return d2 ** (-gamma)

    if metric.kind == MetricKind.COSINE:
        return l2_normalize_rows(features) @ l2_normalize_rows(prototypes).T

    # (p . f) - 0.5 (p . p)
    half_norms = 0.5 * np.einsum("ij,ij->i", prototypes, prototypes)
    return features @ prototypes.T - half_norms[None, :]


def background_floor(metric: SimilarityMetric) -> float:
    """Background logit used when the background rule does not fire"""
    return 0.0 if not metric.signed else SIGNED_FLOOR


def stack_features(records: Sequence) -> np.ndarray:
    """Feature matrix of a record list, rows in record order"""
    if not records:
        return np.zeros((0, 0), dtype=np.float64)
    return as_matrix([r.feature for r in records], name="feature record")
