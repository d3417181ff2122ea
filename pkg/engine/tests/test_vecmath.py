"""
Tests for the distance and similarity kernels.
"""
import numpy as np
import pytest

from ncdetect.core.exceptions import DimensionMismatchError, DomainError
from ncdetect.schemas.config import MetricKind, SimilarityMetric
from ncdetect.services import vecmath
from ncdetect.services.classifier import normalize_prob_matrix


def test_l2_normalize_example():
    np.testing.assert_allclose(vecmath.l2_normalize([3.0, 4.0]), [0.6, 0.8])


def test_l2_normalize_zero_vector():
    with pytest.raises(DomainError):
        vecmath.l2_normalize([0.0, 0.0, 0.0])


def test_l2_normalize_rows_names_zero_row():
    with pytest.raises(DomainError) as excinfo:
        vecmath.l2_normalize_rows(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]]))
    assert excinfo.value.details == {"row": 1}


def test_l2_normalize_rows_unit_norm(rng):
    rows = vecmath.l2_normalize_rows(rng.normal(size=(20, 7)))
    np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 1.0)


def test_squared_euclidean_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        vecmath.squared_euclidean([1.0, 2.0], [1.0, 2.0, 3.0])


def test_squared_euclidean_matrix_matches_loop(rng):
    """cdist result agrees with a per-pair oracle"""
    a = rng.normal(size=(6, 5))
    b = rng.normal(size=(4, 5))
    matrix = vecmath.squared_euclidean_matrix(a, b)
    for i in range(6):
        for j in range(4):
            assert matrix[i, j] == pytest.approx(vecmath.squared_euclidean(a[i], b[j]), rel=1e-12)


@pytest.mark.parametrize("gamma,expected", [(1, 0.25), (2, 0.0625), (3, 0.015625)])
def test_inverse_squared_distance(gamma, expected):
    """d^2 = 4 gives 4^-gamma"""
    metric = SimilarityMetric(kind=MetricKind.INV_SQ_EUCLIDEAN, gamma=gamma)
    assert vecmath.similarity([0.0, 0.0], [2.0, 0.0], metric) == pytest.approx(expected)


def test_inverse_squared_distance_is_clamped():
    """Identical vectors saturate at the clamp instead of dividing by zero"""
    metric = SimilarityMetric(gamma=2)
    value = vecmath.similarity([1.0, 1.0], [1.0, 1.0], metric)
    assert np.isfinite(value)
    assert value == pytest.approx(vecmath.D2_CLAMP ** -2)


@pytest.mark.parametrize("gamma", [26, 40, 200])
def test_large_gamma_stays_finite(gamma):
    metric = SimilarityMetric(gamma=gamma)
    assert np.isfinite(vecmath.similarity([1.0, 0.0], [1.0, 0.0], metric))

    features = np.array([[1.0, 0.0], [0.0, 1.0]])
    prototypes = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.5]])
    values = vecmath.similarity_matrix(features, prototypes, metric)
    assert np.all(np.isfinite(values))
    assert values.max() <= vecmath.MAX_SIMILARITY * (1 + 1e-9)

    probs = normalize_prob_matrix(values, "l1")
    assert np.all(np.isfinite(probs))
    np.testing.assert_allclose(probs[0], [0.5, 0.5, 0.0], atol=1e-12)
    assert int(np.argmax(probs[1])) == 2


def test_dot_product_similarity():
    """(p . f) - 0.5 |p|^2 with f = p = (1, 0)"""
    metric = SimilarityMetric(kind=MetricKind.DOT_PRODUCT)
    assert vecmath.similarity([1.0, 0.0], [1.0, 0.0], metric) == pytest.approx(0.5)


def test_cosine_similarity():
    metric = SimilarityMetric(kind=MetricKind.COSINE)
    assert vecmath.similarity([2.0, 0.0], [5.0, 0.0], metric) == pytest.approx(1.0)
    assert vecmath.similarity([1.0, 0.0], [0.0, 3.0], metric) == pytest.approx(0.0)


def test_cosine_zero_vector_raises():
    with pytest.raises(DomainError):
        vecmath.similarity([0.0, 0.0], [1.0, 0.0], SimilarityMetric(kind=MetricKind.COSINE))


@pytest.mark.parametrize("kind", list(MetricKind))
def test_similarity_matrix_matches_scalar(rng, kind):
    metric = SimilarityMetric(kind=kind, gamma=2)
    features = rng.normal(size=(5, 3))
    prototypes = rng.normal(size=(4, 3))
    matrix = vecmath.similarity_matrix(features, prototypes, metric)

    assert matrix.shape == (5, 4)
    for i in range(5):
        for j in range(4):
            assert matrix[i, j] == pytest.approx(vecmath.similarity(features[i], prototypes[j], metric), rel=1e-9)


def test_inverse_similarity_decreases_with_distance(rng):
    """Higher similarity always means a closer prototype"""
    metric = SimilarityMetric(gamma=2)
    f = rng.normal(size=4)
    prototypes = rng.normal(size=(10, 4))
    sims = vecmath.similarity_matrix(f[None, :], prototypes, metric)[0]
    d2 = vecmath.squared_euclidean_matrix(f[None, :], prototypes)[0]
    assert np.array_equal(np.argsort(-sims, kind="stable"), np.argsort(d2, kind="stable"))


def test_similarity_matrix_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        vecmath.similarity_matrix(np.ones((2, 3)), np.ones((2, 4)), SimilarityMetric())


def test_background_floor():
    assert vecmath.background_floor(SimilarityMetric()) == 0.0
    assert vecmath.background_floor(SimilarityMetric(kind=MetricKind.DOT_PRODUCT)) == vecmath.SIGNED_FLOOR
    assert vecmath.background_floor(SimilarityMetric(kind=MetricKind.COSINE)) < -1e300


def test_as_matrix_rejects_mixed_lengths():
    with pytest.raises(DimensionMismatchError):
        vecmath.as_matrix([[1.0, 2.0], [1.0]])
