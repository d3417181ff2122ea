"""
Cluster-to-class assignment.

Hungarian matching maximizes agreement between GT labels and nearest
clusters; the embedding alternative labels each cluster with the majority
text label among its closest proposals.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core.exceptions import DimensionMismatchError, DomainError
from ..core.parallel import ordered_map
from ..models.records import FeatureRecord
from ..models.results import ConfusionCounts
from ..schemas.config import SimilarityMetric
from ..schemas.detection import Detection, DetectionLabel, LabelKind
from ..schemas.mapping import LabelMapping, MappingMethod
from ..schemas.prototypes import PrototypeSet
from .vecmath import as_matrix, l2_normalize_rows, similarity_matrix, squared_euclidean_matrix, stack_features

logger = logging.getLogger(__name__)


def nearest_clusters(features: np.ndarray, protos: PrototypeSet, metric: SimilarityMetric) -> np.ndarray:
    """Most similar cluster per normalized feature row (lowest index on ties)"""
    return np.argmax(similarity_matrix(features, protos.novel_matrix(), metric), axis=1)


def build_confusion(
    gt_records: Sequence[FeatureRecord],
    protos: PrototypeSet,
    metric: SimilarityMetric,
) -> ConfusionCounts:
    """
    Count GT labels against their most similar cluster.

    Raises:
        DomainError: empty input, records without gt_class, or no clusters
    """
    if not gt_records:
        raise DomainError("cannot build a confusion matrix from zero GT features")
    if protos.q == 0:
        raise DomainError("the prototype set has no clusters to assign")
    if any(r.gt_class is None for r in gt_records):
        raise DomainError("every record used for assignment needs gt_class")

    features = l2_normalize_rows(stack_features(gt_records))
    clusters = nearest_clusters(features, protos, metric)

    label_ids = sorted({r.gt_class for r in gt_records})
    rows = {label: i for i, label in enumerate(label_ids)}
    matrix = np.zeros((len(label_ids), protos.q), dtype=np.int64)
    np.add.at(matrix, ([rows[r.gt_class] for r in gt_records], clusters), 1)

    logger.info(f"Confusion counts over {len(gt_records)} GT features, {len(label_ids)} labels x {protos.q} clusters")
    return ConfusionCounts(matrix=matrix, label_ids=label_ids, cluster_count=protos.q)


def _optimum(weights: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> int:
    if len(rows) == 0 or len(cols) == 0:
        return 0
    sub = weights[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub, maximize=True)
    return int(sub[r, c].sum())


def _lexicographic_matching(weights: np.ndarray, best: int) -> List[Tuple[int, int]]:
    """
    Among all maximum-weight matchings, the one giving each row (in order)
    the lowest possible column. Rows matched only at zero weight stay free.
    """
    n_rows, n_cols = weights.shape
    used: set = set()
    fixed = 0
    pairs: List[Tuple[int, int]] = []

    for i in range(n_rows):
        later_rows = list(range(i + 1, n_rows))
        for j in np.flatnonzero(weights[i] > 0):
            j = int(j)
            if j in used:
                continue
            free_cols = [c for c in range(n_cols) if c not in used and c != j]
            if fixed + int(weights[i, j]) + _optimum(weights, later_rows, free_cols) == best:
                pairs.append((i, j))
                used.add(j)
                fixed += int(weights[i, j])
                break

    return pairs


def hungarian_assign(counts: ConfusionCounts, tie_break_limit: int = 4096) -> LabelMapping:
    """
    Maximum-weight one-to-one matching of labels to clusters.

    Rectangular matrices are solved directly (equivalent to zero padding).
    Pairs of zero weight are left out of the mapping. When the matrix has at
    most tie_break_limit cells, ties between optimal matchings resolve to the
    lexicographically lowest one.
    """
    weights = np.asarray(counts.matrix, dtype=np.int64)
    if weights.size == 0 or weights.max() <= 0:
        logger.warning("Confusion matrix is empty; no cluster gets a label")
        return LabelMapping(entries={}, method=MappingMethod.HUNGARIAN)

    rows, cols = linear_sum_assignment(weights, maximize=True)
    best = int(weights[rows, cols].sum())

    if weights.size <= tie_break_limit:
        pairs = _lexicographic_matching(weights, best)
    else:
        pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]

    entries = {c: counts.label_ids[r] for r, c in pairs if weights[r, c] > 0}
    matched = sum(int(weights[r, c]) for r, c in pairs)
    logger.info(f"Hungarian matching: {len(entries)} clusters labeled, matched weight {matched} of {counts.total}")

    unmapped = counts.cluster_count - len(entries)
    if unmapped:
        logger.warning(f"{unmapped} of {counts.cluster_count} clusters remain unmapped")
    return LabelMapping(entries=dict(sorted(entries.items())), method=MappingMethod.HUNGARIAN)


def nearest_text_label(box_embeddings, text_embeddings: Sequence[Tuple[int, np.ndarray]]) -> np.ndarray:
    """
    Class id of the cosine-nearest text embedding for every box embedding.

    Ties go to the lowest class id.

    Raises:
        DomainError: zero vectors or no text embeddings
        DimensionMismatchError: box and text embeddings of different dimension
    """
    if not text_embeddings:
        raise DomainError("no text embeddings supplied")
    texts = sorted(text_embeddings, key=lambda t: t[0])
    class_ids = np.asarray([int(c) for c, _ in texts], dtype=np.int64)
    text_matrix = as_matrix([v for _, v in texts], name="text embedding")
    boxes = as_matrix(box_embeddings, name="box embedding")
    if boxes.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if boxes.shape[1] != text_matrix.shape[1]:
        raise DimensionMismatchError(text_matrix.shape[1], boxes.shape[1], "box embedding")

    cosine = l2_normalize_rows(boxes) @ l2_normalize_rows(text_matrix).T
    return class_ids[np.argmax(cosine, axis=1)]


def _cluster_mode(members: np.ndarray, distances: np.ndarray, labels: np.ndarray, kappa: int) -> Optional[int]:
    if members.size == 0:
        return None
    order = np.lexsort((members, distances))
    top = labels[members[order][:kappa]]
    values, freq = np.unique(top, return_counts=True)
    return int(values[np.argmax(freq)])


def embedding_assign(
    protos: PrototypeSet,
    boxes: Sequence[Tuple[np.ndarray, int]],
    kappa: int,
    threads: int = 1,
) -> LabelMapping:
    """
    Label every cluster with the mode of the text labels of its kappa
    closest member proposals.

    Each box joins its nearest cluster (squared Euclidean distance of the
    normalized feature). Members are ordered by (distance, box index); mode
    ties go to the lowest class id. Clusters without members stay unmapped.
    """
    if kappa < 1:
        raise DomainError("kappa must be positive")
    if not boxes or protos.q == 0:
        return LabelMapping(entries={}, method=MappingMethod.EMBEDDING, kappa=kappa)

    features = l2_normalize_rows(as_matrix([f for f, _ in boxes], dim=protos.dim, name="box feature"))
    labels = np.asarray([int(label) for _, label in boxes], dtype=np.int64)
    d2 = squared_euclidean_matrix(features, protos.novel_matrix())
    nearest = np.argmin(d2, axis=1)

    def label_cluster(j: int) -> Optional[int]:
        members = np.flatnonzero(nearest == j)
        return _cluster_mode(members, d2[members, j], labels, kappa)

    modes = ordered_map(label_cluster, range(protos.q), threads)
    entries = {j: label for j, label in enumerate(modes) if label is not None}

    logger.info(f"Embedding assignment (kappa={kappa}): {len(entries)} of {protos.q} clusters labeled")
    return LabelMapping(entries=entries, method=MappingMethod.EMBEDDING, kappa=kappa)


def map_label(label: DetectionLabel, mapping: LabelMapping) -> DetectionLabel:
    if label.kind == LabelKind.CLUSTER:
        class_id = mapping.lookup(label.value)
        if class_id is None:
            return DetectionLabel.unmapped_novel(label.value)
        return DetectionLabel.mapped(class_id)
    if label.kind == LabelKind.BASE:
        return DetectionLabel.mapped(label.value)
    return label


def apply_mapping(detections: Sequence[Detection], mapping: LabelMapping) -> List[Detection]:
    """Relabel clusters through the mapping and base classes as themselves"""
    cache: Dict[DetectionLabel, DetectionLabel] = {}
    result = []
    for det in detections:
        if det.label not in cache:
            cache[det.label] = map_label(det.label, mapping)
        new_label = cache[det.label]
        result.append(det if new_label == det.label else det.relabel(new_label))
    return result
