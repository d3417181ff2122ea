import logging
from collections import defaultdict
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import DimensionMismatchError, DomainError
from ..models.records import FeatureRecord, Source
from ..models.results import KMeansResult
from ..schemas.config import KMeansConfig
from ..schemas.prototypes import BasePrototype, PrototypeSet
from .clustering import kmeans
from .vecmath import l2_normalize_rows, stack_features

logger = logging.getLogger(__name__)


def compute_base_prototypes(gt_records: Sequence[FeatureRecord]) -> List[Tuple[int, np.ndarray]]:
    """
    Class prototypes as the mean of L2-normalized GT features.

    The mean is stored as is (not re-normalized). Classes without records
    get no prototype.

    Returns:
        (class_id, prototype) pairs in ascending class_id order

    Raises:
        DomainError: a record is not a GT record or has a zero feature
    """
    by_class: Dict[int, List[int]] = defaultdict(list)
    for i, record in enumerate(gt_records):
        if record.source != Source.GT or record.gt_class is None:
            raise DomainError(f"record {i} (image {record.image_id}) is not a labeled GT record")
        by_class[record.gt_class].append(i)

    if not by_class:
        return []

    features = stack_features(gt_records)
    try:
        normalized = l2_normalize_rows(features)
    except DomainError as e:
        row = e.details.get("row")
        raise DomainError(
            f"GT record {row} (image {gt_records[row].image_id}, class {gt_records[row].gt_class}) has a zero feature",
            {"record": row},
        ) from e

    prototypes = []
    for class_id in sorted(by_class):
        prototypes.append((class_id, normalized[by_class[class_id]].mean(axis=0)))

    logger.info(f"Computed {len(prototypes)} class prototypes from {len(gt_records)} GT features")
    return prototypes


def normalized_rpn_features(rpn_records: Sequence[FeatureRecord]) -> np.ndarray:
    for i, record in enumerate(rpn_records):
        if record.source != Source.RPN:
            raise DomainError(f"record {i} (image {record.image_id}) is not an RPN record")
    try:
        return l2_normalize_rows(stack_features(rpn_records))
    except DomainError as e:
        row = e.details.get("row")
        raise DomainError(f"RPN record {row} (image {rpn_records[row].image_id}) has a zero feature",
                          {"record": row}) from e


def run_discovery(rpn_records: Sequence[FeatureRecord], config: KMeansConfig, threads: int = 1) -> KMeansResult:
    """k-means over the L2-normalized discovery proposals"""
    if len(rpn_records) < config.q:
        raise DomainError(f"{len(rpn_records)} discovery records cannot form {config.q} clusters")
    features = normalized_rpn_features(rpn_records)
    logger.info(f"Clustering {features.shape[0]} discovery features of dimension {features.shape[1]} into {config.q} clusters")
    return kmeans(features, config, threads=threads)


def discover_novel_prototypes(
    rpn_records: Sequence[FeatureRecord],
    config: KMeansConfig,
    threads: int = 1,
) -> List[np.ndarray]:
    result = run_discovery(rpn_records, config, threads)
    return [center.copy() for center in result.centers]


def assemble(
    base: Sequence[Tuple[int, np.ndarray]],
    novel: Sequence[np.ndarray],
    metadata: Optional[Dict[str, Any]] = None,
) -> PrototypeSet:
    """
    Combine labeled prototypes and cluster centers into one PrototypeSet.

    Raises:
        DimensionMismatchError: vectors of different dimension
        DomainError: no prototypes at all, or duplicate class ids
    """
    vectors = [np.asarray(v, dtype=np.float64) for _, v in base] + [np.asarray(v, dtype=np.float64) for v in novel]
    if not vectors:
        raise DomainError("a prototype set needs at least one prototype")

    dim = vectors[0].shape[0]
    for v in vectors:
        if v.ndim != 1 or v.shape[0] != dim:
            raise DimensionMismatchError(dim, v.shape[-1] if v.ndim else 0, "prototype")

    class_ids = [int(c) for c, _ in base]
    if len(set(class_ids)) != len(class_ids):
        raise DomainError("base prototype class ids must be unique")
    if not all(np.all(np.isfinite(v)) for v in vectors):
        raise DomainError("prototype entries must be finite")

    return PrototypeSet(
        dim=dim,
        base=[BasePrototype(class_id=int(c), vector=[float(x) for x in v]) for c, v in base],
        novel=[[float(x) for x in v] for v in novel],
        metadata=dict(metadata or {}),
    )
