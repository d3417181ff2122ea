"""
Prototype classification of proposal features.

Logit layout is [background, K base classes, Q clusters]. When the
background classifier is on and the frozen base head called a box
background, the background logit is the maximum prototype logit; in every
other case it is the metric's floor.
"""
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from ..core.exceptions import DomainError
from ..models.records import FeatureRecord, Source
from ..models.results import LogitVector
from ..schemas.config import InferenceConfig
from ..schemas.detection import DetectionLabel
from ..schemas.prototypes import PrototypeSet
from .vecmath import SIGNED_FLOOR, background_floor, l2_normalize_rows, similarity_matrix, stack_features

logger = logging.getLogger(__name__)

Candidate = Tuple[FeatureRecord, DetectionLabel, float]


def logit_matrix(records: Sequence[FeatureRecord], protos: PrototypeSet, config: InferenceConfig) -> np.ndarray:
    """
    Logits of many records at once.

    Returns:
        (n, 1 + K + Q) matrix, columns [background, base..., clusters...]
    """
    if protos.k + protos.q == 0:
        raise DomainError("cannot classify against an empty prototype set")
    if not records:
        return np.zeros((0, 1 + protos.k + protos.q), dtype=np.float64)

    if config.background_classifier:
        missing = [i for i, r in enumerate(records) if r.base_pred is None]
        if missing:
            raise DomainError(
                f"record {missing[0]} (image {records[missing[0]].image_id}) has no base prediction "
                f"but the background classifier is enabled",
                {"record": missing[0]},
            )

    features = l2_normalize_rows(stack_features(records))
    scores = similarity_matrix(features, protos.matrix(), config.metric)

    background = np.full(len(records), background_floor(config.metric))
    if config.background_classifier:
        fires = np.array([r.base_pred.is_background for r in records])
        background[fires] = scores[fires].max(axis=1)

    return np.column_stack([background, scores])


def compute_logits(record: FeatureRecord, protos: PrototypeSet, config: InferenceConfig) -> LogitVector:
    return LogitVector.from_array(logit_matrix([record], protos, config)[0], protos.k)


def normalize_prob_matrix(logits: np.ndarray, mode: str, shift: bool = False) -> np.ndarray:
    """
    Row-wise probabilities from logits; argmax of every row is preserved.

    L1 mode divides by the row sum. With shift, floor entries become 0 and
    the remaining entries are shifted by their minimum first; a row whose
    remaining entries are all equal becomes uniform over them.

    Raises:
        DomainError: negative entries or an all-zero row in unshifted L1 mode
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise DomainError("expected a matrix of logit rows")
    if mode == "softmax":
        return softmax(logits, axis=1)
    if mode != "l1":
        raise DomainError(f"unknown probability normalization '{mode}'")

    if shift:
        live = logits > SIGNED_FLOOR
        if not np.all(live.any(axis=1)):
            raise DomainError("a logit row has no entries above the floor")
        minimum = np.where(live, logits, np.inf).min(axis=1, keepdims=True)
        values = np.where(live, logits - minimum, 0.0)
        totals = values.sum(axis=1)
        flat = totals == 0.0
        if np.any(flat):
            values[flat] = live[flat].astype(np.float64)
            totals[flat] = live[flat].sum(axis=1)
        return values / totals[:, None]

    if np.any(logits < 0):
        raise DomainError("L1 normalization needs non-negative logits")
    totals = logits.sum(axis=1)
    if np.any(totals == 0.0):
        raise DomainError("cannot L1-normalize an all-zero logit vector")
    return logits / totals[:, None]


def normalize_probs(logits: Union[LogitVector, np.ndarray], mode: str, *, shift: bool = False) -> np.ndarray:
    values = logits.as_array() if isinstance(logits, LogitVector) else np.asarray(logits, dtype=np.float64)
    return normalize_prob_matrix(values[None, :], mode, shift)[0]


def index_label(index: int, protos: PrototypeSet) -> DetectionLabel:
    """Interpret a logit column as a label"""
    if index == 0:
        return DetectionLabel.background()
    if index <= protos.k:
        return DetectionLabel.base(protos.base[index - 1].class_id)
    return DetectionLabel.cluster(index - 1 - protos.k)


def _logits_and_probs(records, protos, config) -> Tuple[np.ndarray, np.ndarray]:
    logits = logit_matrix(records, protos, config)
    return logits, normalize_prob_matrix(logits, config.prob_norm, shift=config.metric.signed)


def classify_image(
    records: Sequence[FeatureRecord],
    protos: PrototypeSet,
    config: InferenceConfig,
    emission: Optional[str] = None,
) -> List[Candidate]:
    """
    Label every proposal of one image.

    In argmax emission each record yields exactly one candidate, the first
    maximal logit (background wins ties). In per_class emission each
    record yields one candidate per non-background label whose probability
    exceeds config.min_candidate_score.

    Args:
        records: RPN records of a single image
        protos: Prototype set
        config: Inference configuration
        emission: Overrides config.emission

    Returns:
        (record, label, score) triples, records in input order and labels in
        logit order within a record
    """
    if not records:
        return []
    image_ids = {r.image_id for r in records}
    if len(image_ids) > 1:
        raise DomainError(f"classify_image got records of {len(image_ids)} images")
    if any(r.source != Source.RPN for r in records):
        raise DomainError("classify_image expects RPN records")

    logits, probs = _logits_and_probs(records, protos, config)
    mode = emission or config.emission

    candidates: List[Candidate] = []
    if mode == "argmax":
        best = np.argmax(logits, axis=1)
        for record, index, row in zip(records, best, probs):
            candidates.append((record, index_label(int(index), protos), float(min(row[index], 1.0))))
        return candidates

    for record, row in zip(records, probs):
        for index in np.flatnonzero(row[1:] > config.min_candidate_score) + 1:
            candidates.append((record, index_label(int(index), protos), float(min(row[index], 1.0))))
    return candidates
