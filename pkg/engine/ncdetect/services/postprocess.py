import logging
from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np

from ..core.exceptions import DomainError
from ..schemas.config import PostprocessConfig
from ..schemas.detection import Detection, DetectionLabel
from ..schemas.geometry import BoxGeometry

logger = logging.getLogger(__name__)


def iou(a: BoxGeometry, b: BoxGeometry) -> float:
    ax1, ay1, ax2, ay2 = a.as_xyxy()
    bx1, by1, bx2, by2 = b.as_xyxy()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


def boxes_to_xyxy(boxes: Sequence[BoxGeometry]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.asarray([b.as_xyxy() for b in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Pairwise IoU of two xyxy box arrays.

    Args:
        a: (n, 4) boxes
        b: (m, 4) boxes

    Returns:
        (n, m) IoU matrix
    """
    iw = np.maximum(0.0, np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]))
    ih = np.maximum(0.0, np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0.0, inter / np.where(union > 0.0, union, 1.0), 0.0)


def greedy_nms(boxes: np.ndarray, iou_threshold: float) -> List[int]:
    """
    Greedy suppression over boxes already sorted by descending score.

    A box is dropped when its IoU with any kept box is strictly greater than
    iou_threshold.

    Returns:
        Indices of kept boxes, in input order
    """
    keep: List[int] = []
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    overlaps = iou_matrix(boxes, boxes)
    for i in range(boxes.shape[0]):
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= overlaps[i] > iou_threshold
    return keep


def postprocess_image(detections: Sequence[Detection], config: PostprocessConfig) -> List[Detection]:
    """
    Score filtering, per-label NMS and top-m selection for one image.

    Output is ordered by (score desc, label asc, input index asc).
    """
    if not detections:
        return []
    if len({d.image_id for d in detections}) > 1:
        raise DomainError("postprocess_image expects detections of a single image")

    survivors = [
        i for i, d in enumerate(detections)
        if not (config.drop_background and d.label.is_background)
        and d.score > config.score_threshold
        and d.box.w > config.min_box_size
        and d.box.h > config.min_box_size
    ]

    by_label: Dict[DetectionLabel, List[int]] = defaultdict(list)
    for i in survivors:
        by_label[detections[i].label].append(i)

    kept: List[int] = []
    for label in sorted(by_label, key=lambda lb: lb.sort_key()):
        members = sorted(by_label[label], key=lambda i: (-detections[i].score, i))
        boxes = boxes_to_xyxy([detections[i].box for i in members])
        kept.extend(members[k] for k in greedy_nms(boxes, config.nms_iou))

    kept.sort(key=lambda i: (-detections[i].score, detections[i].label.sort_key(), i))
    result = [detections[i] for i in kept[:config.top_m]]

    logger.debug(
        f"Image {detections[0].image_id}: {len(detections)} candidates, "
        f"{len(survivors)} after filtering, {len(result)} kept"
    )
    return result
