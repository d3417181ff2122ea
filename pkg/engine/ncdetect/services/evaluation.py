"""
Detection evaluation: per-class AP with 101-point interpolation, split
means and class-agnostic error metrics.
"""
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..core.exceptions import DomainError
from ..core.parallel import ordered_map
from ..models.ground_truth import GroundTruthIndex
from ..schemas.config import EvaluationConfig
from ..schemas.detection import ClassInfo, Detection, DetectionLabel, LabelKind
from ..schemas.geometry import BoxGeometry
from ..schemas.report import ClassAgnosticMetrics, ClassCount, EvalReport
from .postprocess import boxes_to_xyxy, iou_matrix

logger = logging.getLogger(__name__)

RECALL_POINTS = np.arange(101) / 100.0


def match_detections(
    detections: Sequence[Detection],
    gt_boxes: Dict[int, List[BoxGeometry]],
    iou_threshold: float,
) -> np.ndarray:
    """
    Greedy matching in descending score order (stable).

    Each detection takes the unmatched GT box of its image with the highest
    IoU (lowest index on ties) if that IoU reaches the threshold.

    Returns:
        0/1 true-positive flags in ranked order
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    gt_arrays = {image_id: boxes_to_xyxy(boxes) for image_id, boxes in gt_boxes.items()}
    matched = {image_id: np.zeros(len(boxes), dtype=bool) for image_id, boxes in gt_boxes.items()}

    tp = np.zeros(len(order), dtype=np.float64)
    for rank, i in enumerate(order):
        det = detections[i]
        boxes = gt_arrays.get(det.image_id)
        if boxes is None or boxes.shape[0] == 0:
            continue
        overlaps = iou_matrix(boxes_to_xyxy([det.box]), boxes)[0]
        overlaps[matched[det.image_id]] = -1.0
        best = int(np.argmax(overlaps))
        if overlaps[best] >= iou_threshold:
            tp[rank] = 1.0
            matched[det.image_id][best] = True
    return tp


def interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    """Mean precision envelope at recalls 0, 0.01, ..., 1"""
    if tp.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]

    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    reached = idx < recall.size
    sampled = np.zeros(RECALL_POINTS.size, dtype=np.float64)
    sampled[reached] = envelope[idx[reached]]
    return float(sampled.mean())


def average_precision(
    detections: Sequence[Detection],
    gt_boxes: Dict[int, List[BoxGeometry]],
    iou_threshold: float,
) -> Optional[float]:
    """
    AP of one class (or predicate) at one IoU threshold.

    Returns:
        AP in [0, 1], or None when there is no GT instance
    """
    n_gt = sum(len(boxes) for boxes in gt_boxes.values())
    if n_gt == 0:
        return None
    return interpolated_ap(match_detections(detections, gt_boxes, iou_threshold), n_gt)


def _mean(values: Iterable[float]) -> Optional[float]:
    values = list(values)
    return float(np.mean(values)) if values else None


def frequency_bucket(images: int, is_base: bool, config: EvaluationConfig) -> str:
    if is_base or images >= config.frequent_min_images:
        return "frequent"
    if images <= config.rare_max_images:
        return "rare"
    return "common"


def is_novel_prediction(label: DetectionLabel, novel_ids: set) -> bool:
    if label.kind in (LabelKind.CLUSTER, LabelKind.UNMAPPED_NOVEL):
        return True
    return label.kind == LabelKind.MAPPED and label.value in novel_ids


def is_base_prediction(label: DetectionLabel, novel_ids: set) -> bool:
    if label.kind == LabelKind.BASE:
        return True
    return label.kind == LabelKind.MAPPED and label.value not in novel_ids


def class_agnostic_metrics(
    detections: Sequence[Detection],
    gt_index: GroundTruthIndex,
    iou_threshold: float,
    novel_ids: Iterable[int],
) -> ClassAgnosticMetrics:
    """
    Four class-agnostic APs; an undefined AP (no GT) is reported as 0.

    any_box: every non-background prediction against all GT
    novel_as_novel: novel predictions against novel GT
    base_as_novel: novel predictions against base GT
    novel_as_base: base predictions against novel GT
    """
    novel_ids = set(novel_ids)

    def ap(label_predicate: Callable[[DetectionLabel], bool], class_predicate: Callable[[int], bool]) -> float:
        dets = [d for d in detections if label_predicate(d.label)]
        value = average_precision(dets, gt_index.boxes_where(class_predicate), iou_threshold)
        return 0.0 if value is None else value

    def novel_pred(lb):
        return is_novel_prediction(lb, novel_ids)

    def base_pred(lb):
        return is_base_prediction(lb, novel_ids)

    def novel_gt(cid):
        return cid in novel_ids

    def base_gt(cid):
        return cid not in novel_ids

    return ClassAgnosticMetrics(
        any_box=ap(lambda lb: not lb.is_background, lambda cid: True),
        novel_as_novel=ap(novel_pred, novel_gt),
        base_as_novel=ap(novel_pred, base_gt),
        novel_as_base=ap(base_pred, novel_gt),
    )


def evaluate(
    detections: Sequence[Detection],
    gt_index: GroundTruthIndex,
    classes: Sequence[ClassInfo],
    config: EvaluationConfig,
    threads: int = 1,
) -> EvalReport:
    """
    Per-class AP averaged over config.iou_thresholds, plus split means.

    Only Mapped detections count towards a class; UnmappedNovel and raw
    cluster labels are ignored. Classes without GT instances are excluded.
    """
    table = {c.class_id: c for c in classes}
    unknown = [cid for cid in gt_index.class_ids if cid not in table]
    if unknown:
        raise DomainError(f"GT classes {unknown} are missing from the class table")
    novel_ids = {c.class_id for c in classes if c.novel}

    by_class: Dict[int, List[Detection]] = defaultdict(list)
    for det in detections:
        if det.label.kind == LabelKind.MAPPED:
            by_class[det.label.value].append(det)

    thresholds = list(config.iou_thresholds)
    class_ids = gt_index.class_ids

    def class_aps(class_id: int) -> List[float]:
        gt_boxes = gt_index.boxes_for_class(class_id)
        return [average_precision(by_class.get(class_id, []), gt_boxes, t) for t in thresholds]

    aps_per_class = dict(zip(class_ids, ordered_map(class_aps, class_ids, threads)))
    per_class_ap = {cid: float(np.mean(aps)) for cid, aps in aps_per_class.items()}

    counts: Dict[int, ClassCount] = {}
    for cid in class_ids:
        is_base = not table[cid].novel
        images = gt_index.image_frequency[cid]
        counts[cid] = ClassCount(
            instances=gt_index.instance_count[cid],
            images=images,
            split="base" if is_base else "novel",
            frequency=frequency_bucket(images, is_base, config) if config.frequency_splits else None,
        )

    def split_mean(predicate) -> Optional[float]:
        return _mean(ap for cid, ap in per_class_ap.items() if predicate(cid))

    split_means = {}
    if config.frequency_splits:
        for bucket in ("frequent", "common", "rare"):
            split_means[f"map_{bucket}"] = split_mean(lambda cid, b=bucket: counts[cid].frequency == b)

    map_by_threshold = {
        f"{t:.2f}": float(np.mean([aps_per_class[cid][k] for cid in class_ids])) if class_ids else 0.0
        for k, t in enumerate(thresholds)
    }

    agnostic = None
    if config.class_agnostic:
        agnostic = class_agnostic_metrics(detections, gt_index, thresholds[0], novel_ids)

    report = EvalReport(
        per_class_ap=per_class_ap,
        map_base=split_mean(lambda cid: cid not in novel_ids),
        map_novel=split_mean(lambda cid: cid in novel_ids),
        map_all=_mean(per_class_ap.values()),
        iou_thresholds=thresholds,
        map_by_threshold=map_by_threshold,
        counts=counts,
        class_names={cid: table[cid].name for cid in class_ids},
        class_agnostic=agnostic,
        **split_means,
    )

    logger.info(
        f"Evaluated {len(detections)} detections over {len(class_ids)} classes: "
        f"mAP all={_fmt(report.map_all)} base={_fmt(report.map_base)} novel={_fmt(report.map_novel)}"
    )
    return report


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{100 * value:.1f}"


def report_rows(report: EvalReport) -> List[dict]:
    rows = []
    for cid in sorted(report.per_class_ap):
        count = report.counts.get(cid)
        rows.append({
            "kind": "class",
            "class_id": cid,
            "name": report.class_names.get(cid, str(cid)),
            "split": count.split if count else None,
            "frequency": count.frequency if count else None,
            "instances": count.instances if count else 0,
            "images": count.images if count else 0,
            "ap": report.per_class_ap[cid],
        })
    rows.append({
        "kind": "summary",
        **report.summary(),
        "iou_thresholds": report.iou_thresholds,
        "map_by_threshold": report.map_by_threshold,
        "class_agnostic": report.class_agnostic.model_dump() if report.class_agnostic else None,
    })
    return rows


def format_report_table(report: EvalReport) -> str:
    """Aligned text table, one row per class followed by the split means"""
    header = f"{'id':>5}  {'name':<20}  {'split':<6}  {'freq':<9}  {'inst':>6}  {'imgs':>6}  {'AP':>6}"
    lines = [header, "-" * len(header)]
    for row in report_rows(report)[:-1]:
        lines.append(
            f"{row['class_id']:>5}  {row['name'][:20]:<20}  {row['split'] or '':<6}  "
            f"{row['frequency'] or '':<9}  {row['instances']:>6}  {row['images']:>6}  {100 * row['ap']:>6.1f}"
        )
    lines.append("-" * len(header))
    for key, value in report.summary().items():
        lines.append(f"{key:<14}{_fmt(value):>8}")
    thresholds = ", ".join(f"{t:.2f}" for t in report.iou_thresholds)
    lines.append(f"{'iou':<14}{thresholds:>8}")
    if report.class_agnostic:
        for key, value in report.class_agnostic.model_dump().items():
            lines.append(f"{key:<14}{_fmt(value):>8}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, jsonl_path: Path, text_path: Path):
    jsonl_path = Path(jsonl_path)
    jsonl_path.parent.mkdir(parents=True, exist_ok=True)
    with open(jsonl_path, "w", encoding="utf-8") as f:
        for row in report_rows(report):
            f.write(json.dumps(row, sort_keys=True))
            f.write("\n")
    with open(text_path, "w", encoding="utf-8") as f:
        f.write(format_report_table(report))
