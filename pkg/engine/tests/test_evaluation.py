"""
Tests for AP computation, split means and class-agnostic metrics.
"""
import json

import numpy as np
import pytest

from ncdetect.core.exceptions import DomainError
from ncdetect.models.ground_truth import GroundTruthIndex
from ncdetect.schemas.config import EvaluationConfig
from ncdetect.schemas.detection import ClassInfo, DetectionLabel, GroundTruthAnnotation
from ncdetect.schemas.geometry import BoxGeometry
from ncdetect.services.evaluation import (
    average_precision,
    class_agnostic_metrics,
    evaluate,
    frequency_bucket,
    write_report,
)
from ncdetect.services.postprocess import iou


def box(*xywh):
    return BoxGeometry.from_xywh(xywh)


def gt_index(*annotations):
    return GroundTruthIndex.from_annotations(
        GroundTruthAnnotation(image_id=image_id, class_id=cid, box=box(*xywh))
        for image_id, cid, xywh in annotations
    )


CLASSES = [ClassInfo(class_id=0, name="cat"), ClassInfo(class_id=1, name="okapi", novel=True)]


def test_perfect_detections(make_detection):
    gt = {0: [box(0, 0, 10, 10)], 1: [box(5, 5, 20, 20), box(40, 40, 5, 5)]}
    dets = [
        make_detection((0, 0, 10, 10), 0.3, image_id=0),
        make_detection((5, 5, 20, 20), 0.9, image_id=1),
        make_detection((40, 40, 5, 5), 0.1, image_id=1),
    ]
    assert average_precision(dets, gt, 0.5) == 1.0


def test_no_detections():
    assert average_precision([], {0: [box(0, 0, 10, 10)]}, 0.5) == 0.0


def test_no_ground_truth_is_undefined(make_detection):
    assert average_precision([make_detection((0, 0, 1, 1), 0.9)], {}, 0.5) is None


def test_false_positive_ranking(make_detection):
    """A TP ranked first gives AP 1.0; an FP ranked first halves it"""
    gt = {0: [box(0, 0, 10, 10)]}
    tp_box, fp_box = (0, 0, 10, 6), (50, 50, 10, 10)
    assert iou(box(*tp_box), gt[0][0]) == pytest.approx(0.6)

    tp_first = [make_detection(tp_box, 0.9), make_detection(fp_box, 0.8)]
    fp_first = [make_detection(tp_box, 0.8), make_detection(fp_box, 0.9)]
    assert average_precision(tp_first, gt, 0.5) == pytest.approx(1.0)
    assert average_precision(fp_first, gt, 0.5) == pytest.approx(0.5)


def test_duplicate_detection_is_false_positive(make_detection):
    gt = {0: [box(0, 0, 10, 10), box(100, 100, 10, 10)]}
    dets = [make_detection((0, 0, 10, 10), 0.9), make_detection((0, 0, 10, 10), 0.8)]
    # Recall reaches 0.5 only; half of the recall points sample precision 1
    assert average_precision(dets, gt, 0.5) == pytest.approx(51 / 101)


def test_detections_in_other_images_never_match(make_detection):
    gt = {0: [box(0, 0, 10, 10)]}
    assert average_precision([make_detection((0, 0, 10, 10), 0.9, image_id=3)], gt, 0.5) == 0.0


def test_map_all_single_class(make_detection):
    index = gt_index((0, 0, (0, 0, 10, 10)))
    report = evaluate([make_detection((0, 0, 10, 10), 0.7)], index, CLASSES, EvaluationConfig())

    assert report.map_all == 1.0
    assert report.per_class_ap == {0: 1.0}
    assert report.map_novel is None


def test_thresholds_are_averaged(make_detection):
    """IoU 0.7 is a hit at 0.5 and a miss at 0.95"""
    index = gt_index((0, 0, (0, 0, 10, 10)))
    config = EvaluationConfig(iou_thresholds=[0.5, 0.95])
    report = evaluate([make_detection((0, 0, 10, 7), 0.7)], index, CLASSES, config)

    assert report.per_class_ap[0] == pytest.approx(0.5)
    assert report.map_by_threshold == {"0.50": 1.0, "0.95": 0.0}


def test_split_means_and_unmapped_detections_ignored(make_detection):
    index = gt_index((0, 0, (0, 0, 10, 10)), (0, 1, (50, 50, 10, 10)))
    dets = [
        make_detection((0, 0, 10, 10), 0.9, DetectionLabel.mapped(0)),
        make_detection((50, 50, 10, 10), 0.9, DetectionLabel.unmapped_novel(4)),
        make_detection((50, 50, 10, 10), 0.8, DetectionLabel.cluster(4)),
    ]
    report = evaluate(dets, index, CLASSES, EvaluationConfig())

    assert report.map_base == 1.0
    assert report.map_novel == 0.0
    assert report.map_all == pytest.approx(0.5)
    assert report.counts[1].split == "novel"
    assert report.counts[0].instances == 1


def test_classes_without_gt_are_excluded(make_detection):
    classes = CLASSES + [ClassInfo(class_id=2, name="zebu", novel=True)]
    index = gt_index((0, 0, (0, 0, 10, 10)))
    report = evaluate([make_detection((0, 0, 10, 10), 0.5, DetectionLabel.mapped(2))], index, classes, EvaluationConfig())

    assert list(report.per_class_ap) == [0]
    assert report.map_all == 0.0


def test_unknown_gt_class_rejected():
    index = gt_index((0, 7, (0, 0, 10, 10)))
    with pytest.raises(DomainError):
        evaluate([], index, CLASSES, EvaluationConfig())


@pytest.mark.parametrize("images,is_base,expected", [
    (1, False, "rare"),
    (10, False, "rare"),
    (11, False, "common"),
    (99, False, "common"),
    (100, False, "frequent"),
    (2, True, "frequent"),
])
def test_frequency_buckets(images, is_base, expected):
    assert frequency_bucket(images, is_base, EvaluationConfig()) == expected


def test_frequency_split_means(make_detection):
    annotations = [(i, 1, (0, 0, 10, 10)) for i in range(12)] + [(0, 0, (50, 50, 10, 10))]
    classes = CLASSES + [ClassInfo(class_id=2, name="saola", novel=True)]
    annotations.append((0, 2, (100, 100, 10, 10)))
    index = gt_index(*annotations)
    dets = [make_detection((0, 0, 10, 10), 0.9, DetectionLabel.mapped(1), image_id=i) for i in range(12)]
    report = evaluate(dets, index, classes, EvaluationConfig())

    assert report.counts[1].frequency == "common"
    assert report.counts[2].frequency == "rare"
    assert report.counts[0].frequency == "frequent"
    assert report.map_common == 1.0
    assert report.map_rare == 0.0
    assert report.map_frequent == 0.0


def test_class_agnostic_metrics(make_detection):
    index = gt_index((0, 0, (0, 0, 10, 10)), (0, 1, (50, 50, 10, 10)))
    dets = [
        make_detection((50, 50, 10, 10), 0.9, DetectionLabel.unmapped_novel(0)),
        make_detection((0, 0, 10, 10), 0.8, DetectionLabel.mapped(0)),
        make_detection((20, 20, 5, 5), 0.99, DetectionLabel.background()),
    ]
    metrics = class_agnostic_metrics(dets, index, 0.5, novel_ids={1})

    assert metrics.any_box == 1.0
    assert metrics.novel_as_novel == 1.0
    assert metrics.base_as_novel == 0.0
    assert metrics.novel_as_base == 0.0


def test_class_agnostic_confusions(make_detection):
    """Novel predictions on base objects and base predictions on novel objects"""
    index = gt_index((0, 0, (0, 0, 10, 10)), (0, 1, (50, 50, 10, 10)))
    dets = [
        make_detection((0, 0, 10, 10), 0.9, DetectionLabel.cluster(2)),
        make_detection((50, 50, 10, 10), 0.8, DetectionLabel.base(0)),
    ]
    metrics = class_agnostic_metrics(dets, index, 0.5, novel_ids={1})

    assert metrics.base_as_novel == 1.0
    assert metrics.novel_as_base == 1.0
    assert metrics.novel_as_novel == 0.0


def test_class_agnostic_undefined_is_zero(make_detection):
    index = gt_index((0, 0, (0, 0, 10, 10)))
    metrics = class_agnostic_metrics([make_detection((0, 0, 10, 10), 0.9)], index, 0.5, novel_ids=set())
    assert metrics.novel_as_novel == 0.0


def _naive_ap(dets, gts, threshold):
    """Independent evaluator: explicit loops over the ranked list"""
    n_gt = sum(len(v) for v in gts.values())
    if n_gt == 0:
        return None
    ranked = sorted(dets, key=lambda d: -d.score)
    used = {k: [False] * len(v) for k, v in gts.items()}
    precisions, recalls, tp = [], [], 0
    for rank, det in enumerate(ranked, start=1):
        best, best_iou = None, -1.0
        for j, g in enumerate(gts.get(det.image_id, [])):
            if used[det.image_id][j]:
                continue
            value = iou(det.box, g)
            if value > best_iou:
                best, best_iou = j, value
        if best is not None and best_iou >= threshold:
            used[det.image_id][best] = True
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    total = 0.0
    for k in range(101):
        r = k / 100
        candidates = [p for p, rc in zip(precisions, recalls) if rc >= r]
        total += max(candidates) if candidates else 0.0
    return total / 101


def test_evaluate_matches_naive_evaluator(rng, make_detection):
    annotations = []
    for image_id in range(6):
        for _ in range(4):
            x, y = rng.uniform(0, 200, 2)
            annotations.append((image_id, int(rng.integers(0, 2)), (x, y, 30.0, 30.0)))
    index = gt_index(*annotations)

    dets = []
    for image_id, cid, (x, y, w, h) in annotations:
        for _ in range(2):
            dx, dy = rng.normal(scale=6.0, size=2)
            label = DetectionLabel.mapped(cid if rng.uniform() < 0.8 else 1 - cid)
            dets.append(make_detection((x + dx, y + dy, w, h), float(rng.uniform(0.05, 1.0)), label, image_id))

    config = EvaluationConfig(iou_thresholds=[0.5, 0.75])
    report = evaluate(dets, index, CLASSES, config, threads=2)

    for cid in index.class_ids:
        gts = index.boxes_for_class(cid)
        mine = [d for d in dets if d.label.value == cid]
        expected = np.mean([_naive_ap(mine, gts, t) for t in (0.5, 0.75)])
        assert report.per_class_ap[cid] == pytest.approx(expected, abs=1e-12)


def test_write_report(tmp_path, make_detection):
    index = gt_index((0, 0, (0, 0, 10, 10)), (0, 1, (50, 50, 10, 10)))
    report = evaluate([make_detection((0, 0, 10, 10), 0.7)], index, CLASSES, EvaluationConfig())
    write_report(report, tmp_path / "report.jsonl", tmp_path / "report.txt")

    rows = [json.loads(line) for line in (tmp_path / "report.jsonl").read_text().splitlines()]
    assert [row["kind"] for row in rows] == ["class", "class", "summary"]
    assert rows[0]["name"] == "cat" and rows[0]["ap"] == 1.0
    assert rows[-1]["map_all"] == pytest.approx(0.5)

    text = (tmp_path / "report.txt").read_text()
    assert "okapi" in text
    assert "map_all" in text


def _random_single_object_images(rng, make_detection, n_images=8):
    gt, dets = {}, []
    for image_id in range(n_images):
        x, y = rng.uniform(0, 100, 2)
        gt[image_id] = [box(x, y, 20, 20)]
        for _ in range(int(rng.integers(0, 5))):
            dx, dy = rng.uniform(-8, 8, 2)
            dets.append(make_detection((x + dx, y + dy, 20, 20), float(rng.uniform(0, 0.9)), image_id=image_id))
    return gt, dets


def test_stricter_iou_never_raises_ap(rng, make_detection):
    for _ in range(50):
        gt, dets = _random_single_object_images(rng, make_detection)
        aps = [average_precision(dets, gt, threshold) for threshold in (0.3, 0.5, 0.75)]
        assert aps[0] >= aps[1] >= aps[2]


def test_top_scored_true_positive_never_lowers_ap(rng, make_detection):
    for _ in range(50):
        gt, dets = _random_single_object_images(rng, make_detection)
        gt[99] = [box(0, 0, 30, 30)]
        before = average_precision(dets, gt, 0.5)
        after = average_precision(dets + [make_detection((0, 0, 30, 30), 1.0, image_id=99)], gt, 0.5)
        assert after >= before
