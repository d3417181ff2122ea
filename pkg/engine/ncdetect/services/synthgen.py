"""
Deterministic synthetic feature worlds.

Every class is a Gaussian around a unit mean direction; class directions
are pairwise separated by at least the configured angle. Objects are laid
out on a grid per image, each yielding one GT feature and a few jittered
proposals. Clutter proposals come in two kinds. Background stuff sits in a
few compact modes around directions kept away from every class and is
placed away from every object. Crops are poorly localized boxes that
partially overlap an object and carry a feature of its class. A simulated
base head labels base objects with their class and everything else,
crops included, as background, with an optional flip probability.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.exceptions import InfeasibleConfigError
from ..models.records import BasePrediction, FeatureRecord, Source
from ..schemas.config import PathsConfig, PipelineConfig
from ..schemas.detection import ClassInfo, GroundTruthAnnotation
from ..schemas.geometry import BoxGeometry
from ..schemas.world import WorldConfig
from .feature_io import (
    write_annotations,
    write_class_table,
    write_embedding_file,
    write_feature_file,
    write_text_embeddings,
)
from .postprocess import iou

logger = logging.getLogger(__name__)

IMAGE_ID_BLOCK = 1_000_000
BASE_IMAGES = 0
DISCOVERY_IMAGES = IMAGE_ID_BLOCK
TEST_IMAGES = 2 * IMAGE_ID_BLOCK

CLUTTER = -1
CLUTTER_MAX_IOU = 0.1
CLUTTER_PLACEMENT_TRIES = 20
CROP_IOU_RANGE = (0.15, 0.4)


@dataclass
class SyntheticWorld:
    config: WorldConfig
    class_means: np.ndarray
    classes: List[ClassInfo]
    background_means: np.ndarray = None
    base_gt: List[FeatureRecord] = field(default_factory=list)
    discovery_rpn: List[FeatureRecord] = field(default_factory=list)
    discovery_gt: List[FeatureRecord] = field(default_factory=list)
    test_rpn: List[FeatureRecord] = field(default_factory=list)
    test_gt_features: List[FeatureRecord] = field(default_factory=list)
    test_annotations: List[GroundTruthAnnotation] = field(default_factory=list)
    # Latent class of every RPN record, CLUTTER for background and crops
    truth: Dict[str, List[int]] = field(default_factory=dict)
    text_embeddings: np.ndarray = None
    box_embeddings: np.ndarray = None

    @property
    def novel_ids(self) -> List[int]:
        return [c.class_id for c in self.classes if c.novel]


def sample_unit_directions(n: int, dim: int, min_angle_deg: float, max_attempts: int,
                           rng: np.random.Generator, avoid: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Rejection-sample n unit vectors with pairwise angle >= min_angle_deg,
    also kept that far from every row of avoid.

    Raises:
        InfeasibleConfigError: attempts exhausted before n directions were accepted
    """
    max_cos = math.cos(math.radians(min_angle_deg))
    fixed = np.empty((0, dim)) if avoid is None else np.asarray(avoid, dtype=np.float64).reshape(-1, dim)
    accepted: List[np.ndarray] = []
    attempts = 0
    while len(accepted) < n:
        if attempts >= max_attempts:
            raise InfeasibleConfigError(
                f"could only place {len(accepted)} of {n} directions {min_angle_deg} degrees apart "
                f"in {dim} dimensions after {max_attempts} attempts",
                {"placed": len(accepted), "requested": n},
            )
        attempts += 1
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        v /= norm
        if fixed.size and np.max(fixed @ v) > max_cos:
            continue
        if accepted and np.max(np.asarray(accepted) @ v) > max_cos:
            continue
        accepted.append(v)

    logger.debug(f"Placed {n} directions in {attempts} attempts")
    return np.asarray(accepted).reshape(n, dim)


def class_pmf(config: WorldConfig) -> np.ndarray:
    """Class probabilities: uniform, or Zipf p(k) proportional to (k+1)^-s"""
    n = config.n_classes
    if config.label_distribution == "uniform":
        return np.full(n, 1.0 / n)
    weights = np.arange(1, n + 1, dtype=np.float64) ** (-config.zipf_s)
    return weights / weights.sum()


def class_counts(config: WorldConfig) -> np.ndarray:
    """
    Discovery objects per class: samples_per_class x C objects split by
    largest-remainder apportionment of the class pmf (ties to lower ids).
    """
    total = config.samples_per_class * config.n_classes
    quotas = class_pmf(config) * total
    counts = np.floor(quotas).astype(np.int64)
    remainder = total - int(counts.sum())
    if remainder > 0:
        order = np.lexsort((np.arange(counts.size), -(quotas - counts)))
        counts[order[:remainder]] += 1
    return counts


class _WorldBuilder:
    def __init__(self, config: WorldConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed % 2**64)
        self.means = sample_unit_directions(
            config.n_classes, config.dim, config.min_angle_deg, config.max_direction_attempts, self.rng,
        )
        self.background = np.empty((0, config.dim))
        if config.clutter_fraction > 0 and config.crop_fraction < 1:
            self.background = sample_unit_directions(
                config.clutter_modes, config.dim, config.min_angle_deg, config.max_direction_attempts, self.rng,
                avoid=self.means,
            )
        grid = math.ceil(math.sqrt(config.boxes_per_image))
        self.grid = grid
        self.cell = config.image_size / grid

    def is_base(self, class_id: int) -> bool:
        return class_id < self.config.n_base

    def feature(self, class_id: int) -> np.ndarray:
        return self.means[class_id] + self.config.sigma * self.rng.standard_normal(self.config.dim)

    def stuff_feature(self) -> np.ndarray:
        mode = int(self.rng.integers(len(self.background)))
        return self.background[mode] + self.config.clutter_sigma * self.rng.standard_normal(self.config.dim)

    def base_head(self, class_id: int) -> BasePrediction:
        says_object = class_id != CLUTTER and self.is_base(class_id)
        if self.config.flip_prob > 0 and self.rng.random() < self.config.flip_prob:
            if says_object or self.config.n_base == 0:
                return BasePrediction.background()
            return BasePrediction.of(int(self.rng.integers(self.config.n_base)))
        return BasePrediction.of(class_id) if says_object else BasePrediction.background()

    def object_boxes(self, n: int) -> List[BoxGeometry]:
        cells = self.rng.permutation(self.grid * self.grid)[:n]
        boxes = []
        for cell in cells:
            row, col = divmod(int(cell), self.grid)
            w, h = self.rng.uniform(0.4, 0.8, size=2) * self.cell
            x = col * self.cell + self.rng.uniform(0.0, self.cell - w)
            y = row * self.cell + self.rng.uniform(0.0, self.cell - h)
            boxes.append(BoxGeometry(x=float(x), y=float(y), w=float(w), h=float(h)))
        return boxes

    def jitter(self, box: BoxGeometry) -> BoxGeometry:
        j = self.config.box_jitter
        dx, dy, sw, sh = self.rng.uniform(-j, j, size=4)
        return BoxGeometry(
            x=float(box.x + dx * box.w),
            y=float(box.y + dy * box.h),
            w=float(box.w * (1.0 + sw)),
            h=float(box.h * (1.0 + sh)),
        )

    def clutter_box(self, objects: List[BoxGeometry]) -> Optional[BoxGeometry]:
        size = self.config.image_size
        for _ in range(CLUTTER_PLACEMENT_TRIES):
            w, h = self.rng.uniform(0.2, 0.6, size=2) * self.cell
            x, y = self.rng.uniform(0.0, size - w), self.rng.uniform(0.0, size - h)
            box = BoxGeometry(x=float(x), y=float(y), w=float(w), h=float(h))
            if all(iou(box, obj) <= CLUTTER_MAX_IOU for obj in objects):
                return box
        return None

    def crop_box(self, box: BoxGeometry) -> BoxGeometry:
        """Same-size box shifted along one axis; IoU with box is drawn from CROP_IOU_RANGE"""
        target = self.rng.uniform(*CROP_IOU_RANGE)
        shift = (1.0 - target) / (1.0 + target)
        sign = 1.0 if self.rng.random() < 0.5 else -1.0
        if self.rng.random() < 0.5:
            return BoxGeometry(x=float(box.x + sign * shift * box.w), y=box.y, w=box.w, h=box.h)
        return BoxGeometry(x=box.x, y=float(box.y + sign * shift * box.h), w=box.w, h=box.h)

    def image(self, image_id: int, class_ids: List[int], with_proposals: bool):
        """GT records, RPN records and latent classes of one image"""
        boxes = self.object_boxes(len(class_ids))
        gt, rpn, latent = [], [], []

        for class_id, box in zip(class_ids, boxes):
            gt.append(FeatureRecord(
                image_id=image_id, box=box, feature=self.feature(class_id), source=Source.GT,
                base_pred=self.base_head(class_id), gt_class=class_id,
            ))
            if not with_proposals:
                continue
            for _ in range(self.config.proposals_per_object):
                rpn.append(FeatureRecord(
                    image_id=image_id, box=self.jitter(box), feature=self.feature(class_id), source=Source.RPN,
                    base_pred=self.base_head(class_id), objectness=float(self.rng.uniform(0.6, 1.0)),
                ))
                latent.append(class_id)

        if with_proposals and self.config.clutter_fraction > 0:
            f = self.config.clutter_fraction
            n_clutter = int(round(len(rpn) * f / (1.0 - f)))
            for _ in range(n_clutter):
                if self.rng.random() < self.config.crop_fraction:
                    anchor = int(self.rng.integers(len(boxes)))
                    box, feature = self.crop_box(boxes[anchor]), self.feature(class_ids[anchor])
                else:
                    box = self.clutter_box(boxes)
                    if box is None:
                        continue
                    feature = self.stuff_feature()
                rpn.append(FeatureRecord(
                    image_id=image_id, box=box, feature=feature, source=Source.RPN,
                    base_pred=self.base_head(CLUTTER), objectness=float(self.rng.uniform(0.05, 0.6)),
                ))
                latent.append(CLUTTER)

        return boxes, gt, rpn, latent

    def images(self, offset: int, class_ids: np.ndarray, with_proposals: bool):
        per_image = self.config.boxes_per_image
        for start in range(0, len(class_ids), per_image):
            chunk = [int(c) for c in class_ids[start:start + per_image]]
            yield (offset + start // per_image, *self.image(offset + start // per_image, chunk, with_proposals))

    def embeddings(self, latent: List[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Text embeddings per class and one box embedding per discovery proposal"""
        config = self.config
        texts = sample_unit_directions(config.n_classes, config.embedding_dim, 0.0, config.n_classes * 10, self.rng)
        boxes = np.empty((len(latent), config.embedding_dim))
        for i, class_id in enumerate(latent):
            anchor = class_id if class_id != CLUTTER else int(self.rng.integers(config.n_classes))
            sigma = config.embedding_sigma if class_id != CLUTTER else 1.0
            boxes[i] = texts[anchor] + sigma * self.rng.standard_normal(config.embedding_dim)
        return texts, boxes


def generate(config: WorldConfig) -> SyntheticWorld:
    """
    Build a synthetic world in memory; identical configs give identical worlds.

    Raises:
        InfeasibleConfigError: class directions cannot be separated as requested
    """
    builder = _WorldBuilder(config)
    classes = [
        ClassInfo(class_id=c, name=f"{'base' if c < config.n_base else 'novel'}_{c:03d}", novel=c >= config.n_base)
        for c in range(config.n_classes)
    ]
    world = SyntheticWorld(config=config, class_means=builder.means, classes=classes,
                           background_means=builder.background)

    base_labels = builder.rng.permutation(np.repeat(np.arange(config.n_base), config.samples_per_class))
    for _, _, gt, _, _ in builder.images(BASE_IMAGES, base_labels, with_proposals=False):
        world.base_gt.extend(gt)

    discovery_labels = builder.rng.permutation(np.repeat(np.arange(config.n_classes), class_counts(config)))
    discovery_truth: List[int] = []
    for _, _, gt, rpn, latent in builder.images(DISCOVERY_IMAGES, discovery_labels, with_proposals=True):
        world.discovery_gt.extend(gt)
        world.discovery_rpn.extend(rpn)
        discovery_truth.extend(latent)

    n_test = config.test_images * config.boxes_per_image
    test_labels = builder.rng.choice(config.n_classes, size=n_test, p=class_pmf(config))
    test_truth: List[int] = []
    for image_id, boxes, gt, rpn, latent in builder.images(TEST_IMAGES, test_labels, with_proposals=True):
        world.test_gt_features.extend(gt)
        world.test_rpn.extend(rpn)
        test_truth.extend(latent)
        world.test_annotations.extend(
            GroundTruthAnnotation(image_id=image_id, class_id=r.gt_class, box=box) for r, box in zip(gt, boxes)
        )

    world.truth = {"discovery_rpn": discovery_truth, "test_rpn": test_truth}
    world.text_embeddings, world.box_embeddings = builder.embeddings(discovery_truth)

    logger.info(
        f"Generated world: {config.n_base} base + {config.n_novel} novel classes, "
        f"{len(world.base_gt)} base GT, {len(world.discovery_rpn)} discovery proposals, "
        f"{len(world.test_rpn)} test proposals, {len(world.test_annotations)} test objects"
    )
    return world


def write_world(world: SyntheticWorld, directory: Path) -> PathsConfig:
    """
    Write every file of a world and a config.yaml pointing at them.

    Returns:
        PathsConfig of the written files
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = PathsConfig.for_directory(directory).model_copy(update={
        "box_embeddings": str(directory / "box_embeddings.ncde"),
        "text_embeddings": str(directory / "text_embeddings.jsonl"),
    })
    dim = world.config.dim

    write_class_table(paths.classes, world.classes)
    write_feature_file(paths.base_gt, world.base_gt, dim=dim)
    write_feature_file(paths.discovery_rpn, world.discovery_rpn, dim=dim)
    write_feature_file(paths.discovery_gt, world.discovery_gt, dim=dim)
    write_feature_file(paths.test_rpn, world.test_rpn, dim=dim)
    write_feature_file(paths.test_gt_features, world.test_gt_features, dim=dim)
    write_annotations(paths.test_gt, world.test_annotations)
    write_embedding_file(paths.box_embeddings, range(len(world.discovery_rpn)), world.box_embeddings)
    write_text_embeddings(paths.text_embeddings, [
        (c.class_id, c.name, world.text_embeddings[c.class_id]) for c in world.classes
    ])

    with open(directory / "truth.json", "w", encoding="utf-8") as f:
        json.dump({**world.truth, "novel_classes": world.novel_ids}, f, sort_keys=True)
        f.write("\n")

    PipelineConfig(
        paths=paths,
        world=world.config,
        seed=world.config.seed,
        output_dir=str(directory / "run"),
    ).save(directory / "config.yaml")

    logger.info(f"Wrote synthetic world to {directory}")
    return paths
