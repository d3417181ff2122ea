"""
Pytest configuration and fixtures for testing.
"""
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pytest

from ncdetect.models.records import BasePrediction, FeatureRecord, Source
from ncdetect.schemas.config import PathsConfig
from ncdetect.schemas.detection import Detection, DetectionLabel
from ncdetect.schemas.geometry import BoxGeometry
from ncdetect.schemas.world import WorldConfig
from ncdetect.services.synthgen import generate, write_world


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so randomized tests are reproducible."""
    return np.random.default_rng(20240611)


@pytest.fixture
def make_record() -> Callable[..., FeatureRecord]:
    """Factory for feature records with sensible defaults."""
    def factory(
        feature: Sequence[float],
        image_id: int = 0,
        box: Sequence[float] = (0.0, 0.0, 10.0, 10.0),
        source: Source = Source.RPN,
        base_pred: Optional[BasePrediction] = BasePrediction.background(),
        objectness: Optional[float] = None,
        gt_class: Optional[int] = None,
    ) -> FeatureRecord:
        return FeatureRecord(
            image_id=image_id,
            box=BoxGeometry.from_xywh(box),
            feature=np.asarray(feature, dtype=np.float64),
            source=source,
            base_pred=base_pred,
            objectness=objectness,
            gt_class=gt_class,
        )
    return factory


@pytest.fixture
def make_gt(make_record) -> Callable[..., FeatureRecord]:
    """Factory for labeled GT records."""
    def factory(feature: Sequence[float], gt_class: int, image_id: int = 0) -> FeatureRecord:
        return make_record(feature, image_id=image_id, source=Source.GT,
                           base_pred=None, gt_class=gt_class)
    return factory


@pytest.fixture
def make_detection() -> Callable[..., Detection]:
    """Factory for detections; label defaults to a mapped class."""
    def factory(box: Sequence[float], score: float, label: Optional[DetectionLabel] = None, image_id: int = 0) -> Detection:
        return Detection(
            image_id=image_id,
            box=BoxGeometry.from_xywh(box),
            label=label if label is not None else DetectionLabel.mapped(0),
            score=score,
        )
    return factory


@pytest.fixture
def small_world_config() -> WorldConfig:
    """A world small enough for fast end-to-end tests."""
    return WorldConfig(
        dim=16,
        n_base=3,
        n_novel=3,
        samples_per_class=30,
        test_images=12,
        boxes_per_image=4,
        seed=7,
    )


@pytest.fixture
def small_world(tmp_path: Path, small_world_config: WorldConfig) -> PathsConfig:
    """Small synthetic world written to disk."""
    return write_world(generate(small_world_config), tmp_path / "world")
