from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from ..core.exceptions import DomainError
from ..schemas.geometry import BoxGeometry


class Source(IntEnum):
    GT = 0
    RPN = 1


@dataclass(frozen=True, slots=True)
class BasePrediction:
    """Output of the frozen base classifier: background or one base class"""
    class_id: Optional[int] = None

    @classmethod
    def background(cls) -> "BasePrediction":
        return cls(None)

    @classmethod
    def of(cls, class_id: int) -> "BasePrediction":
        if class_id < 0:
            raise DomainError("base class ids are non-negative")
        return cls(int(class_id))

    @property
    def is_background(self) -> bool:
        return self.class_id is None


@dataclass(frozen=True, eq=False, slots=True)
class FeatureRecord:
    """One box with its feature vector and provenance"""
    image_id: int
    box: BoxGeometry
    feature: np.ndarray
    source: Source
    base_pred: Optional[BasePrediction] = None
    objectness: Optional[float] = None
    gt_class: Optional[int] = None

    def __post_init__(self):
        if self.image_id < 0:
            raise DomainError(f"image_id must be non-negative, got {self.image_id}")
        feature = np.array(self.feature, dtype=np.float64)
        if feature.ndim != 1 or feature.size == 0:
            raise DomainError("feature must be a non-empty vector")
        if not np.all(np.isfinite(feature)):
            raise DomainError(f"non-finite feature entries in record of image {self.image_id}")
        feature.setflags(write=False)
        object.__setattr__(self, "feature", feature)
        object.__setattr__(self, "source", Source(self.source))

        if self.source == Source.GT and self.gt_class is None:
            raise DomainError("GT records must carry gt_class")
        if self.gt_class is not None and self.gt_class < 0:
            raise DomainError("gt_class must be non-negative")
        if self.objectness is not None and not 0.0 <= self.objectness <= 1.0:
            raise DomainError("objectness must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return int(self.feature.shape[0])

    def same_as(self, other: "FeatureRecord") -> bool:
        """Field-wise equality, comparing features exactly"""
        return (
            self.image_id == other.image_id
            and self.box == other.box
            and self.source == other.source
            and self.base_pred == other.base_pred
            and self.objectness == other.objectness
            and self.gt_class == other.gt_class
            and np.array_equal(self.feature, other.feature)
        )
