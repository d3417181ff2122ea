import math
from enum import Enum
from typing import Optional, Tuple
from pydantic import BaseModel, ConfigDict, field_serializer, field_validator, model_validator

from .geometry import BoxGeometry


class LabelKind(str, Enum):
    BACKGROUND = "background"
    BASE = "base"
    CLUSTER = "cluster"
    MAPPED = "mapped"
    UNMAPPED_NOVEL = "unmapped_novel"


_KIND_ORDER = {
    LabelKind.BACKGROUND: 0,
    LabelKind.BASE: 1,
    LabelKind.CLUSTER: 2,
    LabelKind.MAPPED: 3,
    LabelKind.UNMAPPED_NOVEL: 4,
}


class DetectionLabel(BaseModel):
    """Label of a detection; value is a class id or cluster index depending on kind"""
    kind: LabelKind
    value: Optional[int] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def validate_value(self):
        if self.kind == LabelKind.BACKGROUND:
            if self.value is not None:
                raise ValueError('background label carries no value')
        elif self.value is None or self.value < 0:
            raise ValueError(f'{self.kind.value} label needs a non-negative value')
        return self

    @classmethod
    def background(cls) -> "DetectionLabel":
        return cls(kind=LabelKind.BACKGROUND)

    @classmethod
    def base(cls, class_id: int) -> "DetectionLabel":
        return cls(kind=LabelKind.BASE, value=class_id)

    @classmethod
    def cluster(cls, index: int) -> "DetectionLabel":
        return cls(kind=LabelKind.CLUSTER, value=index)

    @classmethod
    def mapped(cls, class_id: int) -> "DetectionLabel":
        return cls(kind=LabelKind.MAPPED, value=class_id)

    @classmethod
    def unmapped_novel(cls, index: int) -> "DetectionLabel":
        return cls(kind=LabelKind.UNMAPPED_NOVEL, value=index)

    @property
    def is_background(self) -> bool:
        return self.kind == LabelKind.BACKGROUND

    def sort_key(self) -> Tuple[int, int]:
        return (_KIND_ORDER[self.kind], -1 if self.value is None else self.value)

    def __str__(self) -> str:
        if self.value is None:
            return self.kind.value
        return f"{self.kind.value}({self.value})"


class Detection(BaseModel):
    image_id: int
    box: BoxGeometry
    label: DetectionLabel
    score: float

    model_config = ConfigDict(frozen=True)

    @field_validator('score')
    @classmethod
    def validate_score(cls, v):
        if not math.isfinite(v) or v < 0.0 or v > 1.0:
            raise ValueError(f'score must be a finite probability, got {v}')
        return v

    def relabel(self, label: DetectionLabel) -> "Detection":
        return self.model_copy(update={"label": label})


class GroundTruthAnnotation(BaseModel):
    """One annotated object of the evaluation set"""
    image_id: int
    class_id: int
    box: BoxGeometry

    model_config = ConfigDict(frozen=True)

    @field_validator('box', mode='before')
    @classmethod
    def parse_box(cls, v):
        if isinstance(v, (list, tuple)):
            return BoxGeometry.from_xywh(v)
        return v

    @field_serializer('box')
    def serialize_box(self, box: BoxGeometry):
        return list(box.as_xywh())


class ClassInfo(BaseModel):
    """Row of the class-name table; names appear only in reports"""
    class_id: int
    name: str
    novel: bool = False

    model_config = ConfigDict(frozen=True)
