import math
from typing import Tuple
from pydantic import BaseModel, ConfigDict, field_validator


class BoxGeometry(BaseModel):
    """Axis-aligned box in pixels, (x, y) is the top-left corner"""
    x: float
    y: float
    w: float
    h: float

    model_config = ConfigDict(frozen=True)

    @field_validator('x', 'y', 'w', 'h')
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError('box coordinates must be finite')
        return v

    @field_validator('w', 'h')
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError('box width and height must be positive')
        return v

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_xywh(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def as_xyxy(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    @classmethod
    def from_xywh(cls, values) -> "BoxGeometry":
        x, y, w, h = (float(v) for v in values)
        return cls(x=x, y=y, w=w, h=h)
