from typing import Literal
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class WorldConfig(BaseModel):
    """Synthetic feature world: Gaussian classes, boxes on a grid, hard-negative clutter"""
    dim: int = 64
    n_base: int = 10
    n_novel: int = 10
    min_angle_deg: float = 30.0
    sigma: float = 0.05
    samples_per_class: int = 200
    clutter_fraction: float = 0.0
    clutter_sigma: float = 0.05
    clutter_modes: int = 4
    crop_fraction: float = 0.15
    test_images: int = 100
    boxes_per_image: int = 8
    proposals_per_object: int = 2
    box_jitter: float = 0.03
    image_size: float = 800.0
    flip_prob: float = 0.0
    label_distribution: Literal["uniform", "long_tailed"] = "uniform"
    zipf_s: float = 1.0
    max_direction_attempts: int = 20000
    embedding_dim: int = 32
    embedding_sigma: float = 0.1
    seed: int = 0

    model_config = ConfigDict(frozen=True)

    @field_validator('dim', 'samples_per_class', 'test_images', 'boxes_per_image',
                     'proposals_per_object', 'max_direction_attempts', 'embedding_dim', 'clutter_modes')
    @classmethod
    def validate_positive(cls, v, info):
        if v < 1:
            raise ValueError(f'{info.field_name} must be positive')
        return v

    @field_validator('n_base', 'n_novel')
    @classmethod
    def validate_class_counts(cls, v, info):
        if v < 0:
            raise ValueError(f'{info.field_name} must be non-negative')
        return v

    @field_validator('sigma', 'clutter_sigma', 'box_jitter', 'embedding_sigma')
    @classmethod
    def validate_non_negative(cls, v, info):
        if v < 0:
            raise ValueError(f'{info.field_name} must be non-negative')
        return v

    @field_validator('clutter_fraction')
    @classmethod
    def validate_clutter_fraction(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError('clutter_fraction must lie in [0, 1)')
        return v

    @field_validator('crop_fraction')
    @classmethod
    def validate_crop_fraction(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError('crop_fraction must lie in [0, 1]')
        return v

    @field_validator('flip_prob')
    @classmethod
    def validate_flip_prob(cls, v):
        if not 0.0 <= v <= 1.0:
            raise ValueError('flip_prob must lie in [0, 1]')
        return v

    @field_validator('min_angle_deg')
    @classmethod
    def validate_min_angle(cls, v):
        if not 0.0 <= v <= 180.0:
            raise ValueError('min_angle_deg must lie in [0, 180]')
        return v

    @model_validator(mode='after')
    def validate_world(self):
        if self.n_base + self.n_novel < 1:
            raise ValueError('a world needs at least one class')
        if self.zipf_s <= 0 and self.label_distribution == "long_tailed":
            raise ValueError('zipf_s must be positive for long-tailed worlds')
        return self

    @property
    def n_classes(self) -> int:
        return self.n_base + self.n_novel
