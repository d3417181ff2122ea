"""
Configuration blocks for every stage plus the root pipeline config.

The root config is a pydantic-settings model so that values can come from
a YAML file, NCDETECT_PIPELINE_* environment variables and CLI flags.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..config import settings
from ..core.exceptions import ConfigError, MissingInputError
from .world import WorldConfig

logger = logging.getLogger(__name__)


class MetricKind(str, Enum):
    INV_SQ_EUCLIDEAN = "inv_sq_euclidean"
    DOT_PRODUCT = "dot_product"
    COSINE = "cosine"


class SimilarityMetric(BaseModel):
    """Similarity S(f, p); higher means more similar for every kind"""
    kind: MetricKind = MetricKind.INV_SQ_EUCLIDEAN
    gamma: int = 2

    model_config = ConfigDict(frozen=True)

    @field_validator('gamma')
    @classmethod
    def validate_gamma(cls, v):
        if v < 1:
            raise ValueError('gamma must be a positive integer')
        return v

    @property
    def signed(self) -> bool:
        """Signed metrics can produce negative logits"""
        return self.kind != MetricKind.INV_SQ_EUCLIDEAN


class KMeansConfig(BaseModel):
    q: int = 250
    max_iter: int = 1000
    retries: int = 10
    seed: int = 0
    tol: float = 0.0
    init: Literal["random", "kmeans++"] = "random"

    model_config = ConfigDict(frozen=True)

    @field_validator('q', 'max_iter', 'retries')
    @classmethod
    def validate_positive(cls, v, info):
        if v < 1:
            raise ValueError(f'{info.field_name} must be positive')
        return v

    @field_validator('seed')
    @classmethod
    def validate_seed(cls, v):
        if not -(2**63) <= v < 2**64:
            raise ValueError('seed must fit in 64 bits')
        return v

    @field_validator('tol')
    @classmethod
    def validate_tol(cls, v):
        if v < 0:
            raise ValueError('tol must be non-negative')
        return v


class InferenceConfig(BaseModel):
    metric: SimilarityMetric = Field(default_factory=SimilarityMetric)
    prob_norm: Literal["l1", "softmax"] = "l1"
    background_classifier: bool = True
    emission: Literal["argmax", "per_class"] = "per_class"
    min_candidate_score: float = 0.0

    model_config = ConfigDict(frozen=True)

    @field_validator('min_candidate_score')
    @classmethod
    def validate_min_candidate_score(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError('min_candidate_score must lie in [0, 1)')
        return v


class PostprocessConfig(BaseModel):
    score_threshold: float = 0.05
    nms_iou: float = 0.5
    top_m: int = 100
    drop_background: bool = True
    min_box_size: float = 1e-3

    model_config = ConfigDict(frozen=True)

    @field_validator('score_threshold')
    @classmethod
    def validate_score_threshold(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError('score_threshold must lie in [0, 1)')
        return v

    @field_validator('nms_iou')
    @classmethod
    def validate_nms_iou(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError('nms_iou must lie in (0, 1]')
        return v

    @field_validator('top_m')
    @classmethod
    def validate_top_m(cls, v):
        if v < 1:
            raise ValueError('top_m must be positive')
        return v


class EvaluationConfig(BaseModel):
    iou_thresholds: List[float] = Field(default_factory=lambda: [0.5])
    frequency_splits: bool = True
    frequent_min_images: int = 100
    rare_max_images: int = 10
    class_agnostic: bool = True

    model_config = ConfigDict(frozen=True)

    @field_validator('iou_thresholds')
    @classmethod
    def validate_thresholds(cls, v):
        if not v:
            raise ValueError('at least one IoU threshold is required')
        if any(not 0.0 < t <= 1.0 for t in v):
            raise ValueError('IoU thresholds must lie in (0, 1]')
        return v

    @classmethod
    def coco_thresholds(cls) -> List[float]:
        """0.50:0.05:0.95"""
        return [round(0.5 + 0.05 * i, 2) for i in range(10)]


class MappingConfig(BaseModel):
    method: Literal["hungarian", "embedding"] = "hungarian"
    kappa: int = 10
    include_base: bool = False
    tie_break_limit: int = 4096

    model_config = ConfigDict(frozen=True)

    @field_validator('kappa')
    @classmethod
    def validate_kappa(cls, v):
        if v < 1:
            raise ValueError('kappa must be positive')
        return v


class PathsConfig(BaseModel):
    classes: str = "classes.jsonl"
    base_gt: str = "base_gt.ncdf"
    discovery_rpn: str = "discovery_rpn.ncdf"
    discovery_gt: Optional[str] = None
    test_rpn: str = "test_rpn.ncdf"
    test_gt: str = "test_gt.jsonl"
    test_gt_features: str = "test_gt_features.ncdf"
    box_embeddings: Optional[str] = None
    text_embeddings: Optional[str] = None

    model_config = ConfigDict(frozen=True)

    @classmethod
    def for_directory(cls, directory: Path) -> "PathsConfig":
        """Default file names resolved inside a world directory"""
        directory = Path(directory)
        return cls(
            classes=str(directory / "classes.jsonl"),
            base_gt=str(directory / "base_gt.ncdf"),
            discovery_rpn=str(directory / "discovery_rpn.ncdf"),
            discovery_gt=str(directory / "discovery_gt.ncdf"),
            test_rpn=str(directory / "test_rpn.ncdf"),
            test_gt=str(directory / "test_gt.jsonl"),
            test_gt_features=str(directory / "test_gt_features.ncdf"),
        )

    def require(self, *names: str) -> Dict[str, Path]:
        """Resolve the named paths, failing on any that is unset or missing"""
        resolved = {}
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise MissingInputError(f"Input '{name}'", "<unset>")
            path = Path(value)
            if not path.exists():
                raise MissingInputError(f"Input '{name}'", path)
            resolved[name] = path
        return resolved


PRESETS: Dict[str, Dict[str, Any]] = {
    "voc": {
        "kmeans": {"max_iter": 1000, "retries": 10},
        "postprocess": {"score_threshold": 0.05, "top_m": 100},
    },
    "lvis": {
        "kmeans": {"max_iter": 250, "retries": 5},
        "postprocess": {"score_threshold": 0.0, "top_m": 300},
    },
}


class PipelineConfig(BaseSettings):
    paths: PathsConfig = Field(default_factory=PathsConfig)
    kmeans: KMeansConfig = Field(default_factory=KMeansConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    postprocess: PostprocessConfig = Field(default_factory=PostprocessConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    mapping: MappingConfig = Field(default_factory=MappingConfig)
    world: WorldConfig = Field(default_factory=WorldConfig)
    variant: Literal["default", "all_clusters", "gt_prototypes"] = "default"
    output_dir: str = Field(default_factory=lambda: str(Path(settings.runs_directory) / "latest"))
    seed: int = 0
    threads: int = 1

    model_config = SettingsConfigDict(
        env_prefix="NCDETECT_PIPELINE_",
        env_nested_delimiter="__",
        extra="forbid",
    )

    @model_validator(mode='before')
    @classmethod
    def seed_kmeans(cls, data):
        """The top-level seed seeds k-means unless kmeans.seed is explicit"""
        if isinstance(data, dict) and data.get('seed') is not None:
            kmeans = data.get('kmeans')
            if kmeans is None:
                data = {**data, 'kmeans': {'seed': data['seed']}}
            elif isinstance(kmeans, dict) and 'seed' not in kmeans:
                data = {**data, 'kmeans': {**kmeans, 'seed': data['seed']}}
        return data

    @model_validator(mode='after')
    def validate_variant(self):
        if self.threads < 1:
            raise ValueError('threads must be at least 1')
        if self.variant == "all_clusters" and not self.mapping.include_base:
            self.mapping = self.mapping.model_copy(update={"include_base": True})
        return self

    def canonical_json(self) -> str:
        return self.model_dump_json()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)

    def save(self, path: Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_yaml())


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base"""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
    preset: Optional[str] = None,
) -> PipelineConfig:
    """
    Build a PipelineConfig with precedence flags > file > preset > env > defaults.

    Args:
        path: Optional YAML config file
        overrides: Nested dict of values given on the command line
        preset: Optional preset name ("voc" or "lvis")

    Raises:
        MissingInputError: config file does not exist
        ConfigError: unknown preset, unparsable YAML or invalid values
    """
    data: Dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset '{preset}'", {"known": sorted(PRESETS)})
        data = deep_merge(data, PRESETS[preset])

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingInputError("Config file", path)
        try:
            with open(path, encoding="utf-8") as f:
                file_data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Could not parse {path}: {e}") from e
        if not isinstance(file_data, dict):
            raise ConfigError(f"{path} must contain a mapping at the top level")
        data = deep_merge(data, file_data)

    data = deep_merge(data, overrides or {})

    try:
        config = PipelineConfig(**data)
    except ValidationError as e:
        raise ConfigError("Invalid pipeline configuration", {"errors": e.errors(include_url=False)}) from e

    logger.debug(f"Loaded pipeline config (preset={preset}, file={path})")
    return config
