from .geometry import BoxGeometry
from .detection import ClassInfo, Detection, DetectionLabel, GroundTruthAnnotation, LabelKind
from .prototypes import BasePrototype, PrototypeSet
from .mapping import LabelMapping, MappingMethod
from .report import ClassAgnosticMetrics, ClassCount, EvalReport
from .world import WorldConfig
from .config import (
    EvaluationConfig, InferenceConfig, KMeansConfig, MappingConfig, MetricKind,
    PathsConfig, PipelineConfig, PostprocessConfig, SimilarityMetric, load_pipeline_config,
)

__all__ = [
    "BoxGeometry",
    "ClassInfo", "Detection", "DetectionLabel", "GroundTruthAnnotation", "LabelKind",
    "BasePrototype", "PrototypeSet",
    "LabelMapping", "MappingMethod",
    "ClassAgnosticMetrics", "ClassCount", "EvalReport",
    "WorldConfig",
    "EvaluationConfig", "InferenceConfig", "KMeansConfig", "MappingConfig", "MetricKind",
    "PathsConfig", "PipelineConfig", "PostprocessConfig", "SimilarityMetric", "load_pipeline_config",
]
