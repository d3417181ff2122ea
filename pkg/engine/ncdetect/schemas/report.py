from typing import Dict, List, Literal, Optional
from pydantic import BaseModel, ConfigDict, Field


class ClassCount(BaseModel):
    instances: int
    images: int
    split: Literal["base", "novel"]
    frequency: Optional[Literal["frequent", "common", "rare"]] = None


class ClassAgnosticMetrics(BaseModel):
    """Class-agnostic APs; undefined values are reported as 0"""
    any_box: float
    novel_as_novel: float
    base_as_novel: float
    novel_as_base: float


class EvalReport(BaseModel):
    per_class_ap: Dict[int, float] = Field(default_factory=dict)
    map_base: Optional[float] = None
    map_novel: Optional[float] = None
    map_all: Optional[float] = None
    map_frequent: Optional[float] = None
    map_common: Optional[float] = None
    map_rare: Optional[float] = None
    iou_thresholds: List[float] = Field(default_factory=list)
    map_by_threshold: Dict[str, float] = Field(default_factory=dict)
    counts: Dict[int, ClassCount] = Field(default_factory=dict)
    class_names: Dict[int, str] = Field(default_factory=dict)
    class_agnostic: Optional[ClassAgnosticMetrics] = None

    model_config = ConfigDict(frozen=True)

    def summary(self) -> Dict[str, Optional[float]]:
        return {
            "map_all": self.map_all,
            "map_base": self.map_base,
            "map_novel": self.map_novel,
            "map_frequent": self.map_frequent,
            "map_common": self.map_common,
            "map_rare": self.map_rare,
        }
