from enum import Enum
from typing import Dict, Optional
from pydantic import BaseModel, ConfigDict, Field, model_validator


class MappingMethod(str, Enum):
    HUNGARIAN = "hungarian"
    EMBEDDING = "embedding"


class LabelMapping(BaseModel):
    """Partial map from cluster index to semantic class id"""
    entries: Dict[int, int] = Field(default_factory=dict)
    method: MappingMethod = MappingMethod.HUNGARIAN
    kappa: Optional[int] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def validate_mapping(self):
        if any(cluster < 0 or class_id < 0 for cluster, class_id in self.entries.items()):
            raise ValueError('cluster indices and class ids must be non-negative')
        if self.method == MappingMethod.HUNGARIAN:
            class_ids = list(self.entries.values())
            if len(set(class_ids)) != len(class_ids):
                raise ValueError('hungarian mappings assign one cluster per class')
            if self.kappa is not None:
                raise ValueError('kappa only applies to embedding mappings')
        elif self.kappa is None or self.kappa < 1:
            raise ValueError('embedding mappings need a positive kappa')
        return self

    def lookup(self, cluster: int) -> Optional[int]:
        return self.entries.get(cluster)

    def __len__(self) -> int:
        return len(self.entries)
