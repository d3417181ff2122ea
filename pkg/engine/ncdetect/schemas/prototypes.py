import math
from typing import Any, Dict, List
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class BasePrototype(BaseModel):
    class_id: int
    vector: List[float]

    model_config = ConfigDict(frozen=True)


class PrototypeSet(BaseModel):
    """K labeled prototypes plus Q cluster centers sharing one feature space"""
    dim: int
    base: List[BasePrototype] = Field(default_factory=list)
    novel: List[List[float]] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode='after')
    def validate_set(self):
        if self.dim < 1:
            raise ValueError('prototype dimension must be positive')
        if not self.base and not self.novel:
            raise ValueError('a prototype set needs at least one prototype')

        class_ids = [p.class_id for p in self.base]
        if len(set(class_ids)) != len(class_ids):
            raise ValueError('base prototype class ids must be unique')

        vectors = [p.vector for p in self.base] + list(self.novel)
        for vector in vectors:
            if len(vector) != self.dim:
                raise ValueError(f'prototype of dimension {len(vector)} in a set of dimension {self.dim}')
            if not all(math.isfinite(x) for x in vector):
                raise ValueError('prototype entries must be finite')
        return self

    @property
    def k(self) -> int:
        return len(self.base)

    @property
    def q(self) -> int:
        return len(self.novel)

    @property
    def base_class_ids(self) -> List[int]:
        return [p.class_id for p in self.base]

    def base_matrix(self) -> np.ndarray:
        if not self.base:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.asarray([p.vector for p in self.base], dtype=np.float64)

    def novel_matrix(self) -> np.ndarray:
        if not self.novel:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.asarray(self.novel, dtype=np.float64)

    def matrix(self) -> np.ndarray:
        """All prototypes stacked: base classes first, then clusters"""
        return np.vstack([self.base_matrix(), self.novel_matrix()])
