from dataclasses import dataclass, field
from typing import List

import numpy as np


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations_run: int
    restart_chosen: int
    # Inertia after every Lloyd iteration of the chosen restart
    inertia_trace: List[float] = field(default_factory=list)
    restart_inertias: List[float] = field(default_factory=list)

    @property
    def q(self) -> int:
        return int(self.centers.shape[0])

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.q)


@dataclass(frozen=True)
class LogitVector:
    """One background logit, K base logits and Q cluster logits"""
    background: float
    per_base: np.ndarray
    per_cluster: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.background], self.per_base, self.per_cluster])

    def __len__(self) -> int:
        return 1 + len(self.per_base) + len(self.per_cluster)

    @classmethod
    def from_array(cls, values: np.ndarray, k: int) -> "LogitVector":
        values = np.asarray(values, dtype=np.float64)
        return cls(float(values[0]), values[1:1 + k].copy(), values[1 + k:].copy())


@dataclass(frozen=True)
class ConfusionCounts:
    """counts[row][cluster] for GT features of label_ids[row]"""
    matrix: np.ndarray
    label_ids: List[int]
    cluster_count: int

    @property
    def total(self) -> int:
        return int(self.matrix.sum())
