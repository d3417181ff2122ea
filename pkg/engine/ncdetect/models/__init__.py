from .records import BasePrediction, FeatureRecord, Source
from .results import ConfusionCounts, KMeansResult, LogitVector
from .ground_truth import GroundTruthIndex

__all__ = [
    "BasePrediction", "FeatureRecord", "Source",
    "ConfusionCounts", "KMeansResult", "LogitVector",
    "GroundTruthIndex",
]
