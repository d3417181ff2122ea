from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

from ..schemas.detection import GroundTruthAnnotation
from ..schemas.geometry import BoxGeometry


@dataclass
class GroundTruthIndex:
    """Evaluation annotations grouped by image and by class"""
    per_image: Dict[int, List[Tuple[int, BoxGeometry]]] = field(default_factory=dict)
    instance_count: Dict[int, int] = field(default_factory=dict)
    image_frequency: Dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_annotations(cls, annotations: Iterable[GroundTruthAnnotation]) -> "GroundTruthIndex":
        per_image: Dict[int, List[Tuple[int, BoxGeometry]]] = defaultdict(list)
        instances: Dict[int, int] = defaultdict(int)
        images_per_class: Dict[int, set] = defaultdict(set)

        for ann in annotations:
            per_image[ann.image_id].append((ann.class_id, ann.box))
            instances[ann.class_id] += 1
            images_per_class[ann.class_id].add(ann.image_id)

        return cls(
            per_image=dict(per_image),
            instance_count=dict(sorted(instances.items())),
            image_frequency={c: len(images_per_class[c]) for c in sorted(images_per_class)},
        )

    @property
    def class_ids(self) -> List[int]:
        return sorted(self.instance_count)

    def boxes_for_class(self, class_id: int) -> Dict[int, List[BoxGeometry]]:
        """image_id -> boxes of one class"""
        return self.boxes_where(lambda cid: cid == class_id)

    def boxes_where(self, predicate) -> Dict[int, List[BoxGeometry]]:
        """image_id -> boxes whose class id satisfies predicate"""
        boxes: Dict[int, List[BoxGeometry]] = {}
        for image_id, objects in self.per_image.items():
            matching = [box for cid, box in objects if predicate(cid)]
            if matching:
                boxes[image_id] = matching
        return boxes
