"""
Pipeline stages: prototypes, discover, infer, map, eval.

Each stage reads its inputs from the configured paths or from artifacts
of earlier stages in the output directory, writes its artifact and leaves
a manifest. Running the stages one by one gives the same artifacts as
run_all.
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from ..core.exceptions import DimensionMismatchError, DomainError, MissingInputError
from ..core.manifest import config_sha256, record_stage
from ..core.parallel import ordered_map
from ..models.ground_truth import GroundTruthIndex
from ..models.records import FeatureRecord
from ..schemas.config import PipelineConfig
from ..schemas.detection import ClassInfo, Detection
from ..schemas.mapping import LabelMapping, MappingMethod
from ..schemas.prototypes import PrototypeSet
from ..schemas.report import EvalReport
from . import feature_io
from .assignment import apply_mapping, build_confusion, embedding_assign, hungarian_assign, nearest_text_label
from .classifier import classify_image
from .evaluation import write_report
from .evaluation import evaluate as evaluate_detections
from .postprocess import postprocess_image
from .prototypes import assemble, compute_base_prototypes, run_discovery

logger = logging.getLogger(__name__)

BASE_PROTOTYPES = "base_prototypes.jsonl"
PROTOTYPES = "prototypes.jsonl"
DETECTIONS = "detections.jsonl"
MAPPING = "mapping.jsonl"
MAPPED_DETECTIONS = "mapped_detections.jsonl"
REPORT_JSONL = "report.jsonl"
REPORT_TEXT = "report.txt"


class PipelineService:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.config_hash = config_sha256(config.canonical_json())

    def artifact(self, name: str) -> Path:
        return self.output_dir / name

    def _require_artifact(self, name: str, produced_by: str) -> Path:
        path = self.artifact(name)
        if not path.exists():
            raise MissingInputError(f"Artifact '{name}' (run '{produced_by}' first)", path)
        return path

    def _stage(self, name: str):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return record_stage(self.output_dir, name, self.config_hash, self.config.seed)

    def _class_table(self) -> List[ClassInfo]:
        return feature_io.read_class_table(self.config.paths.require("classes")["classes"])

    def _warn_unprototyped_classes(self, base: List[Tuple[int, np.ndarray]]):
        if self.config.variant == "all_clusters" or not Path(self.config.paths.classes).exists():
            return
        covered = {class_id for class_id, _ in base}
        missing = [c.class_id for c in self._class_table() if not c.novel and c.class_id not in covered]
        if missing:
            logger.warning(f"Base classes without a prototype: {missing}")

    def build_base_prototypes(self) -> List[Tuple[int, np.ndarray]]:
        """Class prototypes from labeled base GT features (none for all_clusters)"""
        with self._stage("prototypes") as rec:
            if self.config.variant == "all_clusters":
                base = []
                logger.info("all_clusters variant: skipping base prototypes")
            else:
                path = self.config.paths.require("base_gt")["base_gt"]
                rec.add_input("base_gt", path)
                records = feature_io.read_feature_file(path)
                base = compute_base_prototypes(records)

            out = self.artifact(BASE_PROTOTYPES)
            feature_io.write_base_prototypes(out, base)
            rec.add_output("base_prototypes", out)
            rec.details = {"variant": self.config.variant, "k": len(base)}
        return base

    def _prototype_metadata(self) -> Dict:
        return {
            "variant": self.config.variant,
            "seed": self.config.seed,
            "kmeans": self.config.kmeans.model_dump(),
        }

    def discover(self) -> PrototypeSet:
        """Assemble the prototype set: base prototypes plus discovered clusters"""
        with self._stage("discover") as rec:
            base_path = self._require_artifact(BASE_PROTOTYPES, "prototypes")
            rec.add_input("base_prototypes", base_path)
            base = feature_io.read_base_prototypes(base_path)
            self._warn_unprototyped_classes(base)
            metadata = self._prototype_metadata()

            if self.config.variant == "gt_prototypes":
                novel_ids = {c.class_id for c in self._class_table() if c.novel}
                path = self.config.paths.require("discovery_gt")["discovery_gt"]
                rec.add_input("discovery_gt", path)
                novel_gt = [r for r in feature_io.read_feature_file(path) if r.gt_class in novel_ids]
                protos = assemble(base + compute_base_prototypes(novel_gt), [], metadata)
            else:
                path = self.config.paths.require("discovery_rpn")["discovery_rpn"]
                rec.add_input("discovery_rpn", path)
                records = feature_io.read_feature_file(path)
                result = run_discovery(records, self.config.kmeans, threads=self.config.threads)
                metadata["inertia"] = result.inertia
                metadata["restart_chosen"] = result.restart_chosen
                metadata["iterations_run"] = result.iterations_run
                protos = assemble(base, list(result.centers), metadata)

            out = self.artifact(PROTOTYPES)
            feature_io.write_prototypes(out, protos)
            rec.add_output("prototypes", out)
            rec.details = {"variant": self.config.variant, "k": protos.k, "q": protos.q}

        logger.info(f"Prototype set: K={protos.k} labeled, Q={protos.q} clusters")
        return protos

    def infer(self) -> List[Detection]:
        """Classify and post-process every test image"""
        with self._stage("infer") as rec:
            proto_path = self._require_artifact(PROTOTYPES, "discover")
            test_path = self.config.paths.require("test_rpn")["test_rpn"]
            rec.add_input("prototypes", proto_path)
            rec.add_input("test_rpn", test_path)

            protos = feature_io.read_prototypes(proto_path)
            records = feature_io.read_feature_file(test_path)
            if records and records[0].dim != protos.dim:
                raise DimensionMismatchError(protos.dim, records[0].dim, "test feature")

            inference = self.config.inference
            threshold = self.config.postprocess.score_threshold
            if inference.min_candidate_score < threshold:
                inference = inference.model_copy(update={"min_candidate_score": threshold})

            by_image: Dict[int, List[FeatureRecord]] = defaultdict(list)
            for record in records:
                by_image[record.image_id].append(record)

            def run_image(image_id: int) -> List[Detection]:
                candidates = classify_image(by_image[image_id], protos, inference)
                dets = [
                    Detection(image_id=image_id, box=record.box, label=label, score=score)
                    for record, label, score in candidates
                ]
                return postprocess_image(dets, self.config.postprocess)

            detections = [d for dets in ordered_map(run_image, sorted(by_image), self.config.threads) for d in dets]

            out = self.artifact(DETECTIONS)
            feature_io.write_detections(out, detections)
            rec.add_output("detections", out)
            rec.details = {"images": len(by_image), "proposals": len(records), "detections": len(detections)}

        logger.info(f"Inference: {len(detections)} detections over {len(by_image)} images")
        return detections

    def _hungarian_mapping(self, protos: PrototypeSet, rec) -> LabelMapping:
        path = self.config.paths.require("test_gt_features")["test_gt_features"]
        rec.add_input("test_gt_features", path)
        records = feature_io.read_feature_file(path)
        if not self.config.mapping.include_base:
            novel_ids = {c.class_id for c in self._class_table() if c.novel}
            records = [r for r in records if r.gt_class in novel_ids]
        if not records:
            raise DomainError("no GT features available for cluster assignment")
        counts = build_confusion(records, protos, self.config.inference.metric)
        return hungarian_assign(counts, self.config.mapping.tie_break_limit)

    def _embedding_mapping(self, protos: PrototypeSet, rec) -> LabelMapping:
        paths = self.config.paths.require("discovery_rpn", "box_embeddings", "text_embeddings")
        for name, path in paths.items():
            rec.add_input(name, path)
        records = feature_io.read_feature_file(paths["discovery_rpn"])
        indices, embeddings = feature_io.read_embedding_file(paths["box_embeddings"])
        if np.any(indices >= len(records)):
            raise DomainError("box embeddings reference records beyond the discovery file")
        texts = feature_io.read_text_embeddings(paths["text_embeddings"])
        labels = nearest_text_label(embeddings, texts)
        boxes = [(records[int(i)].feature, int(label)) for i, label in zip(indices, labels)]
        return embedding_assign(protos, boxes, self.config.mapping.kappa, threads=self.config.threads)

    def map_clusters(self) -> LabelMapping:
        """Offline cluster-to-class mapping, run once after discovery"""
        with self._stage("map") as rec:
            proto_path = self._require_artifact(PROTOTYPES, "discover")
            rec.add_input("prototypes", proto_path)
            protos = feature_io.read_prototypes(proto_path)

            method = self.config.mapping.method
            if protos.q == 0:
                logger.info("Prototype set has no clusters; writing an empty mapping")
                mapping = LabelMapping(entries={}, method=MappingMethod.HUNGARIAN)
                if method == "embedding":
                    mapping = LabelMapping(entries={}, method=MappingMethod.EMBEDDING, kappa=self.config.mapping.kappa)
            elif method == "embedding":
                mapping = self._embedding_mapping(protos, rec)
            else:
                mapping = self._hungarian_mapping(protos, rec)

            out = self.artifact(MAPPING)
            feature_io.write_mapping(out, mapping)
            rec.add_output("mapping", out)
            rec.details = {"method": method, "mapped_clusters": len(mapping), "q": protos.q}
        return mapping

    def evaluate(self) -> EvalReport:
        """Apply the mapping to the detections and score them against test GT"""
        with self._stage("eval") as rec:
            det_path = self._require_artifact(DETECTIONS, "infer")
            map_path = self._require_artifact(MAPPING, "map")
            paths = self.config.paths.require("test_gt", "classes")
            rec.add_input("detections", det_path)
            rec.add_input("mapping", map_path)
            for name, path in paths.items():
                rec.add_input(name, path)

            mapped = apply_mapping(feature_io.read_detections(det_path), feature_io.read_mapping(map_path))
            mapped_path = self.artifact(MAPPED_DETECTIONS)
            feature_io.write_detections(mapped_path, mapped)

            gt_index = GroundTruthIndex.from_annotations(feature_io.read_annotations(paths["test_gt"]))
            classes = feature_io.read_class_table(paths["classes"])
            report = evaluate_detections(mapped, gt_index, classes, self.config.evaluation, self.config.threads)

            jsonl_path, text_path = self.artifact(REPORT_JSONL), self.artifact(REPORT_TEXT)
            write_report(report, jsonl_path, text_path)
            for name, path in (("mapped_detections", mapped_path), ("report", jsonl_path), ("report_text", text_path)):
                rec.add_output(name, path)
            rec.details = report.summary()
        return report

    def run_all(self) -> EvalReport:
        self.build_base_prototypes()
        self.discover()
        self.infer()
        self.map_clusters()
        return self.evaluate()
