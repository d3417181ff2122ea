"""
Run manifests for pipeline stages.

Every stage leaves a manifest next to its artifacts recording what ran,
with which configuration and seed, how long it took and the content hash
of each input and output. Artifacts never embed timestamps; manifests do.
"""
import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import psutil

logger = logging.getLogger(__name__)


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_sha256(config_json: str) -> str:
    return hashlib.sha256(config_json.encode("utf-8")).hexdigest()


class StageRecorder:
    """Collects inputs, outputs and timing for one stage run"""

    def __init__(self, stage: str, config_hash: str, seed: int):
        self.stage = stage
        self.config_hash = config_hash
        self.seed = seed
        self.inputs: Dict[str, str] = {}
        self.outputs: Dict[str, str] = {}
        self.details: Dict[str, Any] = {}
        self.duration_s: Optional[float] = None

    def add_input(self, name: str, path: Path):
        self.inputs[name] = file_sha256(Path(path))

    def add_output(self, name: str, path: Path):
        self.outputs[name] = file_sha256(Path(path))

    def to_dict(self) -> Dict[str, Any]:
        process = psutil.Process(os.getpid())
        memory = process.memory_info()
        return {
            "stage": self.stage,
            "config_sha256": self.config_hash,
            "seed": self.seed,
            "duration_s": round(self.duration_s or 0.0, 4),
            "resources": {
                "rss_mb": round(memory.rss / (1024**2), 2),
                "cpu_count": psutil.cpu_count(),
            },
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "details": self.details,
        }


@contextmanager
def record_stage(output_dir: Path, stage: str, config_hash: str, seed: int) -> Iterator[StageRecorder]:
    """
    Time a stage and write manifests/<stage>.json when it completes.

    Usage:
        with record_stage(out, "discover", cfg_hash, seed) as rec:
            ...
            rec.add_output("prototypes", path)
    """
    recorder = StageRecorder(stage, config_hash, seed)
    started = time.perf_counter()
    yield recorder
    recorder.duration_s = time.perf_counter() - started

    manifest_dir = Path(output_dir) / "manifests"
    manifest_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = manifest_dir / f"{stage}.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(recorder.to_dict(), f, indent=2)
        f.write("\n")

    logger.info(f"Stage '{stage}' finished in {recorder.duration_s:.2f}s ({len(recorder.outputs)} artifacts)")
