#!/usr/bin/env python3
"""
Ablation sweep on a synthetic world.

Runs the default configuration against the background-classifier,
all-clusters and cluster-count variations and prints one row per run.

    uv run scripts/ablations.py runs/ablations --flip-prob 0.1 --clutter-fraction 0.3
"""
import logging
from pathlib import Path
from typing import Annotated, Any, Dict, List, Tuple

import typer

from ncdetect.schemas.config import PathsConfig, PipelineConfig
from ncdetect.schemas.world import WorldConfig
from ncdetect.services.pipeline_service import PipelineService
from ncdetect.services.synthgen import generate, write_world

logger = logging.getLogger("ablations")

app = typer.Typer(add_completion=False)


def run(paths: PathsConfig, output_dir: Path, seed: int, **overrides: Any):
    config = PipelineConfig(paths=paths, output_dir=str(output_dir), seed=seed, **overrides)
    return PipelineService(config).run_all()


def _pct(value) -> str:
    return "   n/a" if value is None else f"{100 * value:6.1f}"


@app.command()
def main(
    output_dir: Annotated[Path, typer.Argument(help="Working directory for the world and runs")],
    seed: Annotated[int, typer.Option(help="World and k-means seed")] = 0,
    flip_prob: Annotated[float, typer.Option(help="Base head flip probability")] = 0.1,
    clutter_fraction: Annotated[float, typer.Option(help="Share of clutter proposals")] = 0.3,
    q: Annotated[int, typer.Option(help="Clusters for the default run")] = 50,
    threads: Annotated[int, typer.Option(help="Worker threads")] = 1,
):
    logging.basicConfig(level="INFO", format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    world = WorldConfig(seed=seed, flip_prob=flip_prob, clutter_fraction=clutter_fraction)
    paths = write_world(generate(world), output_dir / "world")

    runs: List[Tuple[str, Dict[str, Any]]] = [
        ("default", {"kmeans": {"q": q}}),
        ("no background classifier", {"kmeans": {"q": q}, "inference": {"background_classifier": False}}),
        ("all clusters (Q=20)", {"kmeans": {"q": 20}, "variant": "all_clusters"}),
        ("default (Q=20)", {"kmeans": {"q": 20}}),
        ("gt prototypes", {"variant": "gt_prototypes"}),
    ]
    runs += [(f"Q={sweep}", {"kmeans": {"q": sweep}}) for sweep in (10, 20, 50, 100)]

    rows = []
    for name, overrides in runs:
        slug = name.replace(" ", "_").replace("(", "").replace(")", "").replace("=", "")
        report = run(paths, output_dir / slug, seed, threads=threads, **overrides)
        rows.append((name, report))

    typer.echo(f"\n{'run':<28}{'all':>8}{'base':>8}{'novel':>8}")
    for name, report in rows:
        typer.echo(f"{name:<28}{_pct(report.map_all):>8}{_pct(report.map_base):>8}{_pct(report.map_novel):>8}")


if __name__ == "__main__":
    app()
