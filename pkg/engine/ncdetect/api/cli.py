"""
Command-line surface.

Every stage is a subcommand taking the same configuration options:
a YAML config file, a preset, the seed, a thread cap, the output directory
and flag overrides for the ablation switches. Failures exit with the code
of the exception that stopped the stage.
"""
import logging
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, Optional

import typer

from ..config import settings
from ..core.exceptions import handle_stage_exception
from ..core.manifest import config_sha256, record_stage
from ..schemas.config import EvaluationConfig, PipelineConfig, load_pipeline_config
from ..services.pipeline_service import PipelineService
from ..services.synthgen import generate, write_world

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="ncdetect",
    help="Novel class discovery and detection over precomputed box features",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOpt = Annotated[Optional[Path], typer.Option("--config", "-c", help="YAML pipeline config")]
PresetOpt = Annotated[Optional[str], typer.Option("--preset", help="Hyperparameter preset: voc or lvis")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="Random seed")]
ThreadsOpt = Annotated[Optional[int], typer.Option("--threads", help="Worker thread cap")]
OutputOpt = Annotated[Optional[Path], typer.Option("--output-dir", "-o", help="Artifact directory")]
QOpt = Annotated[Optional[int], typer.Option("--q", help="Number of novel clusters")]
MaxIterOpt = Annotated[Optional[int], typer.Option("--max-iter", help="k-means iteration cap")]
RetriesOpt = Annotated[Optional[int], typer.Option("--retries", help="k-means restarts")]
MetricOpt = Annotated[Optional[str], typer.Option("--metric", help="inv_sq_euclidean, dot_product or cosine")]
GammaOpt = Annotated[Optional[int], typer.Option("--gamma", help="Exponent of the inverse squared distance")]
ProbNormOpt = Annotated[Optional[str], typer.Option("--prob-norm", help="l1 or softmax")]
BackgroundOpt = Annotated[
    Optional[bool],
    typer.Option("--background-classifier/--no-background-classifier", help="Background classifier rule"),
]
EmissionOpt = Annotated[Optional[str], typer.Option("--emission", help="per_class or argmax")]
VariantOpt = Annotated[Optional[str], typer.Option("--variant", help="default, all_clusters or gt_prototypes")]
MappingOpt = Annotated[Optional[str], typer.Option("--mapping-method", help="hungarian or embedding")]
KappaOpt = Annotated[Optional[int], typer.Option("--kappa", help="Top-kappa proposals for embedding mapping")]
ScoreOpt = Annotated[Optional[float], typer.Option("--score-threshold", help="Minimum detection score (exclusive)")]
TopMOpt = Annotated[Optional[int], typer.Option("--top-m", help="Detections kept per image")]
CocoOpt = Annotated[bool, typer.Option("--coco-thresholds", help="Average AP over IoU 0.50:0.05:0.95")]


def configure_logging(level: str):
    logging.basicConfig(level=level.upper(), format=settings.log_format, force=True)


@app.callback()
def main(
    log_level: Annotated[Optional[str], typer.Option("--log-level", help="Logging level")] = None,
):
    configure_logging(log_level or settings.log_level)


def _set(tree: Dict[str, Any], dotted: str, value: Any):
    if value is None:
        return
    node = tree
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def build_overrides(
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    output_dir: Optional[Path] = None,
    q: Optional[int] = None,
    max_iter: Optional[int] = None,
    retries: Optional[int] = None,
    metric: Optional[str] = None,
    gamma: Optional[int] = None,
    prob_norm: Optional[str] = None,
    background_classifier: Optional[bool] = None,
    emission: Optional[str] = None,
    variant: Optional[str] = None,
    mapping_method: Optional[str] = None,
    kappa: Optional[int] = None,
    score_threshold: Optional[float] = None,
    top_m: Optional[int] = None,
    coco_thresholds: bool = False,
) -> Dict[str, Any]:
    """Nested override dict from command-line flags; unset flags are left out"""
    overrides: Dict[str, Any] = {}
    _set(overrides, "seed", seed)
    _set(overrides, "kmeans.seed", seed)
    _set(overrides, "threads", threads)
    _set(overrides, "output_dir", str(output_dir) if output_dir is not None else None)
    _set(overrides, "kmeans.q", q)
    _set(overrides, "kmeans.max_iter", max_iter)
    _set(overrides, "kmeans.retries", retries)
    _set(overrides, "inference.metric.kind", metric)
    _set(overrides, "inference.metric.gamma", gamma)
    _set(overrides, "inference.prob_norm", prob_norm)
    _set(overrides, "inference.background_classifier", background_classifier)
    _set(overrides, "inference.emission", emission)
    _set(overrides, "variant", variant)
    _set(overrides, "mapping.method", mapping_method)
    _set(overrides, "mapping.kappa", kappa)
    _set(overrides, "postprocess.score_threshold", score_threshold)
    _set(overrides, "postprocess.top_m", top_m)
    if coco_thresholds:
        _set(overrides, "evaluation.iou_thresholds", EvaluationConfig.coco_thresholds())
    return overrides


def run_stage(stage: str, action: Callable[[PipelineConfig], Any], config_path, preset, overrides) -> Any:
    """Load the config, run one stage and turn failures into exit codes"""
    try:
        config = load_pipeline_config(config_path, overrides, preset)
        if config.threads == 1 and "threads" not in overrides:
            config = config.model_copy(update={"threads": settings.default_threads})
        logger.info(f"[{stage}] starting (variant={config.variant}, seed={config.seed}, output={config.output_dir})")
        return action(config)
    except Exception as exc:
        code = handle_stage_exception(stage, exc)
        message = getattr(exc, "message", str(exc))
        typer.echo(f"[{stage}] failed: {message}", err=True)
        raise typer.Exit(code)


def _stage_command(stage: str, method: str, summary: Callable[[Any], str]):
    def command(
        config: ConfigOpt = None,
        preset: PresetOpt = None,
        seed: SeedOpt = None,
        threads: ThreadsOpt = None,
        output_dir: OutputOpt = None,
        q: QOpt = None,
        max_iter: MaxIterOpt = None,
        retries: RetriesOpt = None,
        metric: MetricOpt = None,
        gamma: GammaOpt = None,
        prob_norm: ProbNormOpt = None,
        background_classifier: BackgroundOpt = None,
        emission: EmissionOpt = None,
        variant: VariantOpt = None,
        mapping_method: MappingOpt = None,
        kappa: KappaOpt = None,
        score_threshold: ScoreOpt = None,
        top_m: TopMOpt = None,
        coco_thresholds: CocoOpt = False,
    ):
        overrides = build_overrides(
            seed, threads, output_dir, q, max_iter, retries, metric, gamma, prob_norm,
            background_classifier, emission, variant, mapping_method, kappa, score_threshold, top_m,
            coco_thresholds,
        )
        result = run_stage(stage, lambda cfg: getattr(PipelineService(cfg), method)(), config, preset, overrides)
        typer.echo(summary(result))

    return command


def _summarize_report(report) -> str:
    lines = []
    for key, value in report.summary().items():
        lines.append(f"{key}: {'n/a' if value is None else f'{100 * value:.1f}'}")
    return "\n".join(lines)


app.command("prototypes", help="Compute base prototypes from labeled GT features")(
    _stage_command("prototypes", "build_base_prototypes", lambda base: f"{len(base)} base prototypes")
)
app.command("discover", help="Cluster discovery proposals into novel prototypes")(
    _stage_command("discover", "discover", lambda p: f"prototype set: K={p.k}, Q={p.q}")
)
app.command("infer", help="Classify and post-process test proposals")(
    _stage_command("infer", "infer", lambda dets: f"{len(dets)} detections")
)
app.command("map", help="Map clusters to semantic classes")(
    _stage_command("map", "map_clusters", lambda m: f"{len(m)} clusters mapped ({m.method.value})")
)
app.command("eval", help="Evaluate mapped detections against test GT")(
    _stage_command("eval", "evaluate", _summarize_report)
)
app.command("pipeline", help="Run every stage in order")(
    _stage_command("pipeline", "run_all", _summarize_report)
)


@app.command("synth")
def synth(
    output_dir: Annotated[Path, typer.Argument(help="Directory for the generated world")],
    config: ConfigOpt = None,
    seed: SeedOpt = None,
    dim: Annotated[Optional[int], typer.Option("--dim", help="Feature dimension")] = None,
    n_base: Annotated[Optional[int], typer.Option("--n-base", help="Base classes")] = None,
    n_novel: Annotated[Optional[int], typer.Option("--n-novel", help="Novel classes")] = None,
    sigma: Annotated[Optional[float], typer.Option("--sigma", help="Per-dimension class noise")] = None,
    samples_per_class: Annotated[Optional[int], typer.Option("--samples-per-class")] = None,
    clutter_fraction: Annotated[Optional[float], typer.Option("--clutter-fraction")] = None,
    crop_fraction: Annotated[Optional[float], typer.Option("--crop-fraction", help="Clutter share of object crops")] = None,
    flip_prob: Annotated[Optional[float], typer.Option("--flip-prob", help="Base head flip probability")] = None,
    test_images: Annotated[Optional[int], typer.Option("--test-images")] = None,
    long_tailed: Annotated[bool, typer.Option("--long-tailed", help="Zipf class distribution")] = False,
    zipf_s: Annotated[Optional[float], typer.Option("--zipf-s")] = None,
):
    """Generate a synthetic feature world and its pipeline config"""
    overrides: Dict[str, Any] = {}
    for key, value in (
        ("seed", seed), ("dim", dim), ("n_base", n_base), ("n_novel", n_novel), ("sigma", sigma),
        ("samples_per_class", samples_per_class), ("clutter_fraction", clutter_fraction),
        ("crop_fraction", crop_fraction), ("flip_prob", flip_prob), ("test_images", test_images), ("zipf_s", zipf_s),
    ):
        _set(overrides, f"world.{key}", value)
    if long_tailed:
        _set(overrides, "world.label_distribution", "long_tailed")
    _set(overrides, "seed", seed)

    def action(cfg: PipelineConfig):
        with record_stage(output_dir, "synth", config_sha256(cfg.world.model_dump_json()), cfg.world.seed) as rec:
            write_world(generate(cfg.world), output_dir)
            for path in sorted(Path(output_dir).iterdir()):
                if path.is_file():
                    rec.add_output(path.name, path)
            rec.details = cfg.world.model_dump()
        return cfg.world

    world = run_stage("synth", action, config, None, overrides)
    typer.echo(f"world written to {output_dir} ({world.n_base} base + {world.n_novel} novel classes)")


if __name__ == "__main__":
    app()
