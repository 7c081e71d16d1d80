"""
Subcommand handlers for the mmforge CLI
"""
import argparse
import asyncio
import json
import logging
import signal
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

from ..config import DEFAULT_TRAIN_SIZE, DEFAULT_VAL_SIZE, EXIT_CODES, LOG_FILE_NAME
from ..errors import MalformedDocument, UsageError
from ..models.dataset import DatasetManifest, ExportConfig, SubsetSpec, Supervision
from ..models.evaluation import CountPrediction, EvalReport
from ..models.pipeline import PipelineConfig
from ..services.coco_ingest import ground_truth_masks, load_dataset, validate_dataset, write_diagnostics
from ..services.dataset_store import (
    export_training_set, read_dataset, split, subset, write_export, write_manifest,
)
from ..services.eval_harness import (
    class_ious_from_masks, evaluate_counting, evaluate_vqa, load_class_ious,
    load_mask_predictions, load_taxonomy, seg_report,
)
from ..services.orchestrator import PipelineOrchestrator, make_gateway
from ..utils.canonical import canonical_json
from ..utils.formatters import FORMATS, format_sample, render_report
from ..utils.settings import default_config, load_pipeline_config

logger = logging.getLogger(__name__)

TASKS = ("counting", "vqa", "segmentation")

# Every flag the CLI accepts; parsers and --help are built from this table
FLAGS: Dict[str, Dict[str, Any]] = {
    "--config": {"type": Path, "metavar": "PATH", "help": "pipeline config file (TOML)"},
    "--mock": {"action": "store_true", "help": "use the seeded mock backends instead of remote endpoints"},
    "--seed": {"type": int, "help": "random seed (overrides the config file)"},
    "--limit": {"type": int, "metavar": "N", "help": "only the first N images in id order"},
    "--workers": {"type": int, "metavar": "N", "help": "concurrent samples (max_workers)"},
    "--supervision": {"choices": [s.value for s in Supervision], "help": "annotation types to export"},
    "--out": {"type": Path, "metavar": "PATH", "help": "output location"},
    "--task": {"choices": TASKS, "help": "evaluation task"},
    "--annotations": {"type": Path, "metavar": "PATH", "help": "COCO instances annotation file"},
    "--dataset": {"type": Path, "metavar": "PATH", "help": "dataset root (defaults to the config's output_root)"},
    "--predictions": {"type": Path, "metavar": "PATH", "help": "model predictions (JSONL, or JSON class->IoU)"},
    "--baseline": {"type": Path, "metavar": "PATH", "help": "baseline segmentation results"},
    "--ground-truth": {"type": Path, "metavar": "PATH", "help": "ground-truth masks JSONL for mask predictions"},
    "--taxonomy": {"type": Path, "metavar": "PATH", "help": "child<TAB>parent edge list for WUP"},
    "--format": {"choices": FORMATS, "default": "markdown", "help": "report format"},
    "--train-size": {"type": int, "default": DEFAULT_TRAIN_SIZE, "help": "training split size"},
    "--val-size": {"type": int, "default": DEFAULT_VAL_SIZE, "help": "validation split size"},
    "--size": {"type": int, "help": "subset size"},
    "--include-counting-qa": {"action": "store_true", "help": "add counting questions to VQA exports"},
    "--model": {"default": "ours", "help": "model label for report rows"},
    "--baseline-name": {"default": "Baseline", "help": "baseline column label for segmentation reports"},
    "--dataset-name": {"default": "", "help": "dataset label for report rows"},
    "--log-level": {"choices": ["DEBUG", "INFO", "WARNING", "ERROR"], "help": "log verbosity"},
}


class Command(NamedTuple):
    help: str
    flags: Tuple[str, ...]
    handler: Callable[[argparse.Namespace], int]
    positionals: Tuple[Tuple[str, Dict[str, Any]], ...] = ()


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


def _load_config(args: argparse.Namespace, required: bool = True) -> Optional[PipelineConfig]:
    if args.config is None:
        if required:
            raise UsageError(f"{args.command} requires --config")
        return None
    overrides = {
        "seed": getattr(args, "seed", None),
        "max_workers": getattr(args, "workers", None),
        "annotations_path": str(args.annotations) if getattr(args, "annotations", None) else None,
    }
    config = load_pipeline_config(args.config, overrides)
    if getattr(args, "out", None) is not None and args.command == "generate":
        config.output_root = Path(args.out)
    return config


def _dataset_root(args: argparse.Namespace) -> Path:
    if args.dataset is not None:
        return Path(args.dataset)
    config = _load_config(args, required=False)
    if config is None:
        raise UsageError(f"{args.command} requires --dataset or --config")
    return config.output_root


def _load_manifest(args: argparse.Namespace) -> Tuple[Path, DatasetManifest]:
    root = _dataset_root(args)
    dataset = read_dataset(root)
    logger.info(f"Loaded {len(dataset)} samples from {root}")
    return root, dataset


def _read_jsonl(path: Path, parse: Callable[[Dict[str, Any]], Any] = dict) -> List[Any]:
    """One JSON object per non-blank line, each passed through ``parse``"""
    records = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedDocument(f"{path}:{lineno}: not valid JSON ({e})") from e
            if not isinstance(data, dict):
                raise MalformedDocument(f"{path}:{lineno}: expected a JSON object")
            try:
                records.append(parse(data))
            except MalformedDocument as e:
                raise MalformedDocument(f"{path}:{lineno}: {e}") from e
    return records


# ingest

def ingest_command(args: argparse.Namespace) -> int:
    annotations = args.annotations
    if annotations is None:
        config = _load_config(args, required=False)
        annotations = config.annotations_path if config else None
    if annotations is None:
        raise UsageError("ingest requires --annotations or a config with annotations_path")

    index = load_dataset(annotations)
    violations = validate_dataset(index)
    print(f"images: {len(index.images)}")
    print(f"categories: {len(index.categories)}")
    print(f"annotations: {index.annotation_count()}")
    print(f"violations: {len(violations)}")
    for kind in sorted({v.kind.value for v in violations}):
        print(f"  {kind}: {sum(1 for v in violations if v.kind.value == kind)}")
    if args.out is not None:
        write_diagnostics(violations, args.out)
        print(f"diagnostics written to {args.out}")
    return EXIT_CODES["success"]


# generate

def setup_signal_handlers(on_signal: Callable[[], None]) -> Dict[int, Any]:
    """Route SIGINT/SIGTERM to a graceful drain; returns the previous handlers"""
    def signal_handler(signum, frame):
        logger.info(f"Received signal {signum}, draining in-flight samples...")
        on_signal()

    previous = {}
    for sig in (signal.SIGINT, signal.SIGTERM):
        previous[sig] = signal.signal(sig, signal_handler)
    return previous


def _restore_signal_handlers(previous: Dict[int, Any]) -> None:
    for sig, handler in previous.items():
        signal.signal(sig, handler)


def generate_command(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if config.annotations_path is None:
        raise UsageError("generate requires --annotations or annotations_path in the config")
    config.validate()

    index = load_dataset(config.annotations_path)
    image_ids = index.image_ids()
    if args.limit is not None:
        if args.limit < 0:
            raise UsageError("--limit must be >= 0")
        image_ids = image_ids[:args.limit]

    config.output_root.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(config.output_root / LOG_FILE_NAME)
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
    logging.getLogger().addHandler(file_handler)

    async def run():
        gateway = make_gateway(config, mock=args.mock)
        orchestrator = PipelineOrchestrator(config, gateway, index)
        previous = setup_signal_handlers(orchestrator.request_drain)
        try:
            return await orchestrator.run(image_ids)
        finally:
            _restore_signal_handlers(previous)
            await gateway.close()

    try:
        report = asyncio.run(run())
    finally:
        logging.getLogger().removeHandler(file_handler)
        file_handler.close()

    print(f"samples: {report.samples_total}  succeeded: {report.samples_succeeded}  "
          f"failed: {report.samples_failed}  cache hits: {report.cache_hits}  "
          f"wall time: {report.wall_time:.2f}s")
    for failure in report.failures:
        print(f"  image {failure.image_id} failed at {failure.stage}: {failure.error}")
    return EXIT_CODES["success"] if report.samples_failed == 0 else EXIT_CODES["partial_failure"]


# export / subset / split

def export_command(args: argparse.Namespace) -> int:
    _require(args, "supervision")
    root, dataset = _load_manifest(args)
    export = ExportConfig(supervision=args.supervision, include_counting_qa=args.include_counting_qa)
    records = export_training_set(dataset, export)
    path = write_export(records, args.out or root, export.supervision)
    print(f"{len(records)} records written to {path}")
    return EXIT_CODES["success"]


def subset_command(args: argparse.Namespace) -> int:
    _require(args, "size", "out")
    _, dataset = _load_manifest(args)
    derived = subset(dataset, SubsetSpec(size=args.size, seed=args.seed or 0))
    write_manifest(derived, args.out)
    print(f"subset of {len(derived)} samples written to {args.out}")
    return EXIT_CODES["success"]


def split_command(args: argparse.Namespace) -> int:
    _require(args, "out")
    _, dataset = _load_manifest(args)
    train, val = split(dataset, args.train_size, args.val_size, seed=args.seed or 0)
    write_manifest(train, Path(args.out) / "train")
    write_manifest(val, Path(args.out) / "val")
    print(f"train: {len(train)}  val: {len(val)}  written under {args.out}")
    return EXIT_CODES["success"]


# evaluate / report

def _evaluate_segmentation(args: argparse.Namespace) -> EvalReport:
    _require(args, "baseline", "predictions")
    if args.ground_truth is not None and args.annotations is not None:
        raise UsageError("evaluate takes --ground-truth or --annotations, not both")
    if args.ground_truth is not None or args.annotations is not None:
        baseline_masks = load_mask_predictions(args.baseline)
        ours_masks = load_mask_predictions(args.predictions)
        if args.ground_truth is not None:
            truth = load_mask_predictions(args.ground_truth)
        else:
            truth = ground_truth_masks(load_dataset(args.annotations), set(baseline_masks) | set(ours_masks))
        baseline = class_ious_from_masks(baseline_masks, truth)
        ours = class_ious_from_masks(ours_masks, truth)
    else:
        baseline = load_class_ious(args.baseline)
        ours = load_class_ious(args.predictions)
    return EvalReport(segmentation=seg_report(baseline, ours, baseline_label=args.baseline_name,
                                              ours_label=args.model))


def _evaluate_vqa(args: argparse.Namespace) -> EvalReport:
    _require(args, "predictions")
    root, dataset = _load_manifest(args)
    config = _load_config(args, required=False)
    if config is None:
        if not args.mock:
            raise UsageError("evaluate --task vqa needs --config with an embed endpoint, or --mock")
        config = default_config(output_root=root, seed=args.seed)
    taxonomy = load_taxonomy(args.taxonomy)
    predictions = _read_jsonl(args.predictions)

    async def run():
        gateway = make_gateway(config, mock=args.mock)
        try:
            return await evaluate_vqa(dataset, predictions, gateway, taxonomy, dataset_name=args.dataset_name,
                                      model=args.model, max_workers=config.max_workers)
        finally:
            await gateway.close()

    return EvalReport(vqa=[asyncio.run(run())])


def _evaluate_counting(args: argparse.Namespace) -> EvalReport:
    _require(args, "predictions")
    _, dataset = _load_manifest(args)
    predictions = _read_jsonl(args.predictions, CountPrediction.from_dict)
    return EvalReport(counting=[evaluate_counting(dataset, predictions, args.dataset_name, args.model)])


def _emit_report(report: EvalReport, args: argparse.Namespace) -> None:
    print(render_report(report, args.format), end="")
    if args.out is None:
        return
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_bytes(canonical_json(report.to_dict()))
    out.with_suffix(".md").write_text(render_report(report, "markdown"), encoding="utf-8")
    out.with_suffix(".csv").write_text(render_report(report, "csv"), encoding="utf-8")
    logger.info(f"Report written to {out.with_suffix('.json')} (+ .md, .csv)")


def evaluate_command(args: argparse.Namespace) -> int:
    _require(args, "task")
    evaluators = {
        "counting": _evaluate_counting,
        "vqa": _evaluate_vqa,
        "segmentation": _evaluate_segmentation,
    }
    _emit_report(evaluators[args.task](args), args)
    return EXIT_CODES["success"]


def report_command(args: argparse.Namespace) -> int:
    merged = EvalReport()
    for path in args.reports:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise MalformedDocument(f"{path}: not valid JSON ({e})") from e
        if not isinstance(data, dict):
            raise MalformedDocument(f"{path}: expected a report object")
        try:
            merged = merged.merge(EvalReport.from_dict(data))
        except MalformedDocument as e:
            raise MalformedDocument(f"{path}: {e}") from e
    _emit_report(merged, args)
    return EXIT_CODES["success"]


# inspect

def inspect_command(args: argparse.Namespace) -> int:
    root, dataset = _load_manifest(args)
    sample = dataset.by_id().get(args.image_id)
    if sample is None:
        print(f"image {args.image_id} is not in the dataset at {root}")
        return EXIT_CODES["partial_failure"]
    tracks = None
    if sample.tracks:
        tracks_path = root / sample.tracks[0].ref
        if tracks_path.is_file():
            tracks = json.loads(tracks_path.read_text(encoding="utf-8"))
    print(format_sample(sample, tracks))
    return EXIT_CODES["success"]


def get_commands() -> Dict[str, Command]:
    """Subcommand table: help text, accepted flags and handler"""
    common = ("--config", "--log-level")
    return {
        "ingest": Command("parse a COCO annotation file and report diagnostics",
                          common + ("--annotations", "--out"), ingest_command),
        "generate": Command("run the generation pipeline",
                            common + ("--mock", "--seed", "--limit", "--workers", "--annotations", "--out"),
                            generate_command),
        "export": Command("write a training export",
                          common + ("--dataset", "--supervision", "--include-counting-qa", "--out"),
                          export_command),
        "subset": Command("draw a seeded subset of a dataset",
                          common + ("--dataset", "--size", "--seed", "--out"), subset_command),
        "split": Command("split a dataset into train and val",
                         common + ("--dataset", "--train-size", "--val-size", "--seed", "--out"), split_command),
        "evaluate": Command("score predictions and write a report",
                            common + ("--task", "--mock", "--seed", "--dataset", "--predictions", "--baseline",
                                      "--ground-truth", "--annotations", "--taxonomy", "--format", "--model",
                                      "--baseline-name", "--dataset-name", "--out"),
                            evaluate_command),
        "report": Command("render one or more report files", ("--log-level", "--format", "--out"), report_command,
                          (("reports", {"nargs": "+", "type": Path, "metavar": "REPORT",
                                        "help": "report JSON written by evaluate"}),)),
        "inspect": Command("show one generated sample", common + ("--dataset",), inspect_command,
                           (("image_id", {"type": int, "metavar": "IMAGE_ID", "help": "sample to show"}),)),
    }
