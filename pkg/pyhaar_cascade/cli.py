import argparse
import json
import logging
import os
import sys
from dataclasses import MISSING, fields
from typing import Dict, List, Optional, Sequence

from .methods.boosting import BoostingAbort, DegenerateSampleSet
from .methods.cascade import CascadeFormatError, CascadeTrainingAbort, _cascade_stats, _load_cascade, _save_cascade
from .methods.cascade import _train_cascade
from .methods.dataset import (
    AnnotationBoundsError,
    AnnotationParseError,
    MANIFEST_NAME,
    UnknownImageError,
    _evaluate,
    _load_annotations,
    _load_images,
    _operating_points,
    _operating_points_csv,
    _resolve,
    _save_dataset,
    _synth_dataset,
)
from .methods.detector import ImageTooSmall, _detect
from .methods.features import InvalidFeature
from .methods.imaging import PgmFormatError, RectOutOfBounds, _draw_rect, _load_frames, _load_pgm, _save_frames
from .methods.imaging import _save_pgm
from .methods.tracking import InconsistentFrames, ShapeMismatch, _run_pipeline
from .run_config import SECTIONS, RunConfig
from .types.sample import POSITIVE, Sample
from .types.virtual_line import VirtualLine

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ABORT = 3
DEFAULT_CASCADE = "cascade.json"

USAGE_ERRORS = (
    RunConfig.ConfigError,
    PgmFormatError,
    RectOutOfBounds,
    CascadeFormatError,
    InvalidFeature,
    AnnotationParseError,
    AnnotationBoundsError,
    UnknownImageError,
    ImageTooSmall,
    InconsistentFrames,
    ShapeMismatch,
    OSError,
)
ABORT_ERRORS = (BoostingAbort, CascadeTrainingAbort, DegenerateSampleSet)


class UsageError(Exception):
    """Exception raised for missing or unusable command-line inputs."""

    def __init__(self, message="Invalid command-line input"):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parse_line(text: str) -> Dict:
    """`x1,y1,x2,y2[,sign]` to a VirtualLine dict."""
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x1,y1,x2,y2[,sign], got {text!r}")
    if len(values) not in (4, 5):
        raise argparse.ArgumentTypeError(f"expected x1,y1,x2,y2[,sign], got {text!r}")
    sign = int(values[4]) if len(values) == 5 else 1
    return VirtualLine((values[0], values[1]), (values[2], values[3]), sign).to_dict()


def _field_parser(name: str, default):
    if name == "line":
        return _parse_line
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float) or default is None:
        return float
    return str


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """
    One `--<section>.<field>` flag per config field, its default shown in the help.
    """
    for section, config_type in SECTIONS.items():
        group = parser.add_argument_group(f"{section} settings")
        for f in fields(config_type):
            default = f.default if f.default is not MISSING else None
            group.add_argument(
                f"--{section}.{f.name.replace('_', '-')}",
                dest=f"{section}.{f.name}",
                type=_field_parser(f.name, default),
                default=None,
                metavar=f.name.upper(),
                help=f"(default: {default})",
            )


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: none, built-in defaults)")
    common.add_argument("--seed", type=int, default=None, help="Seed for training and synthesis (default: 0)")
    common.add_argument("--workers", type=int, default=None, help="Worker threads, 0 for one per CPU (default: 1)")
    common.add_argument("--verbose", action="store_true", help="Log debug messages")

    parser = argparse.ArgumentParser(prog="pyhaar", description="Haar cascade training, detection and counting")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", parents=[common], help="Train a cascade")
    train.add_argument("--dataset", help="Dataset directory written by `synth` (default: none)")
    train.add_argument("--positives", help="Directory of base-window positive crops (default: none)")
    train.add_argument("--negatives", help="Directory of object-free images (default: none)")
    train.add_argument("--out", help=f"Cascade file to write (default: {DEFAULT_CASCADE})")

    detect = commands.add_parser("detect", parents=[common], help="Detect objects in images")
    detect.add_argument("images", nargs="*", help="PGM files or directories of PGM files")
    detect.add_argument("--cascade", help=f"Cascade file (default: {DEFAULT_CASCADE})")
    detect.add_argument("--draw", help="Write copies with detection outlines to this directory (default: none)")

    evaluate = commands.add_parser("eval", parents=[common], help="Evaluate a cascade on an annotated set")
    evaluate.add_argument("--cascade", help=f"Cascade file (default: {DEFAULT_CASCADE})")
    evaluate.add_argument("--annotations", help="Annotation file (default: none)")
    evaluate.add_argument("--iou", type=float, default=0.5, help="IoU needed for a match (default: 0.5)")
    evaluate.add_argument("--roc", help="Write operating points as CSV to this file (default: none)")

    count = commands.add_parser("count", parents=[common], help="Count line crossings in a frame sequence")
    count.add_argument("frames", help="Directory of frame_000001.pgm ... files")
    count.add_argument("--cascade", help="Cascade file, needed by the detector mask source (default: none)")
    count.add_argument("--draw", help="Write frames with blob outlines to this directory (default: none)")

    synth = commands.add_parser("synth", parents=[common], help="Generate the synthetic dataset")
    synth.add_argument("--out", required=True, help="Output directory")

    for sub in (train, detect, evaluate, count, synth):
        _add_config_flags(sub)
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {key: value for key, value in vars(args).items() if "." in key}
    overrides["seed"] = args.seed
    overrides["workers"] = args.workers
    for key in ("cascade", "annotations"):
        overrides[key] = getattr(args, key, None)
    overrides["positives_dir"] = getattr(args, "positives", None)
    overrides["negatives_dir"] = getattr(args, "negatives", None)
    return config.with_overrides(overrides).validate()


def _require_dir(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"No {what} directory given")
    if not os.path.isdir(path):
        raise UsageError(f"{what.capitalize()} directory not found: {path}")
    return path


def _require_file(path: Optional[str], what: str) -> str:
    if not path:
        raise UsageError(f"No {what} file given")
    if not os.path.isfile(path):
        raise UsageError(f"{what.capitalize()} file not found: {path}")
    return path


def _cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    positives_dir, negatives_dir = config.positives_dir, config.negatives_dir
    near_misses_dir = None
    if args.dataset:
        manifest_path = _require_file(os.path.join(args.dataset, MANIFEST_NAME), "dataset manifest")
        with open(manifest_path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
        positives_dir = positives_dir or os.path.join(args.dataset, manifest["positives_dir"])
        if not negatives_dir and manifest.get("near_misses_dir"):
            near_misses_dir = os.path.join(args.dataset, manifest["near_misses_dir"])
        negatives_dir = negatives_dir or os.path.join(args.dataset, manifest["negatives_dir"])

    positives = [Sample(image, POSITIVE) for image in _load_images(_require_dir(positives_dir, "positives"))]
    pool = _load_images(_require_dir(negatives_dir, "negatives"))
    if near_misses_dir and os.path.isdir(near_misses_dir):
        pool.extend(_load_images(near_misses_dir))
    logger.info("Training on %d positives and %d pool images", len(positives), len(pool))

    cascade = _train_cascade(positives, pool, config.training(), config.resolved_workers())
    out = args.out or config.cascade or DEFAULT_CASCADE
    _save_cascade(cascade, out)
    if cascade.metadata.get("pool_exhausted"):
        logger.warning("Negative pool exhausted before reaching the target FP rate")
    logger.info("Wrote %d-stage cascade to %s", cascade.stage_count, out)
    print(json.dumps(_cascade_stats(cascade), sort_keys=True))
    return EXIT_OK


def _image_paths(inputs: Sequence[str]) -> List[str]:
    paths = []
    for item in inputs:
        if os.path.isdir(item):
            paths.extend(os.path.join(item, name) for name in sorted(os.listdir(item)) if name.endswith(".pgm"))
        elif os.path.isfile(item):
            paths.append(item)
        else:
            raise UsageError(f"Image not found: {item}")
    return paths


def _cmd_detect(args: argparse.Namespace, config: RunConfig) -> int:
    cascade = _load_cascade(_require_file(config.cascade or DEFAULT_CASCADE, "cascade"))
    if args.draw:
        os.makedirs(args.draw, exist_ok=True)
    for path in _image_paths(args.images):
        image = _load_pgm(path)
        detections = _detect(cascade, image, config.scan, config.resolved_workers())
        print(f"# {path}")
        for det in detections:
            print(det.to_record())
        if args.draw:
            annotated = image
            for det in detections:
                annotated = _draw_rect(annotated, det.rect)
            _save_pgm(annotated, os.path.join(args.draw, os.path.basename(path)))
        logger.info("%s: %d detections", path, len(detections))
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    cascade = _load_cascade(_require_file(config.cascade or DEFAULT_CASCADE, "cascade"))
    annotation_path = _require_file(config.annotations, "annotations")
    annotations = _load_annotations(annotation_path)
    base_dir = os.path.dirname(os.path.abspath(annotation_path))

    detections = {}
    for annotation in annotations:
        image = _load_pgm(_resolve(base_dir, annotation.image_path))
        detections[annotation.image_path] = _detect(cascade, image, config.scan, config.resolved_workers())
    report = _evaluate(detections, annotations, args.iou)
    sys.stdout.write(report.to_text())
    if args.roc:
        with open(args.roc, "w", encoding="utf-8") as handle:
            handle.write(_operating_points_csv(_operating_points(detections, annotations, None, args.iou)))
    return EXIT_OK


def _cmd_count(args: argparse.Namespace, config: RunConfig) -> int:
    frames = _load_frames(_require_dir(args.frames, "frames"))
    cascade = None
    if config.tracking.mask_source == "detector":
        cascade = _load_cascade(_require_file(config.cascade, "cascade"))
    report = _run_pipeline(frames, config.tracking, cascade, config.scan, bool(args.draw),
                           config.resolved_workers())
    sys.stdout.write(report.to_text())
    if args.draw:
        _save_frames(report.annotated, args.draw)
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    ds = _synth_dataset(config.synth, config.seed)
    manifest = _save_dataset(ds, args.out, config.synth, config.seed)
    print(json.dumps(manifest, sort_keys=True, indent=2))
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "count": _cmd_count,
    "synth": _cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the `pyhaar` command.

    Returns:
        int: 0 on success, 2 for configuration or input errors, 3 when training aborts.
    """
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        config = _load_config(args)
        return COMMANDS[args.command](args, config)
    except UsageError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except USAGE_ERRORS as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except ABORT_ERRORS as e:
        logger.error("Training aborted: %s", e)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
