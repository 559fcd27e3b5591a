import json
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..types.annotation import Annotation
from ..types.detection import Detection
from ..types.eval_report import EvalReport, ImageMatches
from ..types.gray_image import GrayImage
from ..types.rect import Rect
from ..types.synth_config import SynthConfig
from ..types.synth_dataset import SynthDataset
from ..util.geometry_util import intersection_area, iou, round_half_up
from .imaging import _load_pgm, _save_pgm

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
ANNOTATION_NAME = "annotations.txt"
SCENE_SCALES = (1.0, 1.25, 1.5625)
CLUTTER_CONTRAST = 30
SEQUENCE_KINDS = ("single", "opposite", "static")


class AnnotationParseError(Exception):
    """Exception raised for an annotation line that cannot be parsed."""

    def __init__(self, path=None, line_number=None, message="Malformed annotation line"):
        self.path = path
        self.line_number = line_number
        self.message = f"{path}:{line_number}: {message}"
        super().__init__(self.message)

    def __str__(self):
        return self.message


class AnnotationBoundsError(Exception):
    """Exception raised when an annotated box does not lie inside its image."""

    def __init__(self, path=None, line_number=None, box=None, message=None):
        self.path = path
        self.line_number = line_number
        self.box = box
        self.message = message or f"{path}:{line_number}: box {box} is outside the image"
        super().__init__(self.message)

    def __str__(self):
        return self.message


class UnknownImageError(Exception):
    """Exception raised when detections name an image without annotations."""

    def __init__(self, image_path=None, message=None):
        self.image_path = image_path
        self.message = message or f"Detections given for unannotated image {image_path}"
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _parse_annotation_line(line: str, path: str, line_number: int) -> Annotation:
    tokens = line.split()
    if len(tokens) < 2:
        raise AnnotationParseError(path, line_number, "expected `<image_path> <n> x y w h ...`")
    try:
        values = [int(token) for token in tokens[1:]]
    except ValueError:
        raise AnnotationParseError(path, line_number, "box count and coordinates must be integers")
    count, coords = values[0], values[1:]
    if count < 0:
        raise AnnotationParseError(path, line_number, f"negative box count {count}")
    if len(coords) != 4 * count:
        raise AnnotationParseError(
            path, line_number, f"{count} boxes need {4 * count} coordinates, got {len(coords)}")
    boxes = [Rect.from_list(coords[i:i + 4]) for i in range(0, len(coords), 4)]
    for box in boxes:
        if not box.is_valid():
            raise AnnotationParseError(path, line_number, f"box {box.to_list()} has no area")
    return Annotation(tokens[0], boxes)


def _resolve(base_dir: str, image_path: str) -> str:
    return image_path if os.path.isabs(image_path) else os.path.join(base_dir, image_path)


def _load_annotations(path: str, check_bounds: bool = True) -> List[Annotation]:
    """
    Reads an annotation file: one `<image_path> <n> x1 y1 w1 h1 ...` record per line.

    Blank lines and lines starting with `#` are skipped. Image paths are taken
    relative to the annotation file's directory.

    Args:
        path (str): The annotation file.
        check_bounds (bool): Open every image and check its boxes fit.

    Returns:
        List[Annotation]: Annotations in file order.

    Raises:
        AnnotationParseError: Malformed record, with its line number.
        AnnotationBoundsError: Box outside its image.
    """
    base_dir = os.path.dirname(os.path.abspath(path))
    annotations = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            annotation = _parse_annotation_line(stripped, path, line_number)
            if check_bounds and annotation.boxes:
                image = _load_pgm(_resolve(base_dir, annotation.image_path))
                for box in annotation.boxes:
                    if not box.fits(image.width, image.height):
                        raise AnnotationBoundsError(path, line_number, box.to_list())
            annotations.append(annotation)
    logger.debug("Loaded %d annotations from %s", len(annotations), path)
    return annotations


def _save_annotations(annotations: Sequence[Annotation], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for annotation in annotations:
            handle.write(annotation.to_line() + "\n")


def _clutter(rng: np.random.Generator, cfg: SynthConfig, height: int, width: int) -> np.ndarray:
    """
    Background level map: ground plus overlapping rectangles up to +-CLUTTER_CONTRAST.
    """
    level = np.full((height, width), float(cfg.ground_level))
    for _ in range(max(1, (width * height) // 400)):
        w = int(rng.integers(2, max(3, width // 3)))
        h = int(rng.integers(2, max(3, height // 3)))
        x = int(rng.integers(0, width - 1))
        y = int(rng.integers(0, height - 1))
        level[y:y + h, x:x + w] = cfg.ground_level + int(rng.integers(-CLUTTER_CONTRAST, CLUTTER_CONTRAST + 1))
    return level


def _render(rng: np.random.Generator, cfg: SynthConfig, level: np.ndarray) -> GrayImage:
    noise = rng.integers(-cfg.noise_amplitude, cfg.noise_amplitude + 1, size=level.shape)
    return GrayImage.from_array(np.clip(level + noise, 0, 255).astype(np.uint8))


def _square_box(window: Rect, side: int, dx: int = 0, dy: int = 0) -> Rect:
    x = window.x + (window.w - side) // 2 + dx
    y = window.y + (window.h - side) // 2 + dy
    return Rect(x, y, side, side)


def _center_contrast(image: GrayImage) -> float:
    """
    Mean of the central 12x12 region (scaled with the window) minus the mean of the rest.
    """
    side = image.width
    inner = max(1, round_half_up(side / 2.0))
    start = (side - inner) // 2
    pixels = image.pixels.astype(np.float64)
    center = pixels[start:start + inner, start:start + inner]
    surround_total = pixels.sum() - center.sum()
    surround_count = pixels.size - center.size
    return float(center.mean() - surround_total / surround_count)


def _positive(rng: np.random.Generator, cfg: SynthConfig) -> GrayImage:
    side = cfg.base_window
    while True:
        level = _clutter(rng, cfg, side, side)
        square = int(rng.integers(cfg.square_min, cfg.square_max + 1))
        dx, dy = (int(v) for v in rng.integers(-cfg.jitter, cfg.jitter + 1, size=2))
        box = _square_box(Rect(0, 0, side, side), square, dx, dy)
        level[box.y:box.bottom, box.x:box.right] = cfg.ground_level + int(
            rng.integers(cfg.contrast_min, cfg.contrast_max + 1))
        crop = _render(rng, cfg, level)
        if _center_contrast(crop) > 0.0:
            return crop


def _near_miss(rng: np.random.Generator, cfg: SynthConfig) -> GrayImage:
    """
    A base-window crop with a bright square the detector must reject.

    The square is either too small (side 2 to square_min - 2), too large
    (square_max + 3 up to the window) or of object size but shifted at least
    jitter + 4 pixels off-centre along one axis, clipped to the crop.
    """
    side = cfg.base_window
    level = _clutter(rng, cfg, side, side)
    kind = int(rng.integers(0, 3))
    dx = dy = 0
    if kind == 0:
        square = int(rng.integers(2, cfg.square_min - 1))
    elif kind == 1:
        square = int(rng.integers(cfg.square_max + 3, side + 1))
    else:
        square = int(rng.integers(cfg.square_min, cfg.square_max + 1))
        low = cfg.jitter + 4
        shift = int(rng.integers(low, max(low, side // 3) + 1)) * int(rng.choice((-1, 1)))
        other = int(rng.integers(-cfg.jitter, cfg.jitter + 1))
        dx, dy = (shift, other) if rng.integers(0, 2) else (other, shift)
    box = _square_box(Rect(0, 0, side, side), square, dx, dy)
    level[max(0, box.y):max(0, box.bottom), max(0, box.x):max(0, box.right)] = cfg.ground_level + int(
        rng.integers(cfg.contrast_min, cfg.contrast_max + 1))
    return _render(rng, cfg, level)


def _place_windows(rng: np.random.Generator, cfg: SynthConfig) -> List[Rect]:
    placed: List[Rect] = []
    for _ in range(cfg.objects_per_scene):
        for _attempt in range(50):
            size = round_half_up(cfg.base_window * SCENE_SCALES[int(rng.integers(0, len(SCENE_SCALES)))])
            if size > cfg.scene_width or size > cfg.scene_height:
                continue
            window = Rect(int(rng.integers(0, cfg.scene_width - size + 1)),
                          int(rng.integers(0, cfg.scene_height - size + 1)), size, size)
            margin = Rect(window.x - size // 2, window.y - size // 2, 2 * size, 2 * size)
            if all(intersection_area(margin, other) == 0 for other in placed):
                placed.append(window)
                break
    placed.sort(key=lambda r: (r.y, r.x))
    return placed


def _scene(rng: np.random.Generator, cfg: SynthConfig) -> Tuple[GrayImage, List[Rect]]:
    level = _clutter(rng, cfg, cfg.scene_height, cfg.scene_width)
    windows = _place_windows(rng, cfg)
    for window in windows:
        scale = window.w / float(cfg.base_window)
        square = round_half_up(int(rng.integers(cfg.square_min, cfg.square_max + 1)) * scale)
        box = _square_box(window, square)
        level[box.y:box.bottom, box.x:box.right] = cfg.ground_level + int(
            rng.integers(cfg.contrast_min, cfg.contrast_max + 1))
    return _render(rng, cfg, level), windows


def _scene_name(index: int) -> str:
    return f"scene_{index:06d}.pgm"


def _synth_dataset(cfg: SynthConfig, seed: int) -> SynthDataset:
    """
    Generates the synthetic bright-square task.

    Positives are base-window crops with a bright square near the centre over
    cluttered noise. Negatives are the same clutter without squares. Scenes
    hold up to `objects_per_scene` objects at scales 1, 1.25 and 1.5625, each
    annotated with its enclosing window (the square centred inside it). Near
    misses are base-window crops whose square has the wrong size or position;
    they are drawn last, so the other sets do not depend on their count.

    Args:
        cfg (SynthConfig): Generator settings.
        seed (int): Seed; the same seed always yields the same images.

    Returns:
        SynthDataset: Positives, negatives, scenes with annotations, near misses.
    """
    rng = np.random.default_rng(seed)
    positives = [_positive(rng, cfg) for _ in range(cfg.positives)]
    negatives = [
        _render(rng, cfg, _clutter(rng, cfg, cfg.negative_size, cfg.negative_size))
        for _ in range(cfg.negatives)
    ]
    scenes, annotations = [], []
    for index in range(1, cfg.scenes + 1):
        scene, windows = _scene(rng, cfg)
        scenes.append(scene)
        annotations.append(Annotation(_scene_name(index), windows))
    near_misses = [_near_miss(rng, cfg) for _ in range(cfg.near_misses)]
    logger.info("Synthesized %d positives, %d negatives, %d near misses, %d scenes (seed %d)",
                len(positives), len(negatives), len(near_misses), len(scenes), seed)
    return SynthDataset(positives, negatives, scenes, annotations, near_misses)


def _synth_sequence(kind: str, seed: int, width: int = 160, height: int = 120, frames: int = 48,
                    speed: int = 4, square: int = 12, ground: int = 60, brightness: int = 200,
                    noise: int = 4) -> List[GrayImage]:
    """
    Synthetic frames for the counting pipeline.

    Kinds:
    - "single": one square entering on the left and leaving on the right.
    - "opposite": one square moving right in the upper half, one moving left in the lower half.
    - "static": ground and noise only.

    Movers start fully outside the frame, so the first frame is pure background.
    """
    if kind not in SEQUENCE_KINDS:
        raise ValueError(f"Unknown sequence kind {kind!r}, expected one of {SEQUENCE_KINDS}")
    rng = np.random.default_rng(seed)
    movers = []
    if kind == "single":
        movers.append((-square, (height - square) // 2, speed))
    elif kind == "opposite":
        movers.append((-square, height // 4 - square // 2, speed))
        movers.append((width, 3 * height // 4 - square // 2, -speed))

    sequence = []
    for t in range(frames):
        level = np.full((height, width), ground, dtype=np.int64)
        for x0, y0, velocity in movers:
            x = x0 + velocity * t
            left, right = max(0, x), min(width, x + square)
            if left < right:
                level[y0:y0 + square, left:right] = brightness
        pixels = level + rng.integers(-noise, noise + 1, size=level.shape)
        sequence.append(GrayImage.from_array(np.clip(pixels, 0, 255).astype(np.uint8)))
    return sequence


def _image_names(directory: str) -> List[str]:
    return sorted(name for name in os.listdir(directory) if name.endswith(".pgm"))


def _load_images(directory: str) -> List[GrayImage]:
    """Loads every .pgm file of a directory in name order."""
    return [_load_pgm(os.path.join(directory, name)) for name in _image_names(directory)]


def _save_dataset(ds: SynthDataset, directory: str, cfg: Optional[SynthConfig] = None,
                  seed: Optional[int] = None) -> Dict:
    """
    Writes a dataset as positives/, negatives/, near_misses/, scenes/ (with
    annotations.txt) and manifest.json.

    Returns:
        Dict: The manifest written.
    """
    layout = {"positives": ("pos_{:06d}.pgm", ds.positives), "negatives": ("neg_{:06d}.pgm", ds.negatives),
              "near_misses": ("near_{:06d}.pgm", ds.near_misses)}
    for folder, (pattern, images) in layout.items():
        os.makedirs(os.path.join(directory, folder), exist_ok=True)
        for index, image in enumerate(images, start=1):
            _save_pgm(image, os.path.join(directory, folder, pattern.format(index)))

    scene_dir = os.path.join(directory, "scenes")
    os.makedirs(scene_dir, exist_ok=True)
    for image, annotation in zip(ds.scenes, ds.annotations):
        _save_pgm(image, os.path.join(scene_dir, annotation.image_path))
    _save_annotations(ds.annotations, os.path.join(scene_dir, ANNOTATION_NAME))

    manifest = {
        "positives": len(ds.positives),
        "negatives": len(ds.negatives),
        "near_misses": len(ds.near_misses),
        "scenes": len(ds.scenes),
        "objects": sum(len(annotation.boxes) for annotation in ds.annotations),
        "positives_dir": "positives",
        "negatives_dir": "negatives",
        "near_misses_dir": "near_misses",
        "annotations": os.path.join("scenes", ANNOTATION_NAME),
        "seed": seed,
        "config": cfg.to_dict() if cfg else None,
    }
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as handle:
        handle.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def _load_dataset(directory: str) -> SynthDataset:
    """
    Reads a dataset written by `_save_dataset`.
    """
    positives = _load_images(os.path.join(directory, "positives"))
    negatives = _load_images(os.path.join(directory, "negatives"))
    near_dir = os.path.join(directory, "near_misses")
    near_misses = _load_images(near_dir) if os.path.isdir(near_dir) else []
    scene_dir = os.path.join(directory, "scenes")
    annotations = _load_annotations(os.path.join(scene_dir, ANNOTATION_NAME))
    scenes = [_load_pgm(_resolve(scene_dir, annotation.image_path)) for annotation in annotations]
    return SynthDataset(positives, negatives, scenes, annotations, near_misses)


def _match_image(dets: Sequence[Detection], boxes: Sequence[Rect], iou_threshold: float) -> int:
    """
    Greedy one-to-one matching, detections by descending score (ties by rect), each
    taking the unmatched box of highest IoU (ties by box order).

    Returns:
        int: Number of matched detections.
    """
    ordered = sorted(dets, key=lambda d: (-d.score, d.rect.y, d.rect.x, d.rect.w, d.rect.h))
    taken = [False] * len(boxes)
    matched = 0
    for det in ordered:
        best, best_iou = -1, iou_threshold
        for index, box in enumerate(boxes):
            if taken[index]:
                continue
            overlap = iou(det.rect, box)
            if overlap >= best_iou and (best < 0 or overlap > best_iou):
                best, best_iou = index, overlap
        if best >= 0:
            taken[best] = True
            matched += 1
    return matched


def _evaluate(dets: Dict[str, Sequence[Detection]], annotations: Sequence[Annotation],
              iou_threshold: float = 0.5) -> EvalReport:
    """
    Scores detections against ground truth.

    Args:
        dets (Dict[str, Sequence[Detection]]): Detections keyed by annotation image path;
            images missing from the dict have no detections.
        annotations (Sequence[Annotation]): Ground truth, one per image.
        iou_threshold (float): IoU a detection needs to match an object.

    Returns:
        EvalReport: Rates, counts, and per-image matches.

    Raises:
        UnknownImageError: If detections name an image that has no annotation.
    """
    known = {annotation.image_path for annotation in annotations}
    for image_path in dets:
        if image_path not in known:
            raise UnknownImageError(image_path)

    per_image = []
    for annotation in annotations:
        image_dets = list(dets.get(annotation.image_path, []))
        tp = _match_image(image_dets, annotation.boxes, iou_threshold)
        per_image.append(ImageMatches(annotation.image_path, len(annotation.boxes), tp, len(image_dets) - tp))

    images = len(per_image)
    ground_truth = sum(m.ground_truth for m in per_image)
    true_positives = sum(m.true_positives for m in per_image)
    false_positives = sum(m.false_positives for m in per_image)
    detections = true_positives + false_positives
    detection_rate = true_positives / float(ground_truth) if ground_truth else 0.0
    return EvalReport(
        detection_rate=detection_rate,
        false_positives_per_image=false_positives / float(images) if images else 0.0,
        precision=true_positives / float(detections) if detections else 0.0,
        recall=detection_rate,
        iou_threshold=iou_threshold,
        images=images,
        ground_truth=ground_truth,
        detections=detections,
        true_positives=true_positives,
        false_positives=false_positives,
        per_image=per_image,
    )


def _operating_points(dets: Dict[str, Sequence[Detection]], annotations: Sequence[Annotation],
                      thresholds: Optional[Sequence[float]] = None,
                      iou_threshold: float = 0.5) -> List[Tuple[float, float, float]]:
    """
    (score threshold, detection rate, FP per image) for detections kept at score >= threshold.

    Thresholds default to every distinct detection score, ascending.
    """
    if thresholds is None:
        thresholds = sorted({det.score for image_dets in dets.values() for det in image_dets})
    points = []
    for threshold in thresholds:
        kept = {path: [d for d in image_dets if d.score >= threshold] for path, image_dets in dets.items()}
        report = _evaluate(kept, annotations, iou_threshold)
        points.append((float(threshold), report.detection_rate, report.false_positives_per_image))
    return points


def _operating_points_csv(points: Sequence[Tuple[float, float, float]]) -> str:
    lines = ["threshold,detection_rate,false_positives_per_image"]
    lines.extend(f"{t:.6f},{rate:.6f},{fp:.6f}" for t, rate, fp in points)
    return "\n".join(lines) + "\n"
