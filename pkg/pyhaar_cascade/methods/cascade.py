import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..types.cascade_model import Cascade, FORMAT_VERSION
from ..types.cascade_train_config import CascadeTrainConfig
from ..types.gray_image import GrayImage
from ..types.haar_feature import BaseWindow, HaarFeature
from ..types.integral_image import IntegralImage
from ..types.rect import Rect
from ..types.sample import NEGATIVE, POSITIVE, Sample
from ..types.strong_classifier import StrongClassifier
from ..types.weak_classifier import WeakClassifier
from ..util.geometry_util import scaled_step, scan_scales, window_grid
from .boosting import StageBooster, _strong_score
from .features import (
    InvalidFeature,
    _bank_values,
    _enumerate_features,
    _eval_feature_batch,
    _feature_bank,
    _scale_feature,
    _scaled_side,
    _validate_feature,
    _window_sigma,
    _window_sigma_batch,
    _window_stack,
)
from .imaging import _integral, _resample

logger = logging.getLogger(__name__)

MIN_POSITIVES = 50


class CascadeFormatError(Exception):
    """Base exception for cascade files that cannot be loaded."""

    def __init__(self, path=None, field=None, message="Invalid cascade file"):
        self.path = path
        self.field = field
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


class CascadeVersionError(CascadeFormatError):
    """Exception raised when the file's format_version is not supported."""


class MalformedFieldError(CascadeFormatError):
    """Exception raised when a field is missing, unparsable or of the wrong type."""


class CascadeInvariantError(CascadeFormatError):
    """Exception raised when a well-formed file describes an invalid cascade."""


class CascadeTrainingAbort(Exception):
    """Exception raised when cascade training cannot meet its stage targets."""

    def __init__(self, stage_index=None, message="Cascade training aborted"):
        self.stage_index = stage_index
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _eval_cascade(c: Cascade, ii: IntegralImage, origin: Tuple[int, int], scale: float = 1.0,
                  variance_floor: float = 1.0) -> Tuple[bool, int, float]:
    """
    Runs the cascade on one window, stopping at the first stage that rejects it.

    Args:
        c (Cascade): The cascade.
        ii (IntegralImage): Integral image of the scanned image.
        origin (Tuple[int, int]): Window top-left (x, y).
        scale (float): Detector scale.
        variance_floor (float): Lower clamp on the window standard deviation.

    Returns:
        Tuple[bool, int, float]: (accepted, number of stages evaluated, score of the last stage evaluated).
    """
    sigma = _window_sigma(ii, origin, c.base_window.side, scale, variance_floor)
    score = 0.0
    for index, stage in enumerate(c.stages):
        score = _strong_score(stage, ii, origin, scale, sigma)
        if score < stage.stage_threshold:
            return False, index + 1, score
    return True, len(c.stages), score


def _eval_cascade_batch(c: Cascade, ii: IntegralImage, xs: np.ndarray, ys: np.ndarray, scale: float,
                        variance_floor: float = 1.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized `_eval_cascade` over many windows of one image at one scale.

    Each stage is evaluated only on the windows still alive, and the arithmetic
    matches the scalar path bit for bit.

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (accepted, stages evaluated, final score) per window.
    """
    count = len(xs)
    size = _scaled_side(c.base_window.side, scale)
    sigma = _window_sigma_batch(ii, xs, ys, size, variance_floor)
    accepted = np.ones(count, dtype=bool)
    stages_evaluated = np.zeros(count, dtype=np.int64)
    final_score = np.zeros(count, dtype=np.float64)

    alive = np.arange(count)
    for index, stage in enumerate(c.stages):
        if alive.size == 0:
            break
        ax, ay, asigma = xs[alive], ys[alive], sigma[alive]
        score = np.zeros(alive.size, dtype=np.float64)
        for stump in stage.stumps:
            value = _eval_feature_batch(_scale_feature(stump.feature, scale), ii.padded, ax, ay) / asigma
            fired = stump.polarity * value < stump.polarity * stump.threshold
            score = score + np.where(fired, stump.alpha, 0.0)
        stages_evaluated[alive] = index + 1
        final_score[alive] = score
        passed = score >= stage.stage_threshold
        accepted[alive[~passed]] = False
        alive = alive[passed]
    return accepted, stages_evaluated, final_score


def _cascade_stats(c: Cascade) -> Dict[str, Any]:
    """
    Shape summary of a cascade: stage count and stumps per stage.
    """
    stumps = [len(stage.stumps) for stage in c.stages]
    return {
        "base_window": c.base_window.side,
        "stage_count": len(c.stages),
        "stumps_per_stage": stumps,
        "total_stumps": sum(stumps),
    }


def _mine_image(c: Cascade, image: GrayImage, stride: int, scale_step: float,
                variance_floor: float) -> Tuple[int, List[Tuple[int, int, int]]]:
    ii = _integral(image)
    side = c.base_window.side
    scanned = 0
    found = []
    for scale in scan_scales(image.width, image.height, side, scale_step):
        size = _scaled_side(side, scale)
        xs, ys = window_grid(image.width, image.height, size, scaled_step(stride, scale))
        scanned += len(xs)
        accepted, _, _ = _eval_cascade_batch(c, ii, xs, ys, scale, variance_floor)
        found.extend((int(x), int(y), size) for x, y in zip(xs[accepted], ys[accepted]))
    return scanned, found


def _mine_negatives(c: Cascade, pool: Sequence[GrayImage], needed: int, rng: np.random.Generator,
                    stride: int = 2, scale_step: float = 1.25, variance_floor: float = 1.0,
                    workers: int = 1) -> Tuple[List[GrayImage], int, int]:
    """
    Collects false positives of the current cascade from a pool of object-free images.

    Every pool image is scanned like the detector does (stride scaled with the
    window, scales step by `scale_step`). When more windows are accepted than
    needed, a seeded random subset is kept. Kept windows are resampled to the
    base window.

    Args:
        c (Cascade): Cascade so far; with no stages every window is accepted.
        pool (Sequence[GrayImage]): Negative images.
        needed (int): Number of windows wanted.
        rng (np.random.Generator): Seeded generator for the subset choice.
        stride (int): Scan stride at base scale.
        scale_step (float): Scale step.
        variance_floor (float): Lower clamp on the window standard deviation.
        workers (int): Threads scanning pool images.

    Returns:
        Tuple[List[GrayImage], int, int]: (mined windows, windows accepted, windows scanned).
    """
    def scan(image):
        return _mine_image(c, image, stride, scale_step, variance_floor)

    if workers > 1 and len(pool) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(scan, pool))
    else:
        results = [scan(image) for image in pool]

    scanned = sum(result[0] for result in results)
    candidates = [(index, x, y, size) for index, (_, found) in enumerate(results) for x, y, size in found]
    accepted = len(candidates)
    if accepted > needed:
        chosen = np.sort(rng.choice(accepted, size=needed, replace=False))
    else:
        chosen = np.arange(accepted)

    side = c.base_window.side
    windows = []
    for pick in chosen:
        index, x, y, size = candidates[int(pick)]
        windows.append(_resample(pool[index], Rect(x, y, size, size), side))
    return windows, accepted, scanned


def _stage_threshold(default: float, valid_scores: np.ndarray, min_detection: float) -> float:
    """
    Largest threshold, at most `default`, that passes min_detection of the validation scores.
    """
    ordered = np.sort(valid_scores)[::-1]
    needed = max(1, int(math.ceil(min_detection * len(ordered) - 1e-12)))
    return float(min(default, ordered[needed - 1]))


def _balanced_samples(positives: Sequence[GrayImage], negatives: Sequence[GrayImage]) -> List[Sample]:
    positive_weight = 1.0 / (2.0 * len(positives))
    negative_weight = 1.0 / (2.0 * len(negatives))
    samples = [Sample(window, POSITIVE, positive_weight) for window in positives]
    samples.extend(Sample(window, NEGATIVE, negative_weight) for window in negatives)
    return samples


def _train_cascade(positives: Sequence[Sample], negative_pool: Sequence[GrayImage],
                   cfg: CascadeTrainConfig, workers: int = 1,
                   features: Optional[List[HaarFeature]] = None) -> Cascade:
    """
    Trains an attentional cascade stage by stage.

    Positives are split once (seeded) into a training part and a validation
    part. Every stage is boosted one stump at a time; after each stump the stage
    threshold is lowered from 0.5 * sum(alpha) until the validation positives reach
    `per_stage_min_detection`, and the stage is finished once its false-positive
    rate on the current negatives is at most `per_stage_max_fp`. The negatives
    of each stage are the pool windows the cascade built so far still accepts.

    Args:
        positives (Sequence[Sample]): Positive base-window samples (labels are ignored).
        negative_pool (Sequence[GrayImage]): Object-free images to mine negatives from.
        cfg (CascadeTrainConfig): Training configuration.
        workers (int): Threads for the stump search and negative mining.
        features (Optional[List[HaarFeature]]): Feature pool; enumerated from cfg when None.

    Returns:
        Cascade: The trained cascade; metadata["pool_exhausted"] is True when
        mining ran out of negatives before reaching `target_overall_fp`.

    Raises:
        CascadeTrainingAbort: On invalid inputs or when a stage cannot meet its
            targets within `stumps_per_stage_cap` stumps.
        BoostingAbort: If a boosting round cannot beat chance.
    """
    problems = cfg.problems()
    if problems:
        raise ValueError("; ".join(problems))
    side = cfg.base_window
    windows = [sample.window for sample in positives]
    if len(windows) < MIN_POSITIVES:
        raise CascadeTrainingAbort(0, f"Cascade training needs at least {MIN_POSITIVES} positives, got {len(windows)}")
    for window in windows:
        if window.width != side or window.height != side:
            raise CascadeTrainingAbort(0, f"Positive of size {window.width}x{window.height} does not match the {side} window")
    if not negative_pool:
        raise CascadeTrainingAbort(0, "The negative pool is empty")

    if features is None:
        features = _enumerate_features(BaseWindow(side), cfg.feature_stride, cfg.feature_min_size)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(windows))
    valid_count = max(1, int(len(windows) * cfg.validation_fraction))
    valid = [windows[i] for i in order[:valid_count]]
    train = [windows[i] for i in order[valid_count:]]

    bank = _feature_bank(features)
    valid_integrals = [_integral(window) for window in valid]
    valid_stack = _window_stack(valid_integrals)
    valid_sigma = np.asarray(
        [_window_sigma(ii, (0, 0), side, 1.0, cfg.variance_floor) for ii in valid_integrals], dtype=np.float64)

    metadata: Dict[str, Any] = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "features": len(features),
        "positives": len(windows),
        "training_positives": len(train),
        "validation_positives": len(valid),
        "pool_images": len(negative_pool),
        "stage_negatives": [],
        "stage_detection_rates": [],
        "stage_fp_rates": [],
        "pool_accepted": [],
        "pool_exhausted": False,
    }
    cascade = Cascade(BaseWindow(side), (), metadata)

    negatives, accepted, scanned = _mine_negatives(
        cascade, negative_pool, cfg.negatives_per_stage, rng, cfg.mining_stride, cfg.mining_scale_step,
        cfg.variance_floor, workers)
    metadata["pool_windows"] = scanned
    logger.info("Pool: %d windows in %d images, %d negatives drawn", scanned, len(negative_pool), len(negatives))
    overall_fp = 1.0
    stages: List[StrongClassifier] = []

    for stage_index in range(cfg.max_stages):
        if not negatives:
            break
        booster = StageBooster(_balanced_samples(train, negatives), features, cfg.variance_floor,
                               workers, cfg.cache_feature_values)
        negative_mask = ~booster.labels
        valid_scores = np.zeros(len(valid), dtype=np.float64)
        fp_rate = 1.0

        while True:
            stump = booster.add_round()
            if stump is None:
                raise CascadeTrainingAbort(
                    stage_index, f"Stage {stage_index + 1}: boosting converged with {len(booster.stumps)} stumps "
                                 f"at FP rate {fp_rate:.4f} > {cfg.per_stage_max_fp}")
            column = _bank_values(bank, valid_stack, side + 1, valid_sigma,
                                  stump.feature_index, stump.feature_index + 1)[:, 0]
            fired = stump.polarity * column < stump.polarity * stump.threshold
            valid_scores = valid_scores + np.where(fired, stump.alpha, 0.0)

            default = 0.5 * sum(s.alpha for s in booster.stumps)
            threshold = _stage_threshold(default, valid_scores, cfg.per_stage_min_detection)
            detection_rate = float(np.mean(valid_scores >= threshold))
            fp_rate = float(np.mean(booster.scores[negative_mask] >= threshold))
            if fp_rate <= cfg.per_stage_max_fp:
                break
            if len(booster.stumps) >= cfg.stumps_per_stage_cap:
                raise CascadeTrainingAbort(
                    stage_index, f"Stage {stage_index + 1}: FP rate {fp_rate:.4f} still above "
                                 f"{cfg.per_stage_max_fp} after {cfg.stumps_per_stage_cap} stumps")

        stage = booster.classifier(threshold)
        stages.append(stage)
        metadata["stage_negatives"].append(len(negatives))
        metadata["stage_detection_rates"].append(detection_rate)
        metadata["stage_fp_rates"].append(fp_rate)
        cascade = Cascade(BaseWindow(side), tuple(stages), metadata)

        negatives, accepted, scanned = _mine_negatives(
            cascade, negative_pool, cfg.negatives_per_stage, rng, cfg.mining_stride, cfg.mining_scale_step,
            cfg.variance_floor, workers)
        overall_fp = accepted / float(scanned) if scanned else 0.0
        metadata["pool_accepted"].append(accepted)
        logger.info("Stage %d: %d stumps, threshold %.6f, detection %.4f, FP %.4f, "
                    "negatives %d, pool windows still accepted %d, overall FP %.6f",
                    stage_index + 1, len(stage.stumps), threshold, detection_rate, fp_rate,
                    metadata["stage_negatives"][-1], accepted, overall_fp)

        if overall_fp <= cfg.target_overall_fp:
            break
        if accepted < cfg.negatives_per_stage and stage_index + 1 < cfg.max_stages:
            metadata["pool_exhausted"] = True
            logger.warning("Negative pool exhausted after stage %d: %d windows accepted, %d needed",
                           stage_index + 1, accepted, cfg.negatives_per_stage)
            break

    if not stages:
        raise CascadeTrainingAbort(0, "No stage could be trained: the negative pool yielded no windows")
    metadata["overall_fp"] = overall_fp
    metadata["stages"] = len(stages)
    return Cascade(BaseWindow(side), tuple(stages), metadata)


def _plain(value: Any) -> Any:
    """Converts numpy scalars and containers to plain JSON types."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _float_text(value: float) -> str:
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    text = "%.17g" % value
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def _canonical_json(value: Any, depth: int = 0) -> str:
    """
    JSON text with sorted keys, two-space indentation and 17 significant digits per float.
    """
    pad, inner = "  " * depth, "  " * (depth + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(key)}: {_canonical_json(value[key], depth + 1)}" for key in sorted(value)]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, list):
        if not value:
            return "[]"
        items = [inner + _canonical_json(item, depth + 1) for item in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _float_text(value)
    return json.dumps(value)


def _dump_cascade(c: Cascade) -> str:
    """
    Canonical text of a cascade: sorted keys, fixed indentation, floats with 17 significant digits.
    """
    return _canonical_json(_plain(c.to_dict())) + "\n"


def _save_cascade(c: Cascade, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_dump_cascade(c))


def _require(data: Dict, key: str, kind, path: str, where: str):
    if not isinstance(data, dict) or key not in data:
        raise MalformedFieldError(path, f"{where}.{key}", f"{path}: missing field {where}.{key}")
    value = data[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise MalformedFieldError(path, f"{where}.{key}", f"{path}: field {where}.{key} has the wrong type")
    return value


def _parse_stump(data: Dict, path: str, where: str, side: int) -> WeakClassifier:
    feature_data = _require(data, "feature", dict, path, where)
    _require(feature_data, "kind", str, path, f"{where}.feature")
    rows = _require(feature_data, "rects", list, path, f"{where}.feature")
    for row_index, row in enumerate(rows):
        if (not isinstance(row, list) or len(row) != 5
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in row[:4])
                or not isinstance(row[4], (int, float)) or isinstance(row[4], bool)):
            raise MalformedFieldError(path, f"{where}.feature.rects[{row_index}]",
                                      f"{path}: {where}.feature.rects[{row_index}] must be [x, y, w, h, weight]")
    try:
        stump = WeakClassifier.from_dict({
            "feature_index": data.get("feature_index", -1),
            "feature": feature_data,
            "polarity": _require(data, "polarity", int, path, where),
            "threshold": _require(data, "threshold", float, path, where),
            "alpha": _require(data, "alpha", float, path, where),
        })
    except ValueError as e:
        raise MalformedFieldError(path, f"{where}.feature.kind", f"{path}: {where}: {e}")

    try:
        _validate_feature(stump.feature, side)
    except InvalidFeature as e:
        raise CascadeInvariantError(path, f"{where}.feature", f"{path}: {where}: {e}")
    if stump.polarity not in (1, -1):
        raise CascadeInvariantError(path, f"{where}.polarity", f"{path}: {where}: polarity must be +1 or -1")
    if not math.isfinite(stump.alpha) or stump.alpha < 0:
        raise CascadeInvariantError(path, f"{where}.alpha", f"{path}: {where}: alpha must be finite and >= 0")
    if math.isnan(stump.threshold):
        raise CascadeInvariantError(path, f"{where}.threshold", f"{path}: {where}: threshold is NaN")
    return stump


def _parse_cascade(data: Any, path: str = "<cascade>") -> Cascade:
    """
    Validates a decoded cascade document and builds the Cascade.

    Raises:
        CascadeVersionError: Unsupported or missing format_version.
        MalformedFieldError: Missing or mistyped field.
        CascadeInvariantError: Well-formed but invalid cascade.
    """
    if not isinstance(data, dict):
        raise MalformedFieldError(path, "document", f"{path}: the document is not an object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise CascadeVersionError(path, "format_version",
                                  f"{path}: unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    side = _require(data, "base_window", int, path, "cascade")
    if side < 4:
        raise CascadeInvariantError(path, "base_window", f"{path}: base_window must be at least 4, got {side}")
    stage_list = _require(data, "stages", list, path, "cascade")
    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        raise MalformedFieldError(path, "metadata", f"{path}: metadata must be an object")
    if not stage_list:
        raise CascadeInvariantError(path, "stages", f"{path}: a cascade needs at least one stage")

    stages = []
    for stage_index, stage_data in enumerate(stage_list):
        where = f"stages[{stage_index}]"
        stump_list = _require(stage_data, "stumps", list, path, where)
        threshold = float(_require(stage_data, "stage_threshold", float, path, where))
        if not stump_list:
            raise CascadeInvariantError(path, f"{where}.stumps", f"{path}: {where} has no stumps")
        stumps = tuple(_parse_stump(stump, path, f"{where}.stumps[{i}]", side) for i, stump in enumerate(stump_list))
        stage = StrongClassifier(stumps, threshold)
        if threshold > stage.total_alpha:
            raise CascadeInvariantError(path, f"{where}.stage_threshold",
                                        f"{path}: {where} threshold {threshold} exceeds the total alpha {stage.total_alpha}")
        stages.append(stage)
    return Cascade(BaseWindow(side), tuple(stages), metadata)


def _load_cascade(path: str) -> Cascade:
    """
    Loads and validates a cascade file written by `_save_cascade`.

    Args:
        path (str): Cascade file.

    Returns:
        Cascade: The cascade, structurally identical to the one saved.

    Raises:
        CascadeVersionError, MalformedFieldError, CascadeInvariantError: See `_parse_cascade`.
    """
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedFieldError(path, "document", f"{path}: cannot parse cascade file: {e}")
    return _parse_cascade(data, path)
