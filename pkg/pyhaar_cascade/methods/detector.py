import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np

from ..types.cascade_model import Cascade
from ..types.detection import Detection
from ..types.gray_image import GrayImage
from ..types.integral_image import IntegralImage
from ..types.rect import Rect
from ..types.scan_config import ScanConfig
from ..util.geometry_util import UnionFind, iou_against, round_half_up, scaled_step, scan_scales, window_grid
from .cascade import _eval_cascade_batch
from .features import _scaled_side
from .imaging import _integral

logger = logging.getLogger(__name__)


class ImageTooSmall(Exception):
    """Exception raised when the image cannot hold a single base window."""

    def __init__(self, width=None, height=None, side=None, message=None):
        self.width = width
        self.height = height
        self.side = side
        self.message = message or f"Image {width}x{height} is smaller than the {side}x{side} base window"
        super().__init__(self.message)

    def __str__(self):
        return self.message


class ScanStats:
    """
    Work done by one scan.

    Attributes:
    - windows: Number of windows evaluated.
    - stages_evaluated: (windows,) stages run per window, in scan order.
    - accepted: (windows,) acceptance per window, in scan order.
    """

    def __init__(self, stages_evaluated: np.ndarray, accepted: np.ndarray):
        self.stages_evaluated = stages_evaluated
        self.accepted = accepted

    @property
    def windows(self) -> int:
        return int(self.stages_evaluated.size)

    def mean_stages_rejected(self) -> float:
        """Mean stages evaluated over rejected windows (0.0 when none was rejected)."""
        rejected = self.stages_evaluated[~self.accepted]
        return float(rejected.mean()) if rejected.size else 0.0


def _scan_scale(c: Cascade, ii: IntegralImage, scale: float, cfg: ScanConfig
                ) -> Tuple[List[Detection], np.ndarray, np.ndarray]:
    size = _scaled_side(c.base_window.side, scale)
    xs, ys = window_grid(ii.width, ii.height, size, scaled_step(cfg.stride, scale))
    accepted, stages, scores = _eval_cascade_batch(c, ii, xs, ys, scale, cfg.variance_floor)
    detections = [
        Detection(Rect(int(x), int(y), size, size), float(score), scale)
        for x, y, score in zip(xs[accepted], ys[accepted], scores[accepted])
    ]
    return detections, stages, accepted


def _scan_with_stats(c: Cascade, img: GrayImage, cfg: ScanConfig, workers: int = 1
                     ) -> Tuple[List[Detection], ScanStats]:
    """
    Scans every (scale, y, x) window of the image with the cascade.

    Features are scaled instead of the image. Each scale is an independent
    partition; results are concatenated in scale order, so the output does not
    depend on `workers`.

    Args:
        c (Cascade): The cascade.
        img (GrayImage): Image to scan.
        cfg (ScanConfig): Scales, stride and variance floor.
        workers (int): Threads, one scale per task.

    Returns:
        Tuple[List[Detection], ScanStats]: Raw accepted windows in (scale, y, x) order, and per-window work.

    Raises:
        ImageTooSmall: If the image is smaller than the base window.
    """
    side = c.base_window.side
    if img.width < side or img.height < side:
        raise ImageTooSmall(img.width, img.height, side)
    ii = _integral(img)
    scales = scan_scales(img.width, img.height, side, cfg.scale_step, cfg.min_scale, cfg.max_scale)

    def run(scale):
        return _scan_scale(c, ii, scale, cfg)

    if workers > 1 and len(scales) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, scales))
    else:
        results = [run(scale) for scale in scales]

    detections = [det for result in results for det in result[0]]
    if results:
        stats = ScanStats(np.concatenate([r[1] for r in results]), np.concatenate([r[2] for r in results]))
    else:
        stats = ScanStats(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool))
    logger.debug("Scanned %d windows over %d scales, %d accepted", stats.windows, len(scales), len(detections))
    return detections, stats


def _scan(c: Cascade, img: GrayImage, cfg: ScanConfig, workers: int = 1) -> List[Detection]:
    return _scan_with_stats(c, img, cfg, workers)[0]


def _clusters(dets: Sequence[Detection], overlap: float) -> List[List[int]]:
    """
    Transitive closure of the IoU >= overlap relation, as index lists.
    """
    sets = UnionFind(len(dets))
    boxes = np.asarray([d.rect.to_list() for d in dets], dtype=np.int64).reshape(-1, 4)
    for i in range(len(dets) - 1):
        for j in np.nonzero(iou_against(boxes[i], boxes[i + 1:]) >= overlap)[0]:
            sets.union(i, i + 1 + int(j))
    return sets.groups()


def _group_detections(dets: Sequence[Detection], cfg: ScanConfig) -> List[Detection]:
    """
    Merges overlapping raw detections.

    Each cluster with at least `group_min_neighbors` members becomes one
    detection: corners averaged and rounded half-up, max member score, mean
    member scale.

    Args:
        dets (Sequence[Detection]): Raw detections.
        cfg (ScanConfig): Grouping overlap and minimum cluster size.

    Returns:
        List[Detection]: One detection per surviving cluster, clusters in order of first member.
    """
    grouped = []
    for members in _clusters(dets, cfg.group_overlap):
        if len(members) < cfg.group_min_neighbors:
            continue
        rects = [dets[i].rect for i in members]
        n = float(len(members))
        x0 = round_half_up(sum(r.x for r in rects) / n)
        y0 = round_half_up(sum(r.y for r in rects) / n)
        x1 = round_half_up(sum(r.right for r in rects) / n)
        y1 = round_half_up(sum(r.bottom for r in rects) / n)
        score = max(dets[i].score for i in members)
        scale = sum(dets[i].scale for i in members) / n
        grouped.append(Detection(Rect(x0, y0, x1 - x0, y1 - y0), score, scale))
    return grouped


def _sort_detections(dets: Sequence[Detection]) -> List[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.rect.y, d.rect.x, d.rect.w, d.rect.h))


def _detect(c: Cascade, img: GrayImage, cfg: ScanConfig, workers: int = 1) -> List[Detection]:
    """
    Detects objects: scan, group, then sort by score descending with ties broken by (y, x).

    Raises:
        ImageTooSmall: If the image is smaller than the base window.
    """
    return _sort_detections(_group_detections(_scan(c, img, cfg, workers), cfg))
