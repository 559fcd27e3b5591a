import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..types.rect import Rect


def round_half_up(value: float) -> int:
    """
    Rounds to the nearest integer, halves away from -inf (floor(v + 0.5)).

    Python's round() rounds halves to even, which would make scaled geometry
    depend on the parity of the coordinate.
    """
    return int(math.floor(value + 0.5))


def intersection_area(a: Rect, b: Rect) -> int:
    w = min(a.right, b.right) - max(a.x, b.x)
    h = min(a.bottom, b.bottom) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def iou(a: Rect, b: Rect) -> float:
    """
    Intersection over union of two rectangles.
    """
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / float(a.area + b.area - inter)


def iou_against(box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """
    IoU of one (x, y, w, h) box against every row of an (n, 4) int array.

    Same values as `iou` for each pair.
    """
    w = np.minimum(box[0] + box[2], boxes[:, 0] + boxes[:, 2]) - np.maximum(box[0], boxes[:, 0])
    h = np.minimum(box[1] + box[3], boxes[:, 1] + boxes[:, 3]) - np.maximum(box[1], boxes[:, 1])
    inter = np.maximum(0, w) * np.maximum(0, h)
    union = box[2] * box[3] + boxes[:, 2] * boxes[:, 3] - inter
    return np.where(inter > 0, inter / union, 0.0)


class UnionFind:
    """
    Disjoint sets over 0..n-1 with path halving; the root of a set is its smallest member.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if ra < rb:
            self.parent[rb] = ra
        else:
            self.parent[ra] = rb

    def groups(self) -> List[List[int]]:
        """Members of every set, sets ordered by their smallest member."""
        found: Dict[int, List[int]] = {}
        for i in range(len(self.parent)):
            found.setdefault(self.find(i), []).append(i)
        return [found[root] for root in sorted(found)]


def scan_scales(width: int, height: int, side: int, scale_step: float, min_scale: float = 1.0,
                max_scale: Optional[float] = None) -> List[float]:
    """
    Detector scales min_scale * step^k whose rounded window still fits the image.
    """
    scales = []
    k = 0
    while True:
        scale = min_scale * scale_step ** k
        if max_scale is not None and scale > max_scale:
            break
        if round_half_up(side * scale) > min(width, height):
            break
        scales.append(scale)
        k += 1
    return scales


def window_grid(width: int, height: int, size: int, step: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Top-left corners of every size x size window at the given step, row by row.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (xs, ys) int64 arrays ordered by (y, x).
    """
    xs = np.arange(0, width - size + 1, step, dtype=np.int64)
    ys = np.arange(0, height - size + 1, step, dtype=np.int64)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return grid_x.ravel(), grid_y.ravel()


def scaled_step(stride: int, scale: float) -> int:
    """Stride at a given scale: stride * scale rounded, at least 1."""
    return max(1, round_half_up(stride * scale))
