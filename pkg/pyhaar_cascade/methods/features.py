import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..types.haar_feature import BaseWindow, FeatureKind, HaarFeature, TEMPLATES, TEMPLATE_ORDER
from ..types.integral_image import IntegralImage
from ..types.rect import Rect
from ..util.geometry_util import round_half_up
from .imaging import _rect_mean, _window_std

logger = logging.getLogger(__name__)

MAX_RECTS = 4


class FeatureOutOfBounds(Exception):
    """Exception raised when a (scaled) feature does not fit inside the image at its origin."""

    def __init__(self, feature=None, origin=None, scale=None, message="Feature does not fit inside the image"):
        self.feature = feature
        self.origin = origin
        self.scale = scale
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


class InvalidFeature(Exception):
    """Exception raised for a feature that breaks the Haar feature invariants."""

    def __init__(self, feature=None, message="Invalid Haar feature"):
        self.feature = feature
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _template_feature(kind: FeatureKind, x: int, y: int, cell_w: int, cell_h: int) -> HaarFeature:
    cols, rows, weights = TEMPLATES[kind]
    rects = tuple(
        Rect(x + col * cell_w, y + row * cell_h, cell_w, cell_h)
        for row in range(rows)
        for col in range(cols)
    )
    return HaarFeature(kind, rects, weights)


def _cell_sizes(side: int, stride: int, min_size: int) -> range:
    first = ((min_size + stride - 1) // stride) * stride
    return range(first, side + 1, stride)


def _enumerate_features(win: BaseWindow, stride: int = 1, min_size: int = 1) -> List[HaarFeature]:
    """
    Enumerates every template placement inside the base window.

    Positions and cell extents step by `stride`; cell extents are multiples of
    `stride` no smaller than `min_size`. Order is fixed: template (in
    TEMPLATE_ORDER), then y, x, then cell height, cell width, all ascending.

    Args:
        win (BaseWindow): The base window.
        stride (int): Position and size step, >= 1.
        min_size (int): Smallest cell extent, >= 1.

    Returns:
        List[HaarFeature]: All features; empty if no placement fits.
    """
    if stride < 1 or min_size < 1:
        raise ValueError(f"stride and min_size must be >= 1, got {stride} and {min_size}")

    side = win.side
    sizes = _cell_sizes(side, stride, min_size)
    features = []
    for kind in TEMPLATE_ORDER:
        cols, rows, _ = TEMPLATES[kind]
        for y in range(0, side, stride):
            for x in range(0, side, stride):
                for cell_h in sizes:
                    if y + rows * cell_h > side:
                        break
                    for cell_w in sizes:
                        if x + cols * cell_w > side:
                            break
                        features.append(_template_feature(kind, x, y, cell_w, cell_h))
    logger.debug("Enumerated %d features for a %d window (stride %d, min size %d)",
                 len(features), side, stride, min_size)
    return features


def _count_features(win: BaseWindow, stride: int = 1, min_size: int = 1) -> int:
    """
    Closed-form size of `_enumerate_features(win, stride, min_size)`.
    """
    side = win.side
    sizes = _cell_sizes(side, stride, min_size)
    total = 0
    for kind in TEMPLATE_ORDER:
        cols, rows, _ = TEMPLATES[kind]
        along_x = sum((side - cols * size) // stride + 1 for size in sizes if cols * size <= side)
        along_y = sum((side - rows * size) // stride + 1 for size in sizes if rows * size <= side)
        total += along_x * along_y
    return total


def _validate_feature(feature: HaarFeature, side: int) -> None:
    """
    Raises InvalidFeature unless the feature has k >= 2 positive-area rects inside
    the window and weights summing to zero.
    """
    if feature.k < 2 or len(feature.weights) != feature.k:
        raise InvalidFeature(feature, f"feature needs at least two weighted rects, got {feature.k}")
    if not feature.fits(side):
        raise InvalidFeature(feature, f"feature rects {feature.rects} exceed the {side}x{side} window")
    if abs(feature.weight_sum()) > 1e-9:
        raise InvalidFeature(feature, f"feature weights {feature.weights} do not sum to zero")


def _rebalance_weights(weights: Sequence[float]) -> Tuple[float, ...]:
    """
    Rescales the negative weights by (sum of positive weights) / (sum of |negative weights|)
    so that the weights sum to exactly zero.
    """
    positive = sum(w for w in weights if w > 0)
    negative = -sum(w for w in weights if w < 0)
    if positive == negative or negative == 0:
        return tuple(weights)
    ratio = positive / negative
    return tuple(w * ratio if w < 0 else w for w in weights)


def _scale_feature(feat: HaarFeature, scale: float) -> HaarFeature:
    """
    Scales a feature for a detector window `scale` times the base window.

    Every rect edge is multiplied by `scale` and rounded half-up independently,
    so the rects of a template stay adjacent and inside round(side * scale).

    Args:
        feat (HaarFeature): Feature in base-window coordinates.
        scale (float): Scale factor, >= 1.

    Returns:
        HaarFeature: The scaled feature; weights rebalanced to sum to zero.
    """
    if scale < 1.0:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if scale == 1.0:
        return feat

    rects = []
    for rect in feat.rects:
        x0 = round_half_up(rect.x * scale)
        y0 = round_half_up(rect.y * scale)
        x1 = round_half_up(rect.right * scale)
        y1 = round_half_up(rect.bottom * scale)
        rects.append(Rect(x0, y0, x1 - x0, y1 - y0))
    return HaarFeature(feat.kind, tuple(rects), _rebalance_weights(feat.weights))


def _scaled_side(side: int, scale: float) -> int:
    return round_half_up(side * scale)


def _eval_feature(feat: HaarFeature, ii: IntegralImage, origin: Tuple[int, int], scale: float = 1.0) -> float:
    """
    Evaluates f = sum_i w_i * mean_i over the feature's rects placed at `origin`.

    Costs exactly four integral reads per rect, whatever the scale.

    Args:
        feat (HaarFeature): Feature in base-window coordinates.
        ii (IntegralImage): Integral image of the scanned image.
        origin (Tuple[int, int]): (x, y) of the window's top-left corner.
        scale (float): Detector scale, >= 1.

    Returns:
        float: The raw (not variance-normalized) feature value.

    Raises:
        FeatureOutOfBounds: If a scaled rect falls outside the image.
    """
    scaled = _scale_feature(feat, scale)
    ox, oy = origin
    value = 0.0
    for rect, weight in zip(scaled.rects, scaled.weights):
        placed = rect.translated(ox, oy)
        if not placed.fits(ii.width, ii.height):
            raise FeatureOutOfBounds(feat, origin, scale,
                                     f"Feature rect {placed} at scale {scale} is outside the {ii.width}x{ii.height} image")
        value += weight * _rect_mean(ii, placed)
    return value


def _window_sigma(ii: IntegralImage, origin: Tuple[int, int], side: int, scale: float,
                  variance_floor: float) -> float:
    """
    Standard deviation of the scaled detection window at `origin`, clamped to `variance_floor`.
    """
    size = _scaled_side(side, scale)
    sigma = _window_std(ii, Rect(origin[0], origin[1], size, size))
    return max(sigma, variance_floor)


def _eval_feature_batch(scaled: HaarFeature, padded: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """
    Evaluates an already scaled feature at many window origins of one image.

    The arithmetic (integer corner sums, float mean, accumulation order) is the
    same as `_eval_feature`, so results are bit-identical.

    Args:
        scaled (HaarFeature): Feature already passed through `_scale_feature`.
        padded (np.ndarray): IntegralImage.padded of the image.
        xs, ys (np.ndarray): Window origins; the caller guarantees bounds.

    Returns:
        np.ndarray: float64 raw feature values, one per origin.
    """
    value = np.zeros(len(xs), dtype=np.float64)
    for rect, weight in zip(scaled.rects, scaled.weights):
        x0 = xs + rect.x
        y0 = ys + rect.y
        x1 = x0 + rect.w
        y1 = y0 + rect.h
        sums = padded[y1, x1] - padded[y0, x1] - padded[y1, x0] + padded[y0, x0]
        value += weight * (sums.astype(np.float64) / float(rect.area))
    return value


def _window_sigma_batch(ii: IntegralImage, xs: np.ndarray, ys: np.ndarray, size: int,
                        variance_floor: float) -> np.ndarray:
    """
    Vectorized `_window_sigma` for square windows of `size` pixels.
    """
    p, q = ii.padded, ii.squared_padded
    x1 = xs + size
    y1 = ys + size
    sums = p[y1, x1] - p[ys, x1] - p[y1, xs] + p[ys, xs]
    squared = q[y1, x1] - q[ys, x1] - q[y1, xs] + q[ys, xs]
    area = size * size
    numerator = area * squared - sums * sums
    sigma = np.sqrt(numerator.astype(np.float64) / float(area * area))
    return np.maximum(sigma, variance_floor)


@dataclass
class FeatureBank:
    """
    Rect geometry of a feature list packed into arrays for block evaluation
    over a stack of equally sized windows.

    Attributes:
    - features: The features, in enumeration order.
    - k: (F,) number of rects per feature.
    - geometry: (F, MAX_RECTS, 4) x, y, w, h per rect (unused slots are zero).
    - weights: (F, MAX_RECTS) weights (unused slots are zero).
    """
    features: List[HaarFeature]
    k: np.ndarray
    geometry: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.features)


def _feature_bank(features: List[HaarFeature]) -> FeatureBank:
    count = len(features)
    k = np.zeros(count, dtype=np.int64)
    geometry = np.zeros((count, MAX_RECTS, 4), dtype=np.int64)
    weights = np.zeros((count, MAX_RECTS), dtype=np.float64)
    for index, feature in enumerate(features):
        if feature.k > MAX_RECTS:
            raise InvalidFeature(feature, f"features with more than {MAX_RECTS} rects are not supported")
        k[index] = feature.k
        for slot, (rect, weight) in enumerate(zip(feature.rects, feature.weights)):
            geometry[index, slot] = rect.to_list()
            weights[index, slot] = weight
    return FeatureBank(list(features), k, geometry, weights)


def _window_stack(integrals: Sequence[IntegralImage]) -> np.ndarray:
    """
    Flattens the padded integral images of equally sized windows into an (N, (s+1)^2) array.
    """
    return np.stack([ii.padded.reshape(-1) for ii in integrals])


def _bank_values(bank: FeatureBank, stack: np.ndarray, row_width: int, sigma: np.ndarray,
                 start: int, stop: int) -> np.ndarray:
    """
    Normalized values of features [start, stop) on every window of the stack.

    Args:
        bank (FeatureBank): Packed features.
        stack (np.ndarray): Output of `_window_stack`.
        row_width (int): Side of the padded integral (window side + 1).
        sigma (np.ndarray): (N,) clamped window standard deviations.
        start, stop (int): Feature index range.

    Returns:
        np.ndarray: (N, stop - start) float64, value / sigma, bit-identical to the scalar path.
    """
    out = np.empty((stack.shape[0], stop - start), dtype=np.float64)
    ks = bank.k[start:stop]
    for k in np.unique(ks):
        columns = np.nonzero(ks == k)[0]
        rows = columns + start
        value = np.zeros((stack.shape[0], len(columns)), dtype=np.float64)
        for slot in range(int(k)):
            x0, y0, w, h = (bank.geometry[rows, slot, i] for i in range(4))
            x1 = x0 + w
            y1 = y0 + h
            sums = (stack[:, y1 * row_width + x1] - stack[:, y0 * row_width + x1]
                    - stack[:, y1 * row_width + x0] + stack[:, y0 * row_width + x0])
            value += bank.weights[rows, slot] * (sums.astype(np.float64) / (w * h).astype(np.float64))
        out[:, columns] = value / sigma[:, None]
    return out
