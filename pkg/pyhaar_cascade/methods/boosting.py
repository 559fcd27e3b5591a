import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..types.haar_feature import HaarFeature
from ..types.integral_image import IntegralImage
from ..types.sample import Sample
from ..types.strong_classifier import StrongClassifier
from ..types.weak_classifier import WeakClassifier
from .features import (
    _bank_values,
    _eval_feature,
    _feature_bank,
    _window_sigma,
    _window_stack,
)
from .imaging import _integral

logger = logging.getLogger(__name__)

MAX_ALPHA = math.log(1e10)
DEFAULT_CHUNK = 512


class DegenerateSampleSet(Exception):
    """Exception raised when a training set does not contain both classes."""

    def __init__(self, positives=0, negatives=0, message=None):
        self.positives = positives
        self.negatives = negatives
        self.message = message or (
            f"Training needs both classes, got {positives} positive and {negatives} negative samples")
        super().__init__(self.message)

    def __str__(self):
        return self.message


class BoostingAbort(Exception):
    """Exception raised when no stump does better than chance on the weighted samples."""

    def __init__(self, round_index=None, error=None, message=None):
        self.round_index = round_index
        self.error = error
        self.message = message or (
            f"Boosting round {round_index}: best weighted error {error} is not below 0.5")
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _eval_stump(c: WeakClassifier, f_value: float) -> int:
    """
    Decision stump: 1 iff p * f < p * threshold (strict), else 0.
    """
    return 1 if c.polarity * f_value < c.polarity * c.threshold else 0


def _alpha_for(error: float) -> float:
    """
    Vote weight ln(1 / beta) with beta = e / (1 - e), capped at ln(1e10).
    """
    if error <= 0.0:
        return MAX_ALPHA
    return min(math.log((1.0 - error) / error), MAX_ALPHA)


def _best_stumps(values: np.ndarray, labels: np.ndarray, weights: np.ndarray
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Finds the minimum-error (polarity, threshold) of every feature column.

    Each column is sorted once and the weighted class mass below every candidate
    threshold is swept with a cumulative sum. Candidates are the midpoints between
    consecutive distinct values plus -inf and +inf. Ties in error go to the
    smaller threshold, then to polarity +1.

    Args:
        values (np.ndarray): (N, F) feature values.
        labels (np.ndarray): (N,) booleans, True for positives.
        weights (np.ndarray): (N,) non-negative sample weights.

    Returns:
        Tuple[np.ndarray, np.ndarray, np.ndarray]: (errors, polarities, thresholds), each (F,).
    """
    n, count = values.shape
    order = np.argsort(values, axis=0, kind="stable")
    sorted_values = np.take_along_axis(values, order, axis=0)
    sorted_weights = weights[order]
    sorted_labels = labels[order]

    zeros = np.zeros((1, count), dtype=np.float64)
    below_pos = np.vstack([zeros, np.cumsum(np.where(sorted_labels, sorted_weights, 0.0), axis=0)])
    below_neg = np.vstack([zeros, np.cumsum(np.where(sorted_labels, 0.0, sorted_weights), axis=0)])
    total_pos = below_pos[-1]
    total_neg = below_neg[-1]

    # p = +1 predicts positive below the threshold, p = -1 above it
    err_plus = below_neg + (total_pos - below_pos)
    err_minus = below_pos + (total_neg - below_neg)

    valid = np.ones((n + 1, count), dtype=bool)
    valid[1:n] = sorted_values[:-1] < sorted_values[1:]
    err_plus[~valid] = np.inf
    err_minus[~valid] = np.inf

    candidates = np.empty((2 * (n + 1), count), dtype=np.float64)
    candidates[0::2] = err_plus
    candidates[1::2] = err_minus
    best = np.argmin(candidates, axis=0)
    cols = np.arange(count)
    errors = candidates[best, cols]
    split = best // 2
    polarities = np.where(best % 2 == 0, 1, -1)

    thresholds = np.empty(count, dtype=np.float64)
    thresholds[split == 0] = -np.inf
    thresholds[split == n] = np.inf
    inner = (split > 0) & (split < n)
    if np.any(inner):
        lo = sorted_values[split[inner] - 1, cols[inner]]
        hi = sorted_values[split[inner], cols[inner]]
        mid = (lo + hi) / 2.0
        # adjacent floats can round the midpoint down onto the lower value
        thresholds[inner] = np.where(mid > lo, mid, hi)
    return errors, polarities, thresholds


def _train_stump_on_values(values: Sequence[float], labels: Sequence[bool], weights: Sequence[float]
                           ) -> Tuple[int, float, float]:
    """
    One-dimensional stump search.

    Returns:
        Tuple[int, float, float]: (polarity, threshold, weighted error).

    Raises:
        DegenerateSampleSet: If only one class is present.
    """
    labels = np.asarray(labels, dtype=bool)
    positives = int(labels.sum())
    if positives == 0 or positives == len(labels):
        raise DegenerateSampleSet(positives, len(labels) - positives)
    column = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    errors, polarities, thresholds = _best_stumps(column, labels, np.asarray(weights, dtype=np.float64))
    return int(polarities[0]), float(thresholds[0]), float(errors[0])


def _sample_values(samples: Sequence[Sample], feature: HaarFeature, variance_floor: float) -> np.ndarray:
    values = []
    for sample in samples:
        ii = _integral(sample.window)
        sigma = _window_sigma(ii, (0, 0), sample.window.width, 1.0, variance_floor)
        values.append(_eval_feature(feature, ii, (0, 0)) / sigma)
    return np.asarray(values, dtype=np.float64)


def _train_stump(samples: Sequence[Sample], feature: HaarFeature, feature_index: int = 0,
                 variance_floor: float = 1.0) -> Tuple[WeakClassifier, float]:
    """
    Trains the best decision stump for a single feature on weighted samples.

    Feature values are variance-normalized by each sample window's standard deviation.

    Args:
        samples (Sequence[Sample]): Weighted samples, both classes present.
        feature (HaarFeature): The feature to threshold.
        feature_index (int): Index recorded in the returned classifier.
        variance_floor (float): Lower clamp on the window standard deviation.

    Returns:
        Tuple[WeakClassifier, float]: The stump (alpha from its error) and its weighted error.

    Raises:
        DegenerateSampleSet: If only one class is present.
    """
    labels = [sample.is_positive for sample in samples]
    weights = np.asarray([sample.boost_weight for sample in samples], dtype=np.float64)
    weights = weights / weights.sum()
    polarity, threshold, error = _train_stump_on_values(
        _sample_values(samples, feature, variance_floor), labels, weights)
    stump = WeakClassifier(feature_index, feature, polarity, threshold, _alpha_for(error))
    return stump, error


class StageBooster:
    """
    Incremental AdaBoost over a fixed sample set and feature pool.

    Each call to `add_round` normalizes the weights, picks the globally best
    stump, and reweights the samples. The feature search is split into chunks
    that may run on worker threads; chunk winners are merged by
    (error, feature index), so the result does not depend on the worker count.
    """

    def __init__(self, samples: Sequence[Sample], features: Sequence[HaarFeature],
                 variance_floor: float = 1.0, workers: int = 1, cache_values: bool = False,
                 chunk_size: int = DEFAULT_CHUNK):
        self.labels = np.asarray([sample.is_positive for sample in samples], dtype=bool)
        positives = int(self.labels.sum())
        if positives == 0 or positives == len(samples):
            raise DegenerateSampleSet(positives, len(samples) - positives)
        if not features:
            raise ValueError("The feature pool is empty")

        side = samples[0].window.width
        integrals: List[IntegralImage] = []
        for sample in samples:
            if sample.window.width != side or sample.window.height != side:
                raise ValueError(f"Every sample must be a {side}x{side} window")
            integrals.append(_integral(sample.window))

        self.side = side
        self.variance_floor = variance_floor
        self.workers = max(1, workers)
        self.chunk_size = chunk_size
        self.bank = _feature_bank(list(features))
        self.stack = _window_stack(integrals)
        self.sigma = np.asarray(
            [_window_sigma(ii, (0, 0), side, 1.0, variance_floor) for ii in integrals], dtype=np.float64)
        self.weights = np.asarray([sample.boost_weight for sample in samples], dtype=np.float64)
        self.values = None
        self.values = self._values(0, len(self.bank)) if cache_values else None

        self.stumps: List[WeakClassifier] = []
        self.errors: List[float] = []
        self.scores = np.zeros(len(samples), dtype=np.float64)
        self.converged = False

    def _values(self, start: int, stop: int) -> np.ndarray:
        if self.values is not None:
            return self.values[:, start:stop]
        return _bank_values(self.bank, self.stack, self.side + 1, self.sigma, start, stop)

    def _search_chunk(self, bounds: Tuple[int, int], weights: np.ndarray) -> Tuple[float, int, int, float]:
        start, stop = bounds
        errors, polarities, thresholds = _best_stumps(self._values(start, stop), self.labels, weights)
        best = int(np.argmin(errors))
        return float(errors[best]), start + best, int(polarities[best]), float(thresholds[best])

    def _search(self, weights: np.ndarray) -> Tuple[float, int, int, float]:
        chunks = [(start, min(start + self.chunk_size, len(self.bank)))
                  for start in range(0, len(self.bank), self.chunk_size)]
        if self.workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda bounds: self._search_chunk(bounds, weights), chunks))
        else:
            results = [self._search_chunk(bounds, weights) for bounds in chunks]
        return min(results, key=lambda result: (result[0], result[1]))

    def add_round(self) -> Optional[WeakClassifier]:
        """
        Runs one boosting round.

        Returns:
            Optional[WeakClassifier]: The new stump, or None once boosting has
            converged (a previous round reached zero weighted error).

        Raises:
            BoostingAbort: If the best stump's weighted error is 0.5 or more.
        """
        if self.converged:
            return None

        weights = self.weights / self.weights.sum()
        error, index, polarity, threshold = self._search(weights)
        round_index = len(self.stumps) + 1
        if error >= 0.5:
            raise BoostingAbort(round_index, error)

        alpha = _alpha_for(error)
        stump = WeakClassifier(index, self.bank.features[index], polarity, threshold, alpha)
        column = self._values(index, index + 1)[:, 0]
        fired = polarity * column < polarity * threshold
        correct = fired == self.labels

        beta = error / (1.0 - error)
        self.weights = np.where(correct, weights * beta, weights)
        self.scores = self.scores + np.where(fired, alpha, 0.0)
        self.stumps.append(stump)
        self.errors.append(error)
        logger.debug("Round %d: feature %d (%s), error %.6f, alpha %.4f",
                     round_index, index, stump.feature.kind.value, error, alpha)

        if error == 0.0:
            self.converged = True
        return stump

    def training_error(self, threshold: Optional[float] = None) -> float:
        """
        Unweighted error of the current vote on the training samples.
        """
        if threshold is None:
            threshold = 0.5 * sum(stump.alpha for stump in self.stumps)
        predicted = self.scores >= threshold
        return float(np.mean(predicted != self.labels))

    def error_bound(self) -> float:
        """
        Product over rounds of 2 * sqrt(e_t * (1 - e_t)), the AdaBoost bound on training error.
        """
        bound = 1.0
        for error in self.errors:
            bound *= 2.0 * math.sqrt(error * (1.0 - error))
        return bound

    def classifier(self, threshold: Optional[float] = None) -> StrongClassifier:
        if not self.stumps:
            raise ValueError("No boosting round has run yet")
        stage = StrongClassifier(tuple(self.stumps), 0.0)
        return stage.with_threshold(stage.default_threshold if threshold is None else threshold)


def _train_stage(samples: Sequence[Sample], features: Sequence[HaarFeature], T: int,
                 variance_floor: float = 1.0, workers: int = 1, cache_values: bool = False) -> StrongClassifier:
    """
    Trains a boosted stage of up to T stumps with discrete AdaBoost.

    Args:
        samples (Sequence[Sample]): Base-window samples of both classes; their
            boost_weight values are the initial weights.
        features (Sequence[HaarFeature]): The feature pool, in enumeration order.
        T (int): Number of rounds, >= 1.
        variance_floor (float): Lower clamp on the window standard deviation.
        workers (int): Threads used for the per-round feature search.
        cache_values (bool): Keep the full (samples x features) value matrix in memory.

    Returns:
        StrongClassifier: The stage with stage_threshold = 0.5 * sum(alpha). Boosting
        stops early after a round with zero weighted error.

    Raises:
        DegenerateSampleSet: If only one class is present.
        BoostingAbort: If a round's best error is 0.5 or more.
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    booster = StageBooster(samples, features, variance_floor, workers, cache_values)
    for _ in range(T):
        if booster.add_round() is None:
            break
    return booster.classifier()


def _strong_score(sc: StrongClassifier, ii: IntegralImage, origin: Tuple[int, int], scale: float,
                  sigma: float) -> float:
    score = 0.0
    for stump in sc.stumps:
        value = _eval_feature(stump.feature, ii, origin, scale) / sigma
        if _eval_stump(stump, value):
            score += stump.alpha
    return score


def _eval_strong(sc: StrongClassifier, ii: IntegralImage, origin: Tuple[int, int], scale: float = 1.0,
                 base_side: int = 24, variance_floor: float = 1.0) -> Tuple[bool, float]:
    """
    Evaluates one stage on one window.

    Args:
        sc (StrongClassifier): The stage.
        ii (IntegralImage): Integral image of the scanned image.
        origin (Tuple[int, int]): Window top-left (x, y).
        scale (float): Detector scale.
        base_side (int): Base window side the stage was trained on.
        variance_floor (float): Lower clamp on the window standard deviation.

    Returns:
        Tuple[bool, float]: (score >= stage_threshold, score) where score = sum of alpha_t * h_t.
    """
    sigma = _window_sigma(ii, origin, base_side, scale, variance_floor)
    score = _strong_score(sc, ii, origin, scale, sigma)
    return score >= sc.stage_threshold, score
