import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..types.background_model import BackgroundModel
from ..types.blob import Blob
from ..types.cascade_model import Cascade
from ..types.gray_image import GrayImage
from ..types.rect import Rect
from ..types.scan_config import ScanConfig
from ..types.track import Track
from ..types.track_set import TrackSet
from ..types.tracking_config import TrackingConfig
from ..types.tracking_report import CrossingEvent, FrameSummary, TrackingReport
from ..types.virtual_line import VirtualLine
from .detector import _detect
from .imaging import _draw_rect

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class ShapeMismatch(Exception):
    """Exception raised when a frame does not match the background model's shape."""

    def __init__(self, expected=None, actual=None, message=None):
        self.expected = expected
        self.actual = actual
        self.message = message or f"Frame shape {actual} does not match the background model shape {expected}"
        super().__init__(self.message)

    def __str__(self):
        return self.message


class InsufficientHistory(Exception):
    """Exception raised when a track has fewer than two centroids."""

    def __init__(self, track_id=None, message=None):
        self.track_id = track_id
        self.message = message or f"Track {track_id} needs at least two centroids to cross a line"
        super().__init__(self.message)

    def __str__(self):
        return self.message


class InconsistentFrames(Exception):
    """Exception raised when a frame sequence is empty or changes size."""

    def __init__(self, frame_index=None, message="Inconsistent frame sequence"):
        self.frame_index = frame_index
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


def _update_background(model: BackgroundModel, frame: GrayImage) -> np.ndarray:
    """
    Computes the foreground mask of a frame and folds the frame into the running average.

    A pixel is foreground iff |frame - mean| > threshold, with the mean taken
    before the update. Then mean <- (1 - rate) * mean + rate * frame. The first
    frame only initializes the mean.

    Args:
        model (BackgroundModel): Model, updated in place.
        frame (GrayImage): The next frame.

    Returns:
        np.ndarray: (height, width) boolean mask.

    Raises:
        ShapeMismatch: If the frame size differs from the model's.
    """
    pixels = frame.pixels.astype(np.float64)
    if model.mean is None:
        model.mean = pixels.copy()
        return np.zeros(pixels.shape, dtype=bool)
    if model.mean.shape != pixels.shape:
        raise ShapeMismatch(model.mean.shape, pixels.shape)

    mask = np.abs(pixels - model.mean) > model.threshold
    model.mean = (1.0 - model.learning_rate) * model.mean + model.learning_rate * pixels
    return mask


def _blob_angle(rows: np.ndarray, cols: np.ndarray, cy: float, cx: float) -> float:
    # principal axis from second central moments, degrees in (-90, 90]
    dy = rows - cy
    dx = cols - cx
    mu20 = float(np.mean(dx * dx))
    mu02 = float(np.mean(dy * dy))
    mu11 = float(np.mean(dx * dy))
    if mu11 == 0.0 and mu20 == mu02:
        return 0.0
    return math.degrees(0.5 * math.atan2(2.0 * mu11, mu20 - mu02))


def _extract_blobs(mask: np.ndarray, min_blob_area: int) -> List[Blob]:
    """
    8-connected components of a binary mask.

    Args:
        mask (np.ndarray): (height, width) array, nonzero means foreground.
        min_blob_area (int): Components with fewer pixels are dropped.

    Returns:
        List[Blob]: Blobs ordered by (bbox.y, bbox.x).
    """
    labels, count = ndimage.label(np.asarray(mask) != 0, structure=EIGHT_CONNECTED)
    if count == 0:
        return []

    blobs = []
    for label, window in enumerate(ndimage.find_objects(labels), start=1):
        rows, cols = np.nonzero(labels[window] == label)
        if rows.size < min_blob_area:
            continue
        rows = rows + window[0].start
        cols = cols + window[1].start
        cy = float(rows.mean())
        cx = float(cols.mean())
        bbox = Rect(window[1].start, window[0].start,
                    window[1].stop - window[1].start, window[0].stop - window[0].start)
        blobs.append(Blob(int(rows.size), bbox, (cx, cy), _blob_angle(rows, cols, cy, cx)))
    blobs.sort(key=lambda blob: (blob.bbox.y, blob.bbox.x))
    return blobs


def _detection_blobs(cascade: Cascade, frame: GrayImage, scan_cfg: ScanConfig, min_blob_area: int,
                     workers: int = 1) -> List[Blob]:
    """
    Blobs standing in for cascade detections: one solid blob per detected rect.
    """
    blobs = []
    for det in _detect(cascade, frame, scan_cfg, workers):
        r = det.rect
        if r.area < min_blob_area:
            continue
        centroid = (r.x + (r.w - 1) / 2.0, r.y + (r.h - 1) / 2.0)
        blobs.append(Blob(r.area, r, centroid))
    blobs.sort(key=lambda blob: (blob.bbox.y, blob.bbox.x))
    return blobs


def _distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _associate_tracks(tracks: TrackSet, blobs: Sequence[Blob], frame_index: int, max_dist: float,
                      max_missed: int) -> TrackSet:
    """
    Matches this frame's blobs to the active tracks, greedy nearest centroid first.

    Candidate pairs within `max_dist` are taken in order of (distance, track
    id, blob index), each track and blob at most once. Matched tracks are
    extended, unmatched blobs start new tracks, unmatched tracks count a miss
    and are retired once their misses exceed `max_missed`.

    Args:
        tracks (TrackSet): State, updated in place.
        blobs (Sequence[Blob]): Blobs of the frame.
        frame_index (int): Index of the frame.
        max_dist (float): Largest centroid distance of a match.
        max_missed (int): Consecutive misses a track survives.

    Returns:
        TrackSet: The updated state (same object).
    """
    pairs = []
    for track in tracks.active:
        for blob_index, blob in enumerate(blobs):
            d = _distance(track.last_centroid, blob.centroid)
            if d <= max_dist:
                pairs.append((d, track.id, blob_index, track))
    pairs.sort(key=lambda pair: pair[:3])

    matched_tracks = set()
    matched_blobs = set()
    for _, track_id, blob_index, track in pairs:
        if track_id in matched_tracks or blob_index in matched_blobs:
            continue
        track.extend(frame_index, blobs[blob_index].centroid)
        matched_tracks.add(track_id)
        matched_blobs.add(blob_index)

    still_active = []
    for track in tracks.active:
        if track.id not in matched_tracks:
            track.missed_frames += 1
            if track.missed_frames > max_missed:
                logger.debug("Track %d retired at frame %d", track.id, frame_index)
                tracks.retired.append(track)
                continue
        still_active.append(track)

    for blob_index, blob in enumerate(blobs):
        if blob_index in matched_blobs:
            continue
        track = Track(tracks.next_id, [(frame_index, blob.centroid)])
        tracks.next_id += 1
        still_active.append(track)
    tracks.active = still_active
    return tracks


def _sides(track: Track, line: VirtualLine) -> List[int]:
    """
    Side sign of every centroid; a centroid exactly on the line takes the side
    of the next centroid off the line (0 if there is none).
    """
    signs = []
    for _, centroid in track.centroid_history:
        value = line.side(centroid)
        signs.append(1 if value > 0 else (-1 if value < 0 else 0))
    following = 0
    for i in range(len(signs) - 1, -1, -1):
        if signs[i] == 0:
            signs[i] = following
        else:
            following = signs[i]
    return signs


def _crossing_events(track: Track, line: VirtualLine) -> List[CrossingEvent]:
    """
    Crossing events of a track, each dated at the frame of the segment's end point.

    A side change only counts when the path meets the line between its endpoints.

    Raises:
        InsufficientHistory: If the track has fewer than two centroids.
    """
    if len(track.centroid_history) < 2:
        raise InsufficientHistory(track.id)
    signs = _sides(track, line)
    events = []
    history = track.centroid_history
    for i in range(len(signs) - 1):
        if signs[i] * signs[i + 1] >= 0:
            continue
        if not line.covers(line.crossing_point(history[i][1], history[i + 1][1])):
            continue
        events.append(CrossingEvent(history[i + 1][0], track.id, signs[i + 1]))
    return events


def _count_crossings(track: Track, line: VirtualLine) -> int:
    """
    Net signed crossings of a track's centroid path over the line.

    Returns:
        int: (# negative-to-positive crossings) - (# positive-to-negative crossings).

    Raises:
        InsufficientHistory: If the track has fewer than two centroids.
    """
    return sum(event.sign for event in _crossing_events(track, line))


def _run_pipeline(frames: Sequence[GrayImage], cfg: TrackingConfig, cascade: Optional[Cascade] = None,
                  scan_cfg: Optional[ScanConfig] = None, draw: bool = False,
                  workers: int = 1) -> TrackingReport:
    """
    Background subtraction, blob extraction, association and line counting over a frame sequence.

    Args:
        frames (Sequence[GrayImage]): Frames in order; frame indices start at 1.
        cfg (TrackingConfig): Pipeline knobs.
        cascade (Optional[Cascade]): Needed when cfg.mask_source is "detector".
        scan_cfg (Optional[ScanConfig]): Scan settings of the detector mode.
        draw (bool): Collect copies of the frames with blob boxes burned in.
        workers (int): Threads for the detector mode.

    Returns:
        TrackingReport: Per-frame counts, crossing events and totals.

    Raises:
        InconsistentFrames: If there are no frames or their sizes differ.
    """
    if not frames:
        raise InconsistentFrames(None, "No frames to process")
    if cfg.mask_source == "detector" and cascade is None:
        raise ValueError("The detector mask source needs a cascade")
    width, height = frames[0].width, frames[0].height
    line = cfg.line_for(width, height)
    model = BackgroundModel(cfg.learning_rate, cfg.threshold)
    tracks = TrackSet()
    report = TrackingReport()

    for index, frame in enumerate(frames, start=1):
        if frame.width != width or frame.height != height:
            raise InconsistentFrames(
                index, f"Frame {index} is {frame.width}x{frame.height}, expected {width}x{height}")
        if cfg.mask_source == "detector":
            blobs = _detection_blobs(cascade, frame, scan_cfg or ScanConfig(), cfg.min_blob_area, workers)
        else:
            blobs = _extract_blobs(_update_background(model, frame), cfg.min_blob_area)
        _associate_tracks(tracks, blobs, index, cfg.max_dist, cfg.max_missed)
        report.frames.append(FrameSummary(index, len(blobs), len(tracks.active)))
        if draw:
            annotated = frame
            for blob in blobs:
                annotated = _draw_rect(annotated, blob.bbox)
            report.annotated.append(annotated)

    for track in tracks.all_tracks():
        if len(track.centroid_history) >= 2:
            report.events.extend(_crossing_events(track, line))
    report.events.sort(key=lambda event: (event.frame, event.track_id))
    logger.info("Processed %d frames, %d tracks, %d up, %d down",
                len(frames), tracks.next_id - 1, report.up, report.down)
    return report
