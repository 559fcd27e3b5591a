import math
from collections import deque

import numpy as np
import pytest

from pyhaar_cascade.methods.dataset import _synth_sequence
from pyhaar_cascade.methods.tracking import (
    InconsistentFrames,
    InsufficientHistory,
    ShapeMismatch,
    _associate_tracks,
    _count_crossings,
    _crossing_events,
    _extract_blobs,
    _run_pipeline,
    _update_background,
)
from pyhaar_cascade.types.background_model import BackgroundModel
from pyhaar_cascade.types.blob import Blob
from pyhaar_cascade.types.cascade_model import Cascade
from pyhaar_cascade.types.gray_image import GrayImage
from pyhaar_cascade.types.haar_feature import BaseWindow, FeatureKind, HaarFeature
from pyhaar_cascade.types.rect import Rect
from pyhaar_cascade.types.scan_config import ScanConfig
from pyhaar_cascade.types.strong_classifier import StrongClassifier
from pyhaar_cascade.types.track import Track
from pyhaar_cascade.types.track_set import TrackSet
from pyhaar_cascade.types.tracking_config import TrackingConfig
from pyhaar_cascade.types.virtual_line import VirtualLine
from pyhaar_cascade.types.weak_classifier import WeakClassifier


def _blob(x, y):
    return Blob(1, Rect(int(x), int(y), 1, 1), (float(x), float(y)))


def test_constant_frames_give_empty_masks():
    model = BackgroundModel(0.05, 10.0)
    frame = GrayImage.filled(8, 6, 90)
    for _ in range(5):
        assert not _update_background(model, frame).any()


def test_jumping_pixel_is_foreground():
    model = BackgroundModel(0.05, 25.0)
    _update_background(model, GrayImage.filled(8, 6, 0))
    pixels = np.zeros((6, 8), dtype=np.uint8)
    pixels[2, 3] = 255
    mask = _update_background(model, GrayImage.from_array(pixels))
    assert mask.dtype == bool
    assert mask.sum() == 1 and mask[2, 3]
    assert model.mean[2, 3] == pytest.approx(0.05 * 255)


def test_background_matches_update_equations():
    rng = np.random.default_rng(3)
    frames = [GrayImage.from_array(rng.integers(0, 256, size=(5, 7))) for _ in range(12)]
    rate, threshold = 0.1, 40.0
    model = BackgroundModel(rate, threshold)
    mean = None
    for frame in frames:
        mask = _update_background(model, frame)
        if mean is None:
            mean = [[float(frame.pixel(x, y)) for x in range(7)] for y in range(5)]
            assert not mask.any()
            continue
        for y in range(5):
            for x in range(7):
                p = float(frame.pixel(x, y))
                assert bool(mask[y, x]) == (abs(p - mean[y][x]) > threshold)
                mean[y][x] = (1.0 - rate) * mean[y][x] + rate * p
        assert np.array_equal(model.mean, np.asarray(mean))


def test_background_rejects_other_shapes():
    model = BackgroundModel()
    _update_background(model, GrayImage.filled(8, 6, 0))
    with pytest.raises(ShapeMismatch):
        _update_background(model, GrayImage.filled(6, 8, 0))


def test_empty_mask_has_no_blobs():
    assert _extract_blobs(np.zeros((10, 10), dtype=bool), 1) == []


def test_single_block_blob():
    mask = np.zeros((12, 12), dtype=bool)
    mask[5:8, 5:8] = True
    blobs = _extract_blobs(mask, 1)
    assert len(blobs) == 1
    assert blobs[0].pixel_count == 9
    assert blobs[0].centroid == (6.0, 6.0)
    assert blobs[0].bbox == Rect(5, 5, 3, 3)
    assert _extract_blobs(mask, 10) == []


def test_diagonal_pixels_are_connected():
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = mask[1, 1] = mask[2, 2] = True
    assert [blob.pixel_count for blob in _extract_blobs(mask, 1)] == [3]


@pytest.mark.parametrize("rows, cols, angle", [
    (slice(5, 7), slice(2, 15), 0.0),
    (slice(2, 15), slice(5, 7), 90.0),
    (slice(4, 10), slice(4, 10), 0.0),
])
def test_blob_angle_of_bars(rows, cols, angle):
    mask = np.zeros((20, 20), dtype=bool)
    mask[rows, cols] = True
    (blob,) = _extract_blobs(mask, 1)
    assert blob.angle == pytest.approx(angle)


def test_blob_angle_of_diagonals():
    # image rows grow downwards, so the main diagonal leans at +45 degrees
    assert _extract_blobs(np.eye(10, dtype=bool), 1)[0].angle == pytest.approx(45.0)
    assert _extract_blobs(np.fliplr(np.eye(10, dtype=bool)), 1)[0].angle == pytest.approx(-45.0)


def _flood_fill(mask):
    height, width = mask.shape
    seen = np.zeros_like(mask)
    components = []
    for y in range(height):
        for x in range(width):
            if not mask[y, x] or seen[y, x]:
                continue
            pixels = []
            queue = deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                pixels.append((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < height and 0 <= nx < width and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            components.append(pixels)
    return components


def test_blobs_match_flood_fill():
    rng = np.random.default_rng(8)
    for _ in range(50):
        mask = rng.random((16, 20)) < 0.35
        expected = set()
        for pixels in _flood_fill(mask):
            ys = [p[0] for p in pixels]
            xs = [p[1] for p in pixels]
            bbox = (min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1)
            expected.add((len(pixels), bbox, round(sum(xs) / len(xs), 9), round(sum(ys) / len(ys), 9)))
        blobs = _extract_blobs(mask, 1)
        found = {(b.pixel_count, tuple(b.bbox.to_list()), round(b.centroid[0], 9), round(b.centroid[1], 9))
                 for b in blobs}
        assert found == expected
        assert len(blobs) == len(expected)
        assert sum(b.pixel_count for b in blobs) == int(mask.sum())
        assert sum(b.pixel_count for b in _extract_blobs(mask, 3)) <= int(mask.sum())
        assert [(b.bbox.y, b.bbox.x) for b in blobs] == sorted((b.bbox.y, b.bbox.x) for b in blobs)


def test_nearby_blob_extends_track():
    tracks = TrackSet([Track(1, [(1, (10.0, 10.0))])], [], 2)
    _associate_tracks(tracks, [_blob(12, 10)], 2, 5.0, 3)
    assert len(tracks.active) == 1
    assert tracks.active[0].centroid_history == [(1, (10.0, 10.0)), (2, (12.0, 10.0))]
    assert tracks.next_id == 2


def test_far_blob_starts_new_track():
    tracks = TrackSet([Track(1, [(1, (10.0, 10.0))])], [], 2)
    _associate_tracks(tracks, [_blob(40, 10)], 2, 5.0, 3)
    assert [track.id for track in tracks.active] == [1, 2]
    assert tracks.active[0].missed_frames == 1
    assert tracks.next_id == 3


def test_track_retired_after_too_many_misses():
    tracks = TrackSet([Track(1, [(1, (10.0, 10.0))])], [], 2)
    for frame in range(2, 5):
        _associate_tracks(tracks, [], frame, 5.0, 2)
        assert len(tracks.active) == (1 if frame < 4 else 0)
    assert [track.id for track in tracks.retired] == [1]

    _associate_tracks(tracks, [_blob(10, 10)], 5, 5.0, 2)
    assert [track.id for track in tracks.active] == [2]
    assert [track.id for track in tracks.all_tracks()] == [1, 2]


def _greedy_oracle(centroids, blobs, max_dist):
    matches = {}
    free_tracks = set(range(len(centroids)))
    free_blobs = set(range(len(blobs)))
    while True:
        best = None
        for t in free_tracks:
            for b in free_blobs:
                d = math.hypot(centroids[t][0] - blobs[b].centroid[0], centroids[t][1] - blobs[b].centroid[1])
                if d <= max_dist and (best is None or (d, t, b) < best):
                    best = (d, t, b)
        if best is None:
            return matches
        matches[best[1]] = best[2]
        free_tracks.discard(best[1])
        free_blobs.discard(best[2])


def test_association_matches_greedy_oracle():
    rng = np.random.default_rng(9)
    for _ in range(100):
        centroids = [tuple(float(v) for v in rng.integers(0, 40, size=2)) for _ in range(int(rng.integers(0, 8)))]
        blobs = [_blob(*rng.integers(0, 40, size=2)) for _ in range(int(rng.integers(0, 8)))]
        tracks = TrackSet([Track(i + 1, [(1, c)]) for i, c in enumerate(centroids)], [], len(centroids) + 1)
        _associate_tracks(tracks, blobs, 2, 8.0, 5)

        expected = _greedy_oracle(centroids, blobs, 8.0)
        by_id = {track.id: track for track in tracks.active}
        for t in range(len(centroids)):
            history = by_id[t + 1].centroid_history
            if t in expected:
                assert history[-1] == (2, blobs[expected[t]].centroid)
            else:
                assert len(history) == 1
        assert len(tracks.active) == len(centroids) + len(blobs) - len(expected)


LINE = VirtualLine.vertical(5.0, 10.0)


def _track(*points):
    return Track(1, [(i + 1, (float(x), float(y))) for i, (x, y) in enumerate(points)])


def test_crossing_examples():
    assert _count_crossings(_track((0, 3), (10, 3)), LINE) == 1
    assert _count_crossings(_track((10, 3), (0, 3)), LINE) == -1
    assert _count_crossings(_track((0, 3), (2, 4), (4, 9)), LINE) == 0
    assert _count_crossings(_track((0, 3), (10, 3), (1, 2), (9, 9)), LINE) == 1
    assert _crossing_events(_track((0, 3), (3, 3), (8, 3)), LINE)[0].frame == 3


def test_touching_the_line():
    assert _count_crossings(_track((0, 3), (5, 3), (10, 3)), LINE) == 1
    assert _count_crossings(_track((0, 3), (5, 3), (0, 3)), LINE) == 0
    assert _count_crossings(_track((5, 1), (5, 8)), LINE) == 0


def test_crossing_needs_two_points():
    with pytest.raises(InsufficientHistory):
        _count_crossings(_track((0, 3)), LINE)


def _dense_crossings(points, line, steps=200):
    total = 0
    previous = 0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        for k in range(steps + 1):
            t = k / float(steps)
            value = line.side((x0 + (x1 - x0) * t, y0 + (y1 - y0) * t))
            sign = 1 if value > 0 else (-1 if value < 0 else 0)
            if sign == 0:
                continue
            if previous and sign != previous:
                total += sign
            previous = sign
    return total


def _long_line(a, b, sign):
    # same orientation, endpoints pushed far past the sampled square
    dx, dy = b[0] - a[0], b[1] - a[1]
    return VirtualLine((a[0] - 1000 * dx, a[1] - 1000 * dy), (b[0] + 1000 * dx, b[1] + 1000 * dy), sign)


def test_crossings_match_dense_resampling():
    rng = np.random.default_rng(10)
    for _ in range(200):
        points = [tuple(rng.uniform(0, 100, size=2)) for _ in range(int(rng.integers(2, 9)))]
        a, b = tuple(rng.uniform(0, 100, size=2)), tuple(rng.uniform(0, 100, size=2))
        line = _long_line(a, b, int(rng.choice([-1, 1])))
        track = Track(1, [(i + 1, (float(x), float(y))) for i, (x, y) in enumerate(points)])
        assert _count_crossings(track, line) == _dense_crossings(points, line)


def test_passing_beyond_the_gate_is_not_a_crossing():
    gate = VirtualLine((50.0, 0.0), (50.0, 10.0), -1)
    assert _count_crossings(_track((0, 100), (100, 100)), gate) == 0
    assert _count_crossings(_track((0, 5), (100, 5)), gate) == 1
    assert _count_crossings(_track((0, 10), (100, 10)), gate) == 1
    assert _count_crossings(_track((0, 10.5), (100, 10.5)), gate) == 0
    # touches the line below the gate, then crosses back inside it
    assert _count_crossings(_track((0, 30), (50, 30), (100, 30), (0, -20)), gate) == -1


def _orientation(p, q, r):
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segment_crossings(points, gate):
    total = 0
    for p, q in zip(points, points[1:]):
        sp, sq = gate.side(p), gate.side(q)
        if sp * sq < 0 and _orientation(p, q, gate.start) * _orientation(p, q, gate.end) <= 0:
            total += 1 if sq > 0 else -1
    return total


def test_crossings_match_segment_intersection():
    rng = np.random.default_rng(12)
    for _ in range(300):
        points = [tuple(rng.uniform(0, 100, size=2)) for _ in range(int(rng.integers(2, 9)))]
        a, b = tuple(rng.uniform(20, 80, size=2)), tuple(rng.uniform(20, 80, size=2))
        gate = VirtualLine(a, b, int(rng.choice([-1, 1])))
        track = Track(1, [(i + 1, (float(x), float(y))) for i, (x, y) in enumerate(points)])
        assert _count_crossings(track, gate) == _segment_crossings(points, gate)


def _totals(frames):
    return _run_pipeline(frames, TrackingConfig()).totals()


def test_single_mover_counts_once():
    report = _run_pipeline(_synth_sequence("single", 1), TrackingConfig(), draw=True)
    assert report.totals() == (1, 0)
    lines = report.to_text().splitlines()
    assert lines[0] == "F 1 0 0"
    assert "X 23 1 +1" in lines
    assert lines[-1] == "TOTAL 1 0"
    assert len([line for line in lines if line.startswith("F ")]) == 48
    assert len(report.annotated) == 48


def test_opposite_movers():
    assert _totals(_synth_sequence("opposite", 2)) == (1, 1)


def test_static_scene():
    report = _run_pipeline(_synth_sequence("static", 3), TrackingConfig())
    assert report.totals() == (0, 0)
    assert all(summary.blobs == 0 and summary.tracks == 0 for summary in report.frames)


def test_reversed_sequence_negates_counts():
    frames = _synth_sequence("single", 4)
    assert _totals(frames) == (1, 0)
    assert _totals(frames[::-1]) == (0, 1)


def test_pipeline_is_deterministic():
    frames = _synth_sequence("opposite", 5)
    assert _run_pipeline(frames, TrackingConfig()).to_text() == _run_pipeline(frames, TrackingConfig()).to_text()


def test_pipeline_rejects_bad_sequences():
    with pytest.raises(InconsistentFrames):
        _run_pipeline([], TrackingConfig())
    with pytest.raises(InconsistentFrames) as info:
        _run_pipeline([GrayImage.filled(10, 10, 0), GrayImage.filled(12, 10, 0)], TrackingConfig())
    assert info.value.frame_index == 2
    with pytest.raises(ValueError):
        _run_pipeline([GrayImage.filled(30, 30, 0)], TrackingConfig(mask_source="detector"))


def test_detector_mask_source():
    left = HaarFeature(FeatureKind.EDGE_VERTICAL, (Rect(0, 6, 8, 12), Rect(8, 6, 8, 12)), (1.0, -1.0))
    right = HaarFeature(FeatureKind.EDGE_VERTICAL, (Rect(8, 6, 8, 12), Rect(16, 6, 8, 12)), (1.0, -1.0))
    top = HaarFeature(FeatureKind.EDGE_HORIZONTAL, (Rect(6, 0, 12, 8), Rect(6, 8, 12, 8)), (1.0, -1.0))
    bottom = HaarFeature(FeatureKind.EDGE_HORIZONTAL, (Rect(6, 8, 12, 8), Rect(6, 16, 12, 8)), (1.0, -1.0))
    stages = tuple(
        StrongClassifier((WeakClassifier(0, a, 1, -0.5, 1.0), WeakClassifier(1, b, -1, 0.5, 1.0)), 2.0)
        for a, b in ((left, right), (top, bottom)))
    cascade = Cascade(BaseWindow(24), stages)
    cfg = TrackingConfig(mask_source="detector")
    report = _run_pipeline(_synth_sequence("single", 6), cfg, cascade=cascade, scan_cfg=ScanConfig(max_scale=1.6))
    assert report.totals() == (1, 0)
