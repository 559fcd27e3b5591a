import json
import os
from dataclasses import replace

import numpy as np
import pytest

from pyhaar_cascade.methods.dataset import (
    MANIFEST_NAME,
    AnnotationBoundsError,
    AnnotationParseError,
    UnknownImageError,
    _center_contrast,
    _evaluate,
    _load_annotations,
    _load_dataset,
    _operating_points,
    _operating_points_csv,
    _save_dataset,
    _square_box,
    _synth_dataset,
    _synth_sequence,
)
from pyhaar_cascade.methods.imaging import _save_pgm
from pyhaar_cascade.types.annotation import Annotation
from pyhaar_cascade.types.detection import Detection
from pyhaar_cascade.types.gray_image import GrayImage
from pyhaar_cascade.types.rect import Rect
from pyhaar_cascade.types.synth_config import SynthConfig
from pyhaar_cascade.util.geometry_util import iou, round_half_up

SMALL = SynthConfig(positives=20, negatives=3, negative_size=40, scenes=4, near_misses=30)


@pytest.fixture(scope="module")
def small_dataset():
    return _synth_dataset(SMALL, 42)


def _write_annotations(tmp_path, text):
    _save_pgm(GrayImage.filled(20, 20, 0), str(tmp_path / "img.pgm"))
    path = tmp_path / "annotations.txt"
    path.write_text(text)
    return str(path)


def test_load_annotations(tmp_path):
    path = _write_annotations(tmp_path, "# scenes\n\nimg.pgm 1 2 3 10 10\nimg.pgm 0\nother.pgm 0\n")
    annotations = _load_annotations(path)
    assert annotations == [
        Annotation("img.pgm", [Rect(2, 3, 10, 10)]),
        Annotation("img.pgm", []),
        Annotation("other.pgm", []),
    ]


@pytest.mark.parametrize("line", [
    "img.pgm 2 2 3 10 10",
    "img.pgm 1 2 3 10",
    "img.pgm one 2 3 10 10",
    "img.pgm 1 2 3 0 10",
    "img.pgm",
    "img.pgm -1",
])
def test_malformed_annotation_names_the_line(tmp_path, line):
    path = _write_annotations(tmp_path, f"img.pgm 0\n# comment\n{line}\n")
    with pytest.raises(AnnotationParseError) as info:
        _load_annotations(path)
    assert info.value.line_number == 3
    assert str(info.value).startswith(f"{path}:3:")


def test_box_outside_image(tmp_path):
    path = _write_annotations(tmp_path, "img.pgm 1 15 15 10 10\n")
    with pytest.raises(AnnotationBoundsError) as info:
        _load_annotations(path)
    assert info.value.box == [15, 15, 10, 10]
    assert len(_load_annotations(path, check_bounds=False)) == 1


def test_synth_is_deterministic(small_dataset):
    again = _synth_dataset(SMALL, 42)
    assert again.positives == small_dataset.positives
    assert again.negatives == small_dataset.negatives
    assert again.scenes == small_dataset.scenes
    assert again.annotations == small_dataset.annotations
    assert again.near_misses == small_dataset.near_misses
    assert _synth_dataset(SMALL, 43).positives != small_dataset.positives


def test_near_misses_do_not_change_the_other_sets(small_dataset):
    without = _synth_dataset(replace(SMALL, near_misses=0), 42)
    assert without.near_misses == []
    assert without.positives == small_dataset.positives
    assert without.scenes == small_dataset.scenes
    assert small_dataset.negative_pool()[:3] == small_dataset.negatives


def test_near_misses_never_look_like_objects():
    cfg = replace(SMALL, noise_amplitude=0, near_misses=300, positives=0, negatives=0, scenes=0)
    ds = _synth_dataset(cfg, 8)
    sizes = set()
    for crop in ds.near_misses:
        assert (crop.width, crop.height) == (24, 24)
        ys, xs = np.nonzero(crop.pixels >= cfg.ground_level + cfg.contrast_min)
        w, h = int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)
        dx = int(xs.min()) - (24 - w) // 2
        dy = int(ys.min()) - (24 - h) // 2
        object_like = (w == h and cfg.square_min <= w <= cfg.square_max
                       and abs(dx) <= cfg.jitter and abs(dy) <= cfg.jitter)
        assert not object_like
        sizes.add(w if w == h else None)
    assert any(s is not None and s < cfg.square_min for s in sizes)
    assert any(s is not None and s > cfg.square_max for s in sizes)


def test_synth_shapes(small_dataset):
    assert len(small_dataset.positives) == 20
    assert all((p.width, p.height) == (24, 24) for p in small_dataset.positives)
    assert all((n.width, n.height) == (40, 40) for n in small_dataset.negatives)
    assert [a.image_path for a in small_dataset.annotations] == [f"scene_{i:06d}.pgm" for i in range(1, 5)]


def test_positives_are_brighter_in_the_centre(small_dataset):
    for positive in small_dataset.positives:
        assert _center_contrast(positive) > 0.0


def test_scene_annotations_hold_the_squares(small_dataset):
    floor = SMALL.ground_level + SMALL.contrast_min - SMALL.noise_amplitude
    for scene, annotation in zip(small_dataset.scenes, small_dataset.annotations):
        for window in annotation.boxes:
            assert window.fits(scene.width, scene.height)
            scale = window.w / float(SMALL.base_window)
            inner = _square_box(window, round_half_up(SMALL.square_min * scale))
            assert scene.pixels[inner.y:inner.bottom, inner.x:inner.right].min() >= floor
        for a in range(len(annotation.boxes)):
            for b in range(a + 1, len(annotation.boxes)):
                assert iou(annotation.boxes[a], annotation.boxes[b]) == 0.0


def test_dataset_round_trip(tmp_path, small_dataset):
    manifest = _save_dataset(small_dataset, str(tmp_path), SMALL, 42)
    assert manifest["positives"] == 20
    assert manifest["objects"] == sum(len(a.boxes) for a in small_dataset.annotations)
    with open(os.path.join(str(tmp_path), MANIFEST_NAME), encoding="utf-8") as handle:
        assert json.load(handle) == manifest

    loaded = _load_dataset(str(tmp_path))
    assert loaded.positives == small_dataset.positives
    assert loaded.negatives == small_dataset.negatives
    assert loaded.scenes == small_dataset.scenes
    assert loaded.annotations == small_dataset.annotations
    assert loaded.near_misses == small_dataset.near_misses
    assert manifest["near_misses"] == 30
    assert len(loaded.negative_pool()) == 33


def test_sequences():
    frames = _synth_sequence("single", 0, frames=10)
    assert len(frames) == 10
    assert int(frames[0].pixels.max()) <= 64
    assert int(frames[5].pixels.max()) >= 196
    with pytest.raises(ValueError):
        _synth_sequence("diagonal", 0)


ANNOTATIONS = [
    Annotation("a.pgm", [Rect(0, 0, 10, 10), Rect(50, 50, 20, 20)]),
    Annotation("b.pgm", []),
]


def test_perfect_and_empty_detections():
    perfect = {"a.pgm": [Detection(Rect(0, 0, 10, 10), 1.0, 1.0), Detection(Rect(50, 50, 20, 20), 2.0, 1.0)]}
    report = _evaluate(perfect, ANNOTATIONS)
    assert report.detection_rate == 1.0
    assert report.false_positives_per_image == 0.0
    assert report.precision == 1.0

    report = _evaluate({}, ANNOTATIONS)
    assert report.detection_rate == 0.0
    assert report.false_positives_per_image == 0.0
    assert (report.images, report.ground_truth, report.detections) == (2, 2, 0)


def test_duplicates_and_misses_are_false_positives():
    dets = {
        "a.pgm": [Detection(Rect(0, 0, 10, 10), 3.0, 1.0), Detection(Rect(1, 0, 10, 10), 2.0, 1.0),
                  Detection(Rect(55, 55, 20, 20), 1.0, 1.0)],
        "b.pgm": [Detection(Rect(5, 5, 24, 24), 1.0, 1.0)],
    }
    report = _evaluate(dets, ANNOTATIONS)
    # the 5-pixel shift leaves IoU 225 / 575 below one half
    assert report.true_positives == 1
    assert report.false_positives == 3
    assert report.detection_rate == 0.5
    assert report.false_positives_per_image == 1.5
    assert [(m.true_positives, m.false_positives) for m in report.per_image] == [(1, 2), (0, 1)]
    assert report.to_text().splitlines()[0] == "images 2"


def test_unknown_image():
    with pytest.raises(UnknownImageError):
        _evaluate({"c.pgm": []}, ANNOTATIONS)


def _reference_true_positives(dets, boxes, threshold):
    remaining = list(range(len(boxes)))
    hits = 0
    for det in sorted(dets, key=lambda d: (-d.score, d.rect.y, d.rect.x, d.rect.w, d.rect.h)):
        scored = [(iou(det.rect, boxes[i]), -i) for i in remaining]
        scored = [s for s in scored if s[0] >= threshold]
        if scored:
            best = max(scored)
            remaining.remove(-best[1])
            hits += 1
    return hits


def test_evaluate_matches_reference_matcher():
    rng = np.random.default_rng(17)
    for _ in range(100):
        boxes = [Rect(int(x), int(y), int(s), int(s))
                 for x, y, s in rng.integers([0, 0, 8], [60, 60, 30], size=(int(rng.integers(0, 6)), 3))]
        dets = [Detection(Rect(int(x), int(y), int(s), int(s)), float(rng.integers(0, 4)), 1.0)
                for x, y, s in rng.integers([0, 0, 8], [60, 60, 30], size=(int(rng.integers(0, 8)), 3))]
        threshold = float(rng.choice([0.3, 0.5]))
        report = _evaluate({"x.pgm": dets}, [Annotation("x.pgm", boxes)], threshold)
        assert report.true_positives == _reference_true_positives(dets, boxes, threshold)
        assert report.true_positives + report.false_positives == len(dets)


def test_operating_points():
    dets = {"a.pgm": [Detection(Rect(0, 0, 10, 10), 2.0, 1.0), Detection(Rect(30, 0, 10, 10), 1.0, 1.0)]}
    points = _operating_points(dets, ANNOTATIONS)
    assert points == [(1.0, 0.5, 0.5), (2.0, 0.5, 0.0)]
    assert _operating_points_csv(points) == (
        "threshold,detection_rate,false_positives_per_image\n"
        "1.000000,0.500000,0.500000\n"
        "2.000000,0.500000,0.000000\n"
    )
    assert _operating_points(dets, ANNOTATIONS, thresholds=[5.0]) == [(5.0, 0.0, 0.0)]
