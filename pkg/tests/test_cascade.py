import copy
import json
import math
import os

import numpy as np
import pytest

from pyhaar_cascade.methods.boosting import _eval_strong
from pyhaar_cascade.methods.cascade import (
    CascadeInvariantError,
    CascadeTrainingAbort,
    CascadeVersionError,
    MalformedFieldError,
    _cascade_stats,
    _dump_cascade,
    _eval_cascade,
    _eval_cascade_batch,
    _load_cascade,
    _mine_negatives,
    _parse_cascade,
    _plain,
    _save_cascade,
    _stage_threshold,
    _train_cascade,
)
from pyhaar_cascade.methods.dataset import _evaluate, _synth_dataset
from pyhaar_cascade.methods.detector import _detect, _scan_with_stats
from pyhaar_cascade.methods.features import _enumerate_features, _scaled_side
from pyhaar_cascade.methods.imaging import _integral
from pyhaar_cascade.types.cascade_model import Cascade
from pyhaar_cascade.types.cascade_train_config import CascadeTrainConfig
from pyhaar_cascade.types.gray_image import GrayImage
from pyhaar_cascade.types.haar_feature import BaseWindow, FeatureKind, HaarFeature
from pyhaar_cascade.types.rect import Rect
from pyhaar_cascade.types.sample import POSITIVE, Sample
from pyhaar_cascade.types.scan_config import ScanConfig
from pyhaar_cascade.types.strong_classifier import StrongClassifier
from pyhaar_cascade.types.synth_config import SynthConfig
from pyhaar_cascade.types.weak_classifier import WeakClassifier
from pyhaar_cascade.util.geometry_util import scaled_step, scan_scales, window_grid

# bright middle column band / bright middle row band of a 24 window
CENTER_COLUMNS = HaarFeature(FeatureKind.LINE_VERTICAL,
                             (Rect(0, 6, 8, 12), Rect(8, 6, 8, 12), Rect(16, 6, 8, 12)), (1.0, -2.0, 1.0))
CENTER_ROWS = HaarFeature(FeatureKind.LINE_HORIZONTAL,
                          (Rect(6, 0, 12, 8), Rect(6, 8, 12, 8), Rect(6, 16, 12, 8)), (1.0, -2.0, 1.0))


def _stage(feature, threshold=1.0):
    return StrongClassifier((WeakClassifier(0, feature, 1, -0.5, 1.0),), threshold)


def _square_cascade():
    return Cascade(BaseWindow(24), (_stage(CENTER_COLUMNS), _stage(CENTER_ROWS)))


def _window(bright_rows, bright_cols, ground=60, value=200):
    pixels = np.full((24, 24), ground, dtype=np.uint8)
    pixels[bright_rows, bright_cols] = value
    return GrayImage.from_array(pixels)


def _random_stage(rng, features, stumps=3):
    chosen = []
    for _ in range(stumps):
        index = int(rng.integers(0, len(features)))
        chosen.append(WeakClassifier(index, features[index], int(rng.choice([-1, 1])),
                                     float(rng.normal(0.0, 1.0)), float(rng.uniform(0.1, 2.0))))
    stage = StrongClassifier(tuple(chosen), 0.0)
    return stage.with_threshold(float(rng.uniform(0.0, stage.total_alpha)))


def _random_cascade(rng, features, stages=3):
    return Cascade(BaseWindow(24), tuple(_random_stage(rng, features) for _ in range(stages)),
                   {"seed": 7, "note": "random"})


def _noise_image(seed, width=64, height=48):
    rng = np.random.default_rng(seed)
    coarse = rng.integers(0, 256, size=(height // 8 + 1, width // 8 + 1))
    pixels = np.kron(coarse, np.ones((8, 8), dtype=np.int64))[:height, :width]
    pixels = pixels + rng.integers(-10, 11, size=pixels.shape)
    return GrayImage.from_array(np.clip(pixels, 0, 255))


def _grid_decisions(c, image, scale, stride=2):
    ii = _integral(image)
    size = _scaled_side(c.base_window.side, scale)
    xs, ys = window_grid(image.width, image.height, size, scaled_step(stride, scale))
    return xs, ys, _eval_cascade_batch(c, ii, xs, ys, scale)


@pytest.fixture(scope="module")
def coarse_features():
    return _enumerate_features(BaseWindow(24), 4, 4)


def test_eval_cascade_square_passes_every_stage():
    window = _window(slice(6, 18), slice(6, 18))
    assert _eval_cascade(_square_cascade(), _integral(window), (0, 0)) == (True, 2, 1.0)


def test_eval_cascade_stops_at_first_failing_stage():
    ii_bar = _integral(_window(slice(0, 24), slice(8, 16)))
    assert _eval_cascade(_square_cascade(), ii_bar, (0, 0)) == (False, 2, 0.0)

    ii_blank = _integral(GrayImage.filled(24, 24, 60))
    five = Cascade(BaseWindow(24), tuple(_stage(CENTER_COLUMNS) for _ in range(5)))
    accepted, stages, score = _eval_cascade(five, ii_blank, (0, 0))
    assert (accepted, stages, score) == (False, 1, 0.0)


def test_empty_cascade_accepts_everything():
    c = Cascade(BaseWindow(24), ())
    assert _eval_cascade(c, _integral(GrayImage.filled(24, 24, 0)), (0, 0)) == (True, 0, 0.0)


def test_eval_cascade_matches_reference_without_short_circuit(coarse_features):
    rng = np.random.default_rng(11)
    for trial in range(20):
        c = _random_cascade(rng, coarse_features, stages=4)
        image = _noise_image(trial)
        ii = _integral(image)
        for scale in (1.0, 1.25):
            size = _scaled_side(24, scale)
            xs, ys = window_grid(image.width, image.height, size, scaled_step(2, scale))
            for x, y in zip(xs.tolist(), ys.tolist()):
                verdicts = [_eval_strong(stage, ii, (x, y), scale, 24)[0] for stage in c.stages]
                first_failure = verdicts.index(False) + 1 if False in verdicts else len(verdicts)
                accepted, stages, _ = _eval_cascade(c, ii, (x, y), scale)
                assert accepted == all(verdicts)
                assert stages == first_failure


def test_batch_evaluation_matches_scalar(coarse_features):
    rng = np.random.default_rng(12)
    for trial in range(10):
        c = _random_cascade(rng, coarse_features)
        image = _noise_image(100 + trial)
        ii = _integral(image)
        for scale in (1.0, 1.5625):
            xs, ys, (accepted, stages, scores) = _grid_decisions(c, image, scale)
            for i, (x, y) in enumerate(zip(xs.tolist(), ys.tolist())):
                assert _eval_cascade(c, ii, (x, y), scale) == (bool(accepted[i]), int(stages[i]), float(scores[i]))


def test_appending_a_stage_never_adds_detections(coarse_features):
    rng = np.random.default_rng(13)
    for trial in range(10):
        c = _random_cascade(rng, coarse_features, stages=2)
        longer = c.with_stage(_random_stage(rng, coarse_features))
        image = _noise_image(200 + trial)
        _, _, (before, _, _) = _grid_decisions(c, image, 1.0)
        _, _, (after, _, _) = _grid_decisions(longer, image, 1.0)
        assert not np.any(after & ~before)


def test_save_load_round_trip_is_identical(tmp_path, coarse_features):
    rng = np.random.default_rng(14)
    noise_images = [_noise_image(300), _noise_image(301, 80, 40)]
    for trial in range(100):
        c = _random_cascade(rng, coarse_features, stages=int(rng.integers(1, 4)))
        path = str(tmp_path / f"cascade_{trial}.json")
        _save_cascade(c, path)
        loaded = _load_cascade(path)
        assert loaded == c
        for image in noise_images:
            _, _, original = _grid_decisions(c, image, 1.0)
            _, _, restored = _grid_decisions(loaded, image, 1.0)
            assert np.array_equal(original[0], restored[0])
            assert np.array_equal(original[2], restored[2])


def test_dump_is_canonical(tmp_path):
    c = _square_cascade()
    path = str(tmp_path / "cascade.json")
    _save_cascade(c, path)
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    assert _dump_cascade(_load_cascade(path)) == text
    assert json.loads(text)["format_version"] == 1


def test_floats_keep_17_significant_digits(tmp_path):
    stumps = (WeakClassifier(3, CENTER_COLUMNS, 1, 0.1, 1.0 / 3.0), WeakClassifier(4, CENTER_ROWS, -1, -math.inf, 2.0))
    c = Cascade(BaseWindow(24), (StrongClassifier(stumps, 0.1),), {"overall_fp": 2.0})
    path = str(tmp_path / "cascade.json")
    _save_cascade(c, path)
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    assert '"threshold": 0.10000000000000001' in text
    assert '"alpha": 0.33333333333333331' in text
    assert '"threshold": -Infinity' in text
    assert '"overall_fp": 2.0' in text
    loaded = _load_cascade(path)
    assert loaded == c
    assert loaded.stages[0].stumps[0].alpha == 1.0 / 3.0
    assert _dump_cascade(loaded) == text


def _document():
    return _plain(_square_cascade().to_dict())


def test_truncated_file_is_malformed(tmp_path):
    text = _dump_cascade(_square_cascade())
    path = tmp_path / "truncated.json"
    path.write_text(text[:len(text) // 2])
    with pytest.raises(MalformedFieldError):
        _load_cascade(str(path))


def test_rect_outside_window_is_an_invariant_error():
    doc = _document()
    doc["stages"][0]["stumps"][0]["feature"]["rects"][2][0] = 20
    with pytest.raises(CascadeInvariantError) as info:
        _parse_cascade(doc)
    assert info.value.field == "stages[0].stumps[0].feature"


@pytest.mark.parametrize("version", [2, "1", None])
def test_unsupported_version(version):
    doc = _document()
    doc["format_version"] = version
    with pytest.raises(CascadeVersionError):
        _parse_cascade(doc)


def test_missing_or_mistyped_fields_are_malformed():
    doc = _document()
    del doc["stages"][1]["stumps"][0]["alpha"]
    with pytest.raises(MalformedFieldError) as info:
        _parse_cascade(doc)
    assert info.value.field == "stages[1].stumps[0].alpha"

    doc = _document()
    doc["stages"][0]["stage_threshold"] = "high"
    with pytest.raises(MalformedFieldError):
        _parse_cascade(doc)

    doc = _document()
    doc["stages"][0]["stumps"][0]["feature"]["kind"] = "five-square"
    with pytest.raises(MalformedFieldError):
        _parse_cascade(doc)

    doc = _document()
    doc["stages"][0]["stumps"][0]["feature"]["rects"][0] = [0, 6, 8]
    with pytest.raises(MalformedFieldError):
        _parse_cascade(doc)

    with pytest.raises(MalformedFieldError):
        _parse_cascade([1, 2, 3])


@pytest.mark.parametrize("mutate", [
    lambda doc: doc["stages"][0]["stumps"][0]["feature"]["rects"][1].__setitem__(4, -1.0),
    lambda doc: doc["stages"][0]["stumps"][0].__setitem__("polarity", 0),
    lambda doc: doc["stages"][0]["stumps"][0].__setitem__("alpha", -0.5),
    lambda doc: doc["stages"][0].__setitem__("stage_threshold", 1.5),
    lambda doc: doc["stages"][1].__setitem__("stumps", []),
    lambda doc: doc.__setitem__("stages", []),
    lambda doc: doc.__setitem__("base_window", 3),
])
def test_invalid_cascades_are_rejected(mutate):
    doc = copy.deepcopy(_document())
    mutate(doc)
    with pytest.raises(CascadeInvariantError):
        _parse_cascade(doc)


def test_cascade_stats():
    stats = _cascade_stats(_square_cascade().with_stage(
        StrongClassifier((WeakClassifier(0, CENTER_ROWS, 1, -0.5, 1.0),) * 3, 1.5)))
    assert stats == {"base_window": 24, "stage_count": 3, "stumps_per_stage": [1, 1, 3], "total_stumps": 5}


def test_stage_threshold_keeps_the_detection_target():
    scores = np.array([3.0, 2.0, 1.0, 0.0])
    assert _stage_threshold(2.5, scores, 0.75) == 1.0
    assert _stage_threshold(0.5, scores, 0.75) == 0.5
    assert _stage_threshold(2.5, scores, 1.0) == 0.0
    assert _stage_threshold(2.5, scores, 0.25) == 2.5


def test_mining_with_an_empty_cascade_takes_every_window():
    pool = [_noise_image(400, 48, 48)]
    c = Cascade(BaseWindow(24), ())
    windows, accepted, scanned = _mine_negatives(c, pool, 10, np.random.default_rng(0))
    assert scanned == 169 + 49 + 16 + 1
    assert accepted == scanned
    assert len(windows) == 10
    assert all(w.width == 24 and w.height == 24 for w in windows)

    again, _, _ = _mine_negatives(c, pool, 10, np.random.default_rng(0))
    assert again == windows

    everything, _, _ = _mine_negatives(c, pool, 1000, np.random.default_rng(0))
    assert len(everything) == scanned
    assert everything[0] == GrayImage.from_array(pool[0].pixels[:24, :24])


def test_mining_with_a_rejecting_cascade_finds_nothing():
    never = StrongClassifier((WeakClassifier(0, CENTER_ROWS, 1, -1e9, 1.0),), 1.0)
    c = Cascade(BaseWindow(24), (never,))
    windows, accepted, scanned = _mine_negatives(c, [_noise_image(401, 48, 48)], 10, np.random.default_rng(0))
    assert windows == []
    assert accepted == 0
    assert scanned == 235


def test_mining_is_independent_of_workers(coarse_features):
    c = _random_cascade(np.random.default_rng(15), coarse_features, stages=1)
    pool = [_noise_image(seed, 56, 56) for seed in range(500, 504)]
    single = _mine_negatives(c, pool, 25, np.random.default_rng(3), workers=1)
    threaded = _mine_negatives(c, pool, 25, np.random.default_rng(3), workers=4)
    assert single == threaded


def test_scan_scales_used_for_mining():
    assert [_scaled_side(24, s) for s in scan_scales(48, 48, 24, 1.25)] == [24, 30, 38, 47]


def _positives(count):
    return [Sample(_window(slice(6, 18), slice(6, 18)), POSITIVE) for _ in range(count)]


def test_training_rejects_bad_inputs():
    cfg = CascadeTrainConfig()
    pool = [GrayImage.filled(48, 48, 60)]
    with pytest.raises(CascadeTrainingAbort):
        _train_cascade(_positives(49), pool, cfg)
    with pytest.raises(CascadeTrainingAbort):
        _train_cascade(_positives(60) + [Sample(GrayImage.filled(20, 20, 0), POSITIVE)], pool, cfg)
    with pytest.raises(CascadeTrainingAbort):
        _train_cascade(_positives(60), [], cfg)
    with pytest.raises(ValueError):
        _train_cascade(_positives(60), pool, CascadeTrainConfig(max_stages=0))


SMALL_SYNTH = SynthConfig(positives=150, negatives=40, negative_size=64, scenes=0, near_misses=0)
SMALL_TRAIN = CascadeTrainConfig(max_stages=3, negatives_per_stage=200, feature_stride=4, feature_min_size=4)


@pytest.fixture(scope="module")
def small_task():
    ds = _synth_dataset(SMALL_SYNTH, 5)
    return [Sample(window, POSITIVE) for window in ds.positives], ds.negatives


@pytest.mark.integration
def test_training_is_deterministic(small_task):
    positives, pool = small_task
    first = _train_cascade(positives, pool, SMALL_TRAIN)
    second = _train_cascade(positives, pool, SMALL_TRAIN, workers=3)
    assert _dump_cascade(first) == _dump_cascade(second)

    assert 1 <= first.stage_count <= 3
    meta = first.metadata
    assert meta["stages"] == first.stage_count
    assert meta["validation_positives"] == 30
    assert len(meta["stage_fp_rates"]) == first.stage_count
    assert all(rate <= SMALL_TRAIN.per_stage_max_fp for rate in meta["stage_fp_rates"])
    assert all(rate >= SMALL_TRAIN.per_stage_min_detection for rate in meta["stage_detection_rates"])
    for stage in first.stages:
        assert stage.stage_threshold <= stage.default_threshold + 1e-12


@pytest.mark.integration
def test_single_loose_stage(small_task):
    positives, pool = small_task
    cfg = CascadeTrainConfig(max_stages=1, per_stage_max_fp=0.99, negatives_per_stage=200,
                             feature_stride=4, feature_min_size=4)
    c = _train_cascade(positives, pool, cfg)
    assert c.stage_count == 1
    assert c.metadata["stage_fp_rates"][0] <= 0.99
    assert c.metadata["pool_exhausted"] is False


@pytest.fixture(scope="module")
def default_run():
    # 600 positives, 200 clutter images plus near misses; the 50 scenes stay unseen
    ds = _synth_dataset(SynthConfig(), 0)
    positives = [Sample(window, POSITIVE) for window in ds.positives]
    cascade = _train_cascade(positives, ds.negative_pool(), CascadeTrainConfig(), workers=os.cpu_count() or 1)
    return ds, cascade


@pytest.mark.integration
def test_default_cascade_finds_scene_objects(default_run):
    ds, cascade = default_run
    assert len(ds.positives) >= 500
    dets = {annotation.image_path: _detect(cascade, scene, ScanConfig())
            for scene, annotation in zip(ds.scenes, ds.annotations)}
    report = _evaluate(dets, ds.annotations)
    assert report.images == 50
    assert report.detection_rate >= 0.95
    assert report.false_positives_per_image <= 0.5


@pytest.mark.integration
def test_noise_windows_leave_the_default_cascade_early(default_run):
    _, cascade = default_run
    assert cascade.stage_count >= 3
    noise = GrayImage.from_array(np.random.default_rng(5).integers(0, 256, size=(512, 512)))
    _, stats = _scan_with_stats(cascade, noise, ScanConfig(), workers=4)
    assert stats.windows > 100000
    assert stats.mean_stages_rejected() <= 0.4 * cascade.stage_count


@pytest.mark.integration
def test_every_stage_lowers_pool_false_positives(default_run):
    ds, cascade = default_run
    meta = cascade.metadata
    pool = ds.negative_pool()
    rng = np.random.default_rng(0)
    counts = []
    for k in range(cascade.stage_count + 1):
        prefix = Cascade(cascade.base_window, cascade.stages[:k])
        _, accepted, scanned = _mine_negatives(prefix, pool, 0, rng, workers=4)
        counts.append(accepted)
    assert counts[0] == scanned == meta["pool_windows"]
    assert counts[1:] == meta["pool_accepted"]
    assert all(later <= earlier for earlier, later in zip(counts, counts[1:]))

    # overall rate is the product of each stage's rate on the windows its predecessors let through
    conditional = [later / float(earlier) for earlier, later in zip(counts, counts[1:])]
    assert meta["overall_fp"] == pytest.approx(float(np.prod(conditional)), rel=1e-12)
    assert meta["overall_fp"] <= CascadeTrainConfig().target_overall_fp
    assert all(rate <= 0.5 for rate in meta["stage_fp_rates"])
