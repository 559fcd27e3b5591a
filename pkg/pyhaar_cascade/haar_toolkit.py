from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .methods import boosting, cascade, dataset, detector, features, imaging, tracking
from .run_config import RunConfig
from .types.annotation import Annotation
from .types.background_model import BackgroundModel
from .types.blob import Blob
from .types.cascade_model import Cascade as CascadeModel
from .types.detection import Detection
from .types.eval_report import EvalReport
from .types.gray_image import GrayImage
from .types.haar_feature import BaseWindow, HaarFeature
from .types.integral_image import IntegralImage
from .types.rect import Rect
from .types.sample import Sample
from .types.strong_classifier import StrongClassifier
from .types.synth_dataset import SynthDataset
from .types.track import Track
from .types.track_set import TrackSet
from .types.tracking_report import TrackingReport
from .types.virtual_line import VirtualLine
from .types.weak_classifier import WeakClassifier


class HaarToolkit:

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = (config or RunConfig()).validate()
        self.Imaging = self.Imaging(self.config)
        self.Features = self.Features(self.config)
        self.Boosting = self.Boosting(self.config)
        self.Cascade = self.Cascade(self.config)
        self.Detector = self.Detector(self.config)
        self.Tracking = self.Tracking(self.config)
        self.Dataset = self.Dataset(self.config)

    class Imaging:

        def __init__(self, config: RunConfig):
            self.config = config

        def load_pgm(self, path: str) -> GrayImage:
            return imaging._load_pgm(path)

        def save_pgm(self, image: GrayImage, path: str) -> None:
            return imaging._save_pgm(image, path)

        def integral(self, image: GrayImage) -> IntegralImage:
            return imaging._integral(image)

        def rect_sum(self, ii: IntegralImage, r: Rect) -> int:
            return imaging._rect_sum(ii, r)

        def rect_mean(self, ii: IntegralImage, r: Rect) -> float:
            return imaging._rect_mean(ii, r)

        def window_std(self, ii: IntegralImage, r: Rect) -> float:
            return imaging._window_std(ii, r)

        def crop(self, image: GrayImage, r: Rect) -> GrayImage:
            return imaging._crop(image, r)

        def resample(self, image: GrayImage, r: Rect, side: Optional[int] = None) -> GrayImage:
            return imaging._resample(image, r, side or self.config.train.base_window)

        def draw_rect(self, image: GrayImage, r: Rect, intensity: int = 255) -> GrayImage:
            return imaging._draw_rect(image, r, intensity)

        def load_frames(self, directory: str) -> List[GrayImage]:
            return imaging._load_frames(directory)

        def save_frames(self, frames: List[GrayImage], directory: str) -> List[str]:
            return imaging._save_frames(frames, directory)

    class Features:

        def __init__(self, config: RunConfig):
            self.config = config

        def _window(self) -> BaseWindow:
            return BaseWindow(self.config.train.base_window)

        def enumerate(self, stride: Optional[int] = None, min_size: Optional[int] = None) -> List[HaarFeature]:
            return features._enumerate_features(self._window(), stride or self.config.train.feature_stride,
                                                min_size or self.config.train.feature_min_size)

        def count(self, stride: Optional[int] = None, min_size: Optional[int] = None) -> int:
            return features._count_features(self._window(), stride or self.config.train.feature_stride,
                                            min_size or self.config.train.feature_min_size)

        def eval_feature(self, feat: HaarFeature, ii: IntegralImage, origin: Tuple[int, int],
                         scale: float = 1.0) -> float:
            return features._eval_feature(feat, ii, origin, scale)

        def eval_feature_batch(self, feat: HaarFeature, ii: IntegralImage, xs: np.ndarray, ys: np.ndarray,
                               scale: float = 1.0) -> np.ndarray:
            return features._eval_feature_batch(features._scale_feature(feat, scale), ii.padded, xs, ys)

        def scale_feature(self, feat: HaarFeature, scale: float) -> HaarFeature:
            return features._scale_feature(feat, scale)

    class Boosting:

        def __init__(self, config: RunConfig):
            self.config = config

        def train_stump(self, samples: Sequence[Sample], feature: HaarFeature,
                        feature_index: int = 0) -> Tuple[WeakClassifier, float]:
            return boosting._train_stump(samples, feature, feature_index, self.config.train.variance_floor)

        def train_stage(self, samples: Sequence[Sample], feature_pool: Sequence[HaarFeature],
                        T: int) -> StrongClassifier:
            return boosting._train_stage(samples, feature_pool, T, self.config.train.variance_floor,
                                         self.config.resolved_workers(), self.config.train.cache_feature_values)

        def booster(self, samples: Sequence[Sample], feature_pool: Sequence[HaarFeature]) -> boosting.StageBooster:
            return boosting.StageBooster(samples, feature_pool, self.config.train.variance_floor,
                                         self.config.resolved_workers(), self.config.train.cache_feature_values)

        def eval_strong(self, sc: StrongClassifier, ii: IntegralImage, origin: Tuple[int, int],
                        scale: float = 1.0) -> Tuple[bool, float]:
            return boosting._eval_strong(sc, ii, origin, scale, self.config.train.base_window,
                                         self.config.train.variance_floor)

    class Cascade:

        def __init__(self, config: RunConfig):
            self.config = config

        def eval(self, c: CascadeModel, ii: IntegralImage, origin: Tuple[int, int],
                 scale: float = 1.0) -> Tuple[bool, int, float]:
            return cascade._eval_cascade(c, ii, origin, scale, self.config.scan.variance_floor)

        def train(self, positives: Sequence[Sample], negative_pool: Sequence[GrayImage]) -> CascadeModel:
            return cascade._train_cascade(positives, negative_pool, self.config.training(),
                                          self.config.resolved_workers())

        def mine_negatives(self, c: CascadeModel, pool: Sequence[GrayImage], needed: int,
                           seed: Optional[int] = None) -> Tuple[List[GrayImage], int, int]:
            cfg = self.config.train
            rng = np.random.default_rng(self.config.seed if seed is None else seed)
            return cascade._mine_negatives(c, pool, needed, rng, cfg.mining_stride, cfg.mining_scale_step,
                                           cfg.variance_floor, self.config.resolved_workers())

        def save(self, c: CascadeModel, path: str) -> None:
            return cascade._save_cascade(c, path)

        def load(self, path: str) -> CascadeModel:
            return cascade._load_cascade(path)

        def stats(self, c: CascadeModel) -> Dict:
            return cascade._cascade_stats(c)

    class Detector:

        def __init__(self, config: RunConfig):
            self.config = config

        def scan(self, c: CascadeModel, img: GrayImage) -> List[Detection]:
            return detector._scan(c, img, self.config.scan, self.config.resolved_workers())

        def scan_with_stats(self, c: CascadeModel, img: GrayImage) -> Tuple[List[Detection], detector.ScanStats]:
            return detector._scan_with_stats(c, img, self.config.scan, self.config.resolved_workers())

        def group(self, dets: Sequence[Detection]) -> List[Detection]:
            return detector._group_detections(dets, self.config.scan)

        def detect(self, c: CascadeModel, img: GrayImage) -> List[Detection]:
            return detector._detect(c, img, self.config.scan, self.config.resolved_workers())

    class Tracking:

        def __init__(self, config: RunConfig):
            self.config = config

        def background_model(self) -> BackgroundModel:
            return BackgroundModel(self.config.tracking.learning_rate, self.config.tracking.threshold)

        def update_background(self, model: BackgroundModel, frame: GrayImage) -> np.ndarray:
            return tracking._update_background(model, frame)

        def extract_blobs(self, mask: np.ndarray) -> List[Blob]:
            return tracking._extract_blobs(mask, self.config.tracking.min_blob_area)

        def associate_tracks(self, tracks: TrackSet, blobs: Sequence[Blob], frame_index: int) -> TrackSet:
            return tracking._associate_tracks(tracks, blobs, frame_index, self.config.tracking.max_dist,
                                              self.config.tracking.max_missed)

        def count_crossings(self, track: Track, line: VirtualLine) -> int:
            return tracking._count_crossings(track, line)

        def run_pipeline(self, frames: Sequence[GrayImage], c: Optional[CascadeModel] = None,
                         draw: bool = False) -> TrackingReport:
            return tracking._run_pipeline(frames, self.config.tracking, c, self.config.scan, draw,
                                          self.config.resolved_workers())

    class Dataset:

        def __init__(self, config: RunConfig):
            self.config = config

        def load_annotations(self, path: str) -> List[Annotation]:
            return dataset._load_annotations(path)

        def load_images(self, directory: str) -> List[GrayImage]:
            return dataset._load_images(directory)

        def synth(self) -> SynthDataset:
            return dataset._synth_dataset(self.config.synth, self.config.seed)

        def synth_sequence(self, kind: str) -> List[GrayImage]:
            return dataset._synth_sequence(kind, self.config.seed)

        def save(self, ds: SynthDataset, directory: str) -> Dict:
            return dataset._save_dataset(ds, directory, self.config.synth, self.config.seed)

        def load(self, directory: str) -> SynthDataset:
            return dataset._load_dataset(directory)

        def evaluate(self, dets: Dict[str, Sequence[Detection]], annotations: Sequence[Annotation],
                     iou_threshold: float = 0.5) -> EvalReport:
            return dataset._evaluate(dets, annotations, iou_threshold)

        def operating_points(self, dets: Dict[str, Sequence[Detection]], annotations: Sequence[Annotation],
                             thresholds: Optional[Sequence[float]] = None) -> List[Tuple[float, float, float]]:
            return dataset._operating_points(dets, annotations, thresholds)
