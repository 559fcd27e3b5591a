from dataclasses import dataclass, field
from typing import List

from .annotation import Annotation
from .gray_image import GrayImage


@dataclass
class SynthDataset:
    """
    A generated (or reloaded) training and evaluation set.

    Attributes:
    - positives: Base-window crops, each holding one bright square.
    - negatives: Object-free textured images for negative mining.
    - scenes: Larger textured images with objects placed in them.
    - annotations: One Annotation per scene, paths relative to the scenes directory.
    - near_misses: Base-window crops holding a square of the wrong size or position.
    """
    positives: List[GrayImage] = field(default_factory=list)
    negatives: List[GrayImage] = field(default_factory=list)
    scenes: List[GrayImage] = field(default_factory=list)
    annotations: List[Annotation] = field(default_factory=list)
    near_misses: List[GrayImage] = field(default_factory=list)

    def negative_pool(self) -> List[GrayImage]:
        """Every image negatives are mined from: clutter images, then near misses."""
        return list(self.negatives) + list(self.near_misses)
