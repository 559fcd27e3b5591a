from dataclasses import dataclass

from .gray_image import GrayImage

POSITIVE = 1
NEGATIVE = 0


@dataclass
class Sample:
    """
    A labelled base-window crop used for boosting.

    Attributes:
    - window: The crop, exactly base-window sized.
    - label: POSITIVE (1) or NEGATIVE (0).
    - boost_weight: Current AdaBoost weight.
    """
    window: GrayImage
    label: int
    boost_weight: float = 1.0

    @property
    def is_positive(self) -> bool:
        return self.label == POSITIVE
