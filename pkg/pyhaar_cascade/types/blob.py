from dataclasses import dataclass
from typing import Tuple

from .rect import Rect


@dataclass(frozen=True)
class Blob:
    """
    A connected component of a foreground mask.

    Attributes:
    - pixel_count: Number of member pixels.
    - bbox: Tight bounding box.
    - centroid: Unweighted mean (x, y) of the member pixels.
    - angle: Orientation of the principal axis in degrees, in (-90, 90].
    """
    pixel_count: int
    bbox: Rect
    centroid: Tuple[float, float]
    angle: float = 0.0
