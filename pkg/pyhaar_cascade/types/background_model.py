from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class BackgroundModel:
    """
    Running-average model of the static scene.

    Attributes:
    - learning_rate: Blend factor of each new frame into the mean, in (0, 1].
    - threshold: Absolute intensity difference above which a pixel is foreground.
    - mean: Per-pixel float64 mean, None until the first frame arrives.
    """
    learning_rate: float = 0.02
    threshold: float = 25.0
    mean: Optional[np.ndarray] = None

    @property
    def initialized(self) -> bool:
        return self.mean is not None
