from dataclasses import dataclass, asdict, fields
from typing import Dict, List, Optional


@dataclass
class ScanConfig:
    """
    Sliding-window scan and grouping parameters.

    Attributes:
    - scale_step: Ratio between consecutive scales, > 1.
    - stride: Step in pixels at base scale; scaled with the window.
    - min_scale: Smallest scale scanned, >= 1.
    - max_scale: Largest scale scanned, None for "as large as the image allows".
    - group_min_neighbors: Clusters with fewer raw hits are dropped.
    - group_overlap: IoU at or above which two raw hits are linked.
    - variance_floor: Lower clamp on the window standard deviation.
    """
    scale_step: float = 1.25
    stride: int = 2
    min_scale: float = 1.0
    max_scale: Optional[float] = None
    group_min_neighbors: int = 3
    group_overlap: float = 0.3
    variance_floor: float = 1.0

    def problems(self) -> List[str]:
        found = []
        if self.scale_step <= 1.0:
            found.append(f"scale_step must be greater than 1, got {self.scale_step}")
        if self.stride < 1:
            found.append(f"stride must be at least 1, got {self.stride}")
        if self.min_scale < 1.0:
            found.append(f"min_scale must be at least 1, got {self.min_scale}")
        if self.max_scale is not None and self.max_scale < self.min_scale:
            found.append(f"max_scale {self.max_scale} is below min_scale {self.min_scale}")
        if self.group_min_neighbors < 1:
            found.append(f"group_min_neighbors must be at least 1, got {self.group_min_neighbors}")
        if not 0.0 < self.group_overlap <= 1.0:
            found.append(f"group_overlap must be in (0, 1], got {self.group_overlap}")
        if self.variance_floor <= 0.0:
            found.append(f"variance_floor must be positive, got {self.variance_floor}")
        return found

    def to_dict(self) -> Dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: Dict) -> 'ScanConfig':
        known = {f.name for f in fields(ScanConfig)}
        return ScanConfig(**{key: value for key, value in data.items() if key in known})
