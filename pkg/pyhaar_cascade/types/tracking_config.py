from dataclasses import dataclass, asdict, fields
from typing import Dict, List, Optional

from .virtual_line import VirtualLine

MASK_SOURCES = ("motion", "detector")


@dataclass
class TrackingConfig:
    """
    Knobs of the counting pipeline.

    Attributes:
    - learning_rate: Background running-average blend factor, in (0, 1].
    - threshold: Foreground threshold in intensity units.
    - min_blob_area: Smaller connected components are dropped.
    - max_dist: Largest centroid jump, in pixels, that still continues a track.
    - max_missed: A track is retired after this many consecutive misses are exceeded.
    - line: Counting line; None places a vertical line through the frame centre.
    - mask_source: "motion" (background subtraction) or "detector" (cascade detections).
    """
    learning_rate: float = 0.02
    threshold: float = 25.0
    min_blob_area: int = 25
    max_dist: float = 20.0
    max_missed: int = 5
    line: Optional[VirtualLine] = None
    mask_source: str = "motion"

    def problems(self) -> List[str]:
        found = []
        if not 0.0 < self.learning_rate <= 1.0:
            found.append(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.threshold < 0.0:
            found.append(f"threshold must be non-negative, got {self.threshold}")
        if self.min_blob_area < 1:
            found.append(f"min_blob_area must be at least 1, got {self.min_blob_area}")
        if self.max_dist <= 0.0:
            found.append(f"max_dist must be positive, got {self.max_dist}")
        if self.max_missed < 0:
            found.append(f"max_missed must be non-negative, got {self.max_missed}")
        if self.mask_source not in MASK_SOURCES:
            found.append(f"mask_source must be one of {MASK_SOURCES}, got {self.mask_source!r}")
        return found

    def line_for(self, width: int, height: int) -> VirtualLine:
        if self.line is not None:
            return self.line
        return VirtualLine.vertical(width / 2.0, float(height))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["line"] = self.line.to_dict() if self.line else None
        return data

    @staticmethod
    def from_dict(data: Dict) -> 'TrackingConfig':
        known = {f.name for f in fields(TrackingConfig)}
        values = {key: value for key, value in data.items() if key in known}
        if values.get("line") is not None:
            values["line"] = VirtualLine.from_dict(values["line"])
        return TrackingConfig(**values)
