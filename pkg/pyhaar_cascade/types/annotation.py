from dataclasses import dataclass, field
from typing import List

from .rect import Rect


@dataclass
class Annotation:
    """
    Ground-truth objects of one image.

    Attributes:
    - image_path: Path of the image, as written in the annotation file.
    - boxes: Object rectangles; empty for a pure-negative image.
    """
    image_path: str
    boxes: List[Rect] = field(default_factory=list)

    def to_line(self) -> str:
        coords = " ".join(" ".join(str(v) for v in box.to_list()) for box in self.boxes)
        return f"{self.image_path} {len(self.boxes)}" + (f" {coords}" if coords else "")
