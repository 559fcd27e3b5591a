from dataclasses import dataclass, field
from typing import List, Tuple


@dataclass
class Track:
    """
    A moving object followed across frames.

    Attributes:
    - id: Identifier, assigned once and never reused within a run.
    - centroid_history: (frame_index, (x, y)) pairs with strictly increasing frame indices.
    - missed_frames: Consecutive frames without a matching blob.
    """
    id: int
    centroid_history: List[Tuple[int, Tuple[float, float]]] = field(default_factory=list)
    missed_frames: int = 0

    @property
    def last_centroid(self) -> Tuple[float, float]:
        return self.centroid_history[-1][1]

    @property
    def last_frame(self) -> int:
        return self.centroid_history[-1][0]

    def extend(self, frame_index: int, centroid: Tuple[float, float]):
        if self.centroid_history and frame_index <= self.last_frame:
            raise ValueError(
                f"Track {self.id}: frame {frame_index} does not follow frame {self.last_frame}")
        self.centroid_history.append((frame_index, centroid))
        self.missed_frames = 0
