from dataclasses import dataclass

from .rect import Rect


@dataclass(frozen=True)
class Detection:
    """
    A window accepted by the cascade.

    Attributes:
    - rect: Window in source-image pixels.
    - score: Final-stage score.
    - scale: Detector scale the window was found at.
    """
    rect: Rect
    score: float
    scale: float

    def to_record(self) -> str:
        """Formats the detection as an `x y w h score scale` line."""
        r = self.rect
        return f"{r.x} {r.y} {r.w} {r.h} {self.score:.6f} {self.scale:.6f}"

    @staticmethod
    def from_record(line: str) -> 'Detection':
        x, y, w, h, score, scale = line.split()
        return Detection(Rect(int(x), int(y), int(w), int(h)), float(score), float(scale))
