from dataclasses import dataclass
from typing import List, Sequence


@dataclass(frozen=True)
class Rect:
    """
    An axis-aligned rectangle in pixel coordinates.

    Attributes:
    - x: Left column of the rectangle (top-left offset).
    - y: Top row of the rectangle.
    - w: Width in pixels.
    - h: Height in pixels.
    """
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def right(self) -> int:
        """One past the last column covered by the rectangle."""
        return self.x + self.w

    @property
    def bottom(self) -> int:
        """One past the last row covered by the rectangle."""
        return self.y + self.h

    def is_valid(self) -> bool:
        return self.x >= 0 and self.y >= 0 and self.w > 0 and self.h > 0

    def fits(self, width: int, height: int) -> bool:
        """
        Checks whether the rectangle lies inside an image of the given size.
        """
        return self.is_valid() and self.right <= width and self.bottom <= height

    def translated(self, dx: int, dy: int) -> 'Rect':
        return Rect(self.x + dx, self.y + dy, self.w, self.h)

    def to_list(self) -> List[int]:
        return [self.x, self.y, self.w, self.h]

    @staticmethod
    def from_list(values: Sequence[int]) -> 'Rect':
        """
        Builds a Rect from an `[x, y, w, h]` sequence.

        :param values: Four integers.
        """
        x, y, w, h = values
        return Rect(int(x), int(y), int(w), int(h))
