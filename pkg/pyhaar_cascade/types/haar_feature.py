from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

from .rect import Rect


class FeatureKind(str, Enum):
    """
    Haar-like templates. The value is the tag written to cascade files.

    EDGE_VERTICAL places two rectangles side by side (it responds to a vertical
    edge), EDGE_HORIZONTAL stacks them. The LINE kinds use three rectangles
    with the centre weighted -2, FOUR_SQUARE_DIAGONAL is the 2x2 checker.
    """
    EDGE_HORIZONTAL = "edge-horizontal"
    EDGE_VERTICAL = "edge-vertical"
    LINE_HORIZONTAL = "line-horizontal"
    LINE_VERTICAL = "line-vertical"
    FOUR_SQUARE_DIAGONAL = "four-square-diagonal"


# (columns, rows, weights in row-major cell order) per template
TEMPLATES: Dict[FeatureKind, Tuple[int, int, Tuple[float, ...]]] = {
    FeatureKind.EDGE_HORIZONTAL: (1, 2, (1.0, -1.0)),
    FeatureKind.EDGE_VERTICAL: (2, 1, (1.0, -1.0)),
    FeatureKind.LINE_HORIZONTAL: (1, 3, (1.0, -2.0, 1.0)),
    FeatureKind.LINE_VERTICAL: (3, 1, (1.0, -2.0, 1.0)),
    FeatureKind.FOUR_SQUARE_DIAGONAL: (2, 2, (1.0, -1.0, -1.0, 1.0)),
}

# enumeration order of the templates
TEMPLATE_ORDER: Tuple[FeatureKind, ...] = (
    FeatureKind.EDGE_HORIZONTAL,
    FeatureKind.EDGE_VERTICAL,
    FeatureKind.LINE_HORIZONTAL,
    FeatureKind.LINE_VERTICAL,
    FeatureKind.FOUR_SQUARE_DIAGONAL,
)


@dataclass(frozen=True)
class BaseWindow:
    """
    The square detection window features are defined in.

    Attributes:
    - side: Window side in pixels, at least 4.
    """
    side: int = 24

    def __post_init__(self):
        if self.side < 4:
            raise ValueError(f"Base window side must be at least 4, got {self.side}")


@dataclass(frozen=True)
class HaarFeature:
    """
    A weighted set of rectangles inside the base window.

    The feature value is the weighted sum of the rectangle MEANS, and the
    weights sum to zero, so a constant window scores exactly 0.

    Attributes:
    - kind: The template the feature was generated from.
    - rects: Rectangles relative to the window origin.
    - weights: One signed weight per rectangle.
    """
    kind: FeatureKind
    rects: Tuple[Rect, ...]
    weights: Tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.rects)

    def weight_sum(self) -> float:
        return sum(self.weights)

    def fits(self, side: int) -> bool:
        return all(rect.fits(side, side) for rect in self.rects)

    def extent(self) -> Tuple[int, int]:
        """Smallest (width, height) window, anchored at 0, containing every rect."""
        return (max(rect.right for rect in self.rects), max(rect.bottom for rect in self.rects))

    def to_dict(self) -> Dict:
        """
        Returns a dictionary representation used by the cascade file format.
        """
        return {
            "kind": self.kind.value,
            "rects": [rect.to_list() + [weight] for rect, weight in zip(self.rects, self.weights)],
        }

    @staticmethod
    def from_dict(data: Dict) -> 'HaarFeature':
        """
        Deserialize a dictionary into a HaarFeature.

        :param data: Dictionary with `kind` and `rects` ([x, y, w, h, weight] rows).
        """
        kind = FeatureKind(data["kind"])
        rows: List[List] = data["rects"]
        rects = tuple(Rect.from_list(row[:4]) for row in rows)
        weights = tuple(float(row[4]) for row in rows)
        return HaarFeature(kind, rects, weights)
