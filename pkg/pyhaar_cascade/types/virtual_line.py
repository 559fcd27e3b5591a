from dataclasses import dataclass
from typing import Dict, Tuple


@dataclass(frozen=True)
class VirtualLine:
    """
    A counting gate: the segment between two points.

    The signed side of a point P is the cross product (B - A) x (P - A) with
    image coordinates (y grows downwards). For a line drawn top to bottom, points
    to its right are on the negative side, so with direction_sign = -1 a
    left-to-right crossing counts as positive. A path only crosses the gate
    where it meets the line between the two endpoints.

    Attributes:
    - start: First endpoint (x, y).
    - end: Second endpoint (x, y), distinct from start.
    - direction_sign: +1 or -1, multiplies the side predicate.
    """
    start: Tuple[float, float]
    end: Tuple[float, float]
    direction_sign: int = 1

    def __post_init__(self):
        if tuple(self.start) == tuple(self.end):
            raise ValueError("Virtual line endpoints must be distinct")
        if self.direction_sign not in (1, -1):
            raise ValueError(f"direction_sign must be +1 or -1, got {self.direction_sign}")

    def side(self, point: Tuple[float, float]) -> float:
        """Signed side value of a point; its sign is the side, 0 means on the line."""
        ax, ay = self.start
        bx, by = self.end
        px, py = point
        return self.direction_sign * ((bx - ax) * (py - ay) - (by - ay) * (px - ax))

    def crossing_point(self, p: Tuple[float, float], q: Tuple[float, float]) -> Tuple[float, float]:
        """
        Where the segment p -> q meets the line through start and end.

        p and q must not lie strictly on the same side; a point on the line is returned as is.
        """
        sp, sq = self.side(p), self.side(q)
        if sq == 0:
            return q
        if sp == 0:
            return p
        t = sp / (sp - sq)
        return p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])

    def covers(self, point: Tuple[float, float]) -> bool:
        """Whether the projection of a point onto the line falls between start and end, inclusive."""
        ax, ay = self.start
        dx, dy = self.end[0] - ax, self.end[1] - ay
        u = ((point[0] - ax) * dx + (point[1] - ay) * dy) / float(dx * dx + dy * dy)
        return 0.0 <= u <= 1.0

    def to_dict(self) -> Dict:
        return {"start": list(self.start), "end": list(self.end), "direction_sign": self.direction_sign}

    @staticmethod
    def from_dict(data: Dict) -> 'VirtualLine':
        return VirtualLine(
            start=tuple(float(v) for v in data["start"]),
            end=tuple(float(v) for v in data["end"]),
            direction_sign=int(data.get("direction_sign", 1)),
        )

    @staticmethod
    def vertical(x: float, height: float) -> 'VirtualLine':
        """A top-to-bottom line at column x, oriented so left-to-right crossings are positive."""
        return VirtualLine((x, 0.0), (x, height), direction_sign=-1)
