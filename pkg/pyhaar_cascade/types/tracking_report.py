from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .gray_image import GrayImage


@dataclass
class FrameSummary:
    index: int
    blobs: int
    tracks: int


@dataclass
class CrossingEvent:
    """
    A track crossing the counting line.

    Attributes:
    - frame: Index of the frame the track arrived on the destination side.
    - track_id: Id of the crossing track.
    - sign: +1 for a negative-to-positive crossing, -1 for the reverse.
    """
    frame: int
    track_id: int
    sign: int


@dataclass
class TrackingReport:
    frames: List[FrameSummary] = field(default_factory=list)
    events: List[CrossingEvent] = field(default_factory=list)
    annotated: List[GrayImage] = field(default_factory=list)

    @property
    def up(self) -> int:
        return sum(1 for event in self.events if event.sign > 0)

    @property
    def down(self) -> int:
        return sum(1 for event in self.events if event.sign < 0)

    def totals(self) -> Tuple[int, int]:
        return self.up, self.down

    def to_text(self) -> str:
        """
        Line-oriented report: `F <idx> <n_blobs> <n_tracks>` per frame, each
        followed by its `X <frame> <track_id> <+1|-1>` events, then `TOTAL <up> <down>`.
        """
        by_frame: Dict[int, List[CrossingEvent]] = {}
        for event in self.events:
            by_frame.setdefault(event.frame, []).append(event)
        lines = []
        for summary in self.frames:
            lines.append(f"F {summary.index} {summary.blobs} {summary.tracks}")
            for event in sorted(by_frame.get(summary.index, []), key=lambda e: e.track_id):
                lines.append(f"X {event.frame} {event.track_id} {event.sign:+d}")
        lines.append(f"TOTAL {self.up} {self.down}")
        return "\n".join(lines) + "\n"
