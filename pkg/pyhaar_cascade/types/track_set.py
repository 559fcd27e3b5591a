from dataclasses import dataclass, field
from typing import List

from .track import Track


@dataclass
class TrackSet:
    """
    Tracking state carried from frame to frame.

    Attributes:
    - active: Tracks still eligible for matching, in creation order.
    - retired: Tracks dropped after too many misses; their ids are never reused.
    - next_id: Id the next new track receives.
    """
    active: List[Track] = field(default_factory=list)
    retired: List[Track] = field(default_factory=list)
    next_id: int = 1

    def all_tracks(self) -> List[Track]:
        """Every track of the run ordered by id."""
        return sorted(self.active + self.retired, key=lambda track: track.id)
