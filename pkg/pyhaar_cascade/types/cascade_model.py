from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

from .haar_feature import BaseWindow
from .strong_classifier import StrongClassifier

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Cascade:
    """
    An attentional cascade: a window is accepted only if every stage passes it.

    Attributes:
    - base_window: The window all stage features are defined in.
    - stages: Strong classifiers in evaluation order.
    - metadata: Training provenance (dataset sizes, targets, seed, measured rates).
    """
    base_window: BaseWindow
    stages: Tuple[StrongClassifier, ...]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def stage_count(self) -> int:
        return len(self.stages)

    def with_stage(self, stage: StrongClassifier) -> 'Cascade':
        return Cascade(self.base_window, self.stages + (stage,), dict(self.metadata))

    def to_dict(self) -> Dict:
        return {
            "format_version": FORMAT_VERSION,
            "base_window": self.base_window.side,
            "stages": [stage.to_dict() for stage in self.stages],
            "metadata": self.metadata,
        }
