from dataclasses import dataclass
from typing import Dict, Tuple

from .weak_classifier import WeakClassifier


@dataclass(frozen=True)
class StrongClassifier:
    """
    A boosted vote of stumps; a window passes when sum(alpha_t * h_t) >= stage_threshold.

    Attributes:
    - stumps: The selected weak classifiers in boosting order.
    - stage_threshold: Score cutoff, at most the total alpha.
    """
    stumps: Tuple[WeakClassifier, ...]
    stage_threshold: float

    @property
    def total_alpha(self) -> float:
        return sum(stump.alpha for stump in self.stumps)

    @property
    def default_threshold(self) -> float:
        return 0.5 * self.total_alpha

    def with_threshold(self, threshold: float) -> 'StrongClassifier':
        return StrongClassifier(self.stumps, threshold)

    def to_dict(self) -> Dict:
        return {
            "stumps": [stump.to_dict() for stump in self.stumps],
            "stage_threshold": self.stage_threshold,
        }

    @staticmethod
    def from_dict(data: Dict) -> 'StrongClassifier':
        return StrongClassifier(
            stumps=tuple(WeakClassifier.from_dict(stump) for stump in data["stumps"]),
            stage_threshold=float(data["stage_threshold"]),
        )
