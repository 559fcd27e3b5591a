from dataclasses import dataclass
from typing import Dict

from .haar_feature import HaarFeature


@dataclass(frozen=True)
class WeakClassifier:
    """
    A decision stump over one Haar feature: h = 1 iff p*f < p*threshold.

    Attributes:
    - feature_index: Position of the feature in the enumeration it was selected from.
    - feature: The feature itself.
    - polarity: +1 or -1.
    - threshold: Decision threshold on the (normalized) feature value.
    - alpha: Non-negative vote weight.
    """
    feature_index: int
    feature: HaarFeature
    polarity: int
    threshold: float
    alpha: float

    def to_dict(self) -> Dict:
        return {
            "feature_index": self.feature_index,
            "feature": self.feature.to_dict(),
            "polarity": self.polarity,
            "threshold": self.threshold,
            "alpha": self.alpha,
        }

    @staticmethod
    def from_dict(data: Dict) -> 'WeakClassifier':
        return WeakClassifier(
            feature_index=int(data.get("feature_index", -1)),
            feature=HaarFeature.from_dict(data["feature"]),
            polarity=int(data["polarity"]),
            threshold=float(data["threshold"]),
            alpha=float(data["alpha"]),
        )
