from dataclasses import dataclass, asdict, fields
from typing import Dict, List


@dataclass
class CascadeTrainConfig:
    """
    Knobs for stage-wise cascade training.

    Attributes:
    - per_stage_min_detection: Detection rate each stage must reach on the validation positives.
    - per_stage_max_fp: False-positive rate each stage must get below on its negatives.
    - target_overall_fp: Training stops once the measured pool FP rate is at or below this.
    - max_stages: Hard cap on the number of stages.
    - stumps_per_stage_cap: A stage that needs more stumps than this aborts training.
    - seed: Seeds the validation split and negative mining.
    - base_window: Side of the square detection window.
    - feature_stride: Position and size step of the feature enumeration.
    - feature_min_size: Smallest cell extent of an enumerated feature.
    - negatives_per_stage: Number of negatives mined for every stage.
    - validation_fraction: Share of positives held out for the detection target.
    - variance_floor: Lower clamp on the window standard deviation.
    - cache_feature_values: Keep the per-stage feature matrix in memory (small pools only).
    - mining_stride: Scan stride, at base scale, used to mine negatives.
    - mining_scale_step: Scale step used to mine negatives.
    """
    per_stage_min_detection: float = 0.995
    per_stage_max_fp: float = 0.5
    target_overall_fp: float = 1e-3
    max_stages: int = 20
    stumps_per_stage_cap: int = 200
    seed: int = 0
    base_window: int = 24
    feature_stride: int = 2
    feature_min_size: int = 2
    negatives_per_stage: int = 500
    validation_fraction: float = 0.2
    variance_floor: float = 1.0
    cache_feature_values: bool = False
    mining_stride: int = 2
    mining_scale_step: float = 1.25

    def problems(self) -> List[str]:
        """
        Lists every field that is outside its allowed range.
        """
        found = []
        if not 0.0 < self.per_stage_min_detection <= 1.0:
            found.append(f"per_stage_min_detection must be in (0, 1], got {self.per_stage_min_detection}")
        if not 0.0 < self.per_stage_max_fp < 1.0:
            found.append(f"per_stage_max_fp must be in (0, 1), got {self.per_stage_max_fp}")
        if not 0.0 < self.target_overall_fp < 1.0:
            found.append(f"target_overall_fp must be in (0, 1), got {self.target_overall_fp}")
        if self.max_stages < 1:
            found.append(f"max_stages must be at least 1, got {self.max_stages}")
        if self.stumps_per_stage_cap < 1:
            found.append(f"stumps_per_stage_cap must be at least 1, got {self.stumps_per_stage_cap}")
        if self.base_window < 4:
            found.append(f"base_window must be at least 4, got {self.base_window}")
        if self.feature_stride < 1:
            found.append(f"feature_stride must be at least 1, got {self.feature_stride}")
        if self.feature_min_size < 1:
            found.append(f"feature_min_size must be at least 1, got {self.feature_min_size}")
        if self.negatives_per_stage < 1:
            found.append(f"negatives_per_stage must be at least 1, got {self.negatives_per_stage}")
        if not 0.0 < self.validation_fraction < 1.0:
            found.append(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.variance_floor <= 0.0:
            found.append(f"variance_floor must be positive, got {self.variance_floor}")
        if self.mining_stride < 1:
            found.append(f"mining_stride must be at least 1, got {self.mining_stride}")
        if self.mining_scale_step <= 1.0:
            found.append(f"mining_scale_step must be greater than 1, got {self.mining_scale_step}")
        return found

    def to_dict(self) -> Dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: Dict) -> 'CascadeTrainConfig':
        known = {f.name for f in fields(CascadeTrainConfig)}
        return CascadeTrainConfig(**{key: value for key, value in data.items() if key in known})
