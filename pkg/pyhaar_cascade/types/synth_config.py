from dataclasses import dataclass, asdict, fields
from typing import Dict, List


@dataclass
class SynthConfig:
    """
    Generator settings for the synthetic bright-square task.

    Attributes:
    - base_window: Side of positive crops.
    - positives: Number of positive crops.
    - negatives: Number of pure-noise negative images.
    - negative_size: Side of each negative image.
    - near_misses: Number of base-window hard negatives: squares too small, too
      large or too far off-centre to count as the object.
    - scenes: Number of annotated scenes.
    - scene_width, scene_height: Scene dimensions.
    - objects_per_scene: Maximum number of squares placed per scene.
    - square_min, square_max: Range of the square side inside a positive crop.
    - jitter: Maximum centre offset of the square inside a positive crop.
    - ground_level: Mean background intensity.
    - noise_amplitude: Half-range of the uniform texture noise.
    - contrast_min, contrast_max: Range of square brightness above the ground.
    """
    base_window: int = 24
    positives: int = 600
    negatives: int = 200
    negative_size: int = 96
    near_misses: int = 6000
    scenes: int = 50
    scene_width: int = 160
    scene_height: int = 120
    objects_per_scene: int = 2
    square_min: int = 10
    square_max: int = 14
    jitter: int = 2
    ground_level: int = 60
    noise_amplitude: int = 20
    contrast_min: int = 90
    contrast_max: int = 150

    def problems(self) -> List[str]:
        found = []
        if self.base_window < 4:
            found.append(f"base_window must be at least 4, got {self.base_window}")
        for name in ("positives", "negatives", "near_misses", "scenes"):
            if getattr(self, name) < 0:
                found.append(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.negative_size < self.base_window:
            found.append(f"negative_size {self.negative_size} is smaller than the base window")
        if self.scene_width < self.base_window or self.scene_height < self.base_window:
            found.append("scenes must be at least base-window sized")
        if not 1 <= self.square_min <= self.square_max <= self.base_window - 2 * self.jitter:
            found.append("square sizes must satisfy 1 <= square_min <= square_max <= base_window - 2*jitter")
        if self.jitter < 0:
            found.append(f"jitter must be non-negative, got {self.jitter}")
        if not 0 <= self.ground_level - self.noise_amplitude:
            found.append("ground_level - noise_amplitude must be non-negative")
        if self.ground_level + self.noise_amplitude + self.contrast_max > 255:
            found.append("ground_level + noise_amplitude + contrast_max must not exceed 255")
        if not 0 < self.contrast_min <= self.contrast_max:
            found.append("contrast range must satisfy 0 < contrast_min <= contrast_max")
        if self.near_misses and not (self.square_min > 3 and self.square_max + 3 <= self.base_window):
            found.append("near misses need 3 < square_min and square_max + 3 <= base_window")
        if self.objects_per_scene < 0:
            found.append(f"objects_per_scene must be non-negative, got {self.objects_per_scene}")
        return found

    def to_dict(self) -> Dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: Dict) -> 'SynthConfig':
        known = {f.name for f in fields(SynthConfig)}
        return SynthConfig(**{key: value for key, value in data.items() if key in known})
