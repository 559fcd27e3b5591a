import json
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

from .types.cascade_train_config import CascadeTrainConfig
from .types.scan_config import ScanConfig
from .types.synth_config import SynthConfig
from .types.tracking_config import TrackingConfig

SECTIONS = {
    "train": CascadeTrainConfig,
    "scan": ScanConfig,
    "tracking": TrackingConfig,
    "synth": SynthConfig,
}


@dataclass
class RunConfig:
    """
    Everything one run needs: the per-module configs, seed, worker count and data paths.

    Attributes:
    - train, scan, tracking, synth: Module configs.
    - seed: Seed for training and synthesis; overrides train.seed.
    - workers: Worker threads, 0 for one per CPU.
    - positives_dir: Directory of base-window positive crops.
    - negatives_dir: Directory of object-free images for negative mining.
    - annotations: Annotation file of the evaluation set.
    - cascade: Cascade file to write (train) or read (detect, eval, count).
    """
    train: CascadeTrainConfig = field(default_factory=CascadeTrainConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0
    workers: int = 1
    positives_dir: Optional[str] = None
    negatives_dir: Optional[str] = None
    annotations: Optional[str] = None
    cascade: Optional[str] = None

    class ConfigError(Exception):
        """
        Exception raised when the configuration is unreadable or has out-of-range values.
        """
        def __init__(self, problems: List[str], source: Optional[str] = None):
            self.problems = list(problems)
            self.source = source
            prefix = f"Invalid configuration ({source})" if source else "Invalid configuration"
            self.message = f"{prefix}: " + "; ".join(self.problems)
            super().__init__(self.message)

        def __str__(self):
            return self.message

    def validate(self) -> 'RunConfig':
        """
        Checks every field against its module's ranges.

        :return: The config itself.
        :raises: RunConfig.ConfigError listing every problem found.
        """
        found = []
        for name in SECTIONS:
            try:
                found.extend(f"{name}.{problem}" for problem in getattr(self, name).problems())
            except TypeError:
                found.append(f"{name} has a field of the wrong type")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            found.append(f"seed must be a non-negative integer, got {self.seed!r}")
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 0:
            found.append(f"workers must be a non-negative integer, got {self.workers!r}")
        if self.train.base_window != self.synth.base_window:
            found.append(f"train.base_window {self.train.base_window} differs from "
                         f"synth.base_window {self.synth.base_window}")
        if found:
            raise RunConfig.ConfigError(found)
        return self

    def training(self) -> CascadeTrainConfig:
        """The training config with the run seed applied."""
        return replace(self.train, seed=self.seed)

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def with_overrides(self, overrides: Dict[str, Any]) -> 'RunConfig':
        """
        Applies `section.field` or top-level keys; None values are ignored.
        """
        data = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if "." in key:
                section, name = key.split(".", 1)
                if section not in SECTIONS:
                    raise RunConfig.ConfigError([f"unknown config section {section!r}"])
                data[section][name] = value
            else:
                data[key] = value
        return RunConfig.from_dict(data)

    def to_dict(self) -> Dict:
        data = {name: getattr(self, name).to_dict() for name in SECTIONS}
        for f in fields(self):
            if f.name not in SECTIONS:
                data[f.name] = getattr(self, f.name)
        return data

    @staticmethod
    def from_dict(data: Dict, source: Optional[str] = None) -> 'RunConfig':
        if not isinstance(data, dict):
            raise RunConfig.ConfigError(["the configuration must be an object"], source)
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise RunConfig.ConfigError([f"unknown config key {key!r}" for key in unknown], source)

        values = {}
        for key, value in data.items():
            if key in SECTIONS:
                if not isinstance(value, dict):
                    raise RunConfig.ConfigError([f"{key} must be an object"], source)
                extra = sorted(set(value) - {f.name for f in fields(SECTIONS[key])})
                if extra:
                    raise RunConfig.ConfigError([f"unknown config key {key}.{name}" for name in extra], source)
                try:
                    values[key] = SECTIONS[key].from_dict(value)
                except (KeyError, TypeError, ValueError) as e:
                    raise RunConfig.ConfigError([f"{key}: {e}"], source)
            else:
                values[key] = value
        return RunConfig(**values)

    @staticmethod
    def from_file(path: str) -> 'RunConfig':
        """
        Loads a JSON config file; missing keys keep their defaults.

        :raises: RunConfig.ConfigError if the file cannot be read or parsed.
        """
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as e:
            raise RunConfig.ConfigError([f"cannot read config file: {e.strerror}"], path)
        except json.JSONDecodeError as e:
            raise RunConfig.ConfigError([f"cannot parse config file: {e}"], path)
        return RunConfig.from_dict(data, path)
