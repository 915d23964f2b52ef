import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from .corenet.model import CORE_SIZE, neurons_per_core
from .events import SensorGeometry
from .exceptions import ConfigError
from .stimulus import STIMULI, StimulusModel, make_model

logger = logging.getLogger(__name__)

CONFIG_ENV = "SPIKEFLOW_CONFIG"


@dataclass
class PipelineConfig:
    """Every parameter of a generate -> compile -> run -> decode -> eval -> render run."""

    stimulus: str = "pipe"
    stimulus_params: Dict[str, Any] = field(default_factory=dict)
    noise_rate: float = 0.0
    seed: int = 0
    width: int = 304
    height: int = 240
    dx: int = 6
    dy: int = 6
    tau_r: float = 60
    tau_d: int = 50
    tick_ms: float = 1.0
    relay: bool = True
    parallel: int = 0
    match_radius: float = 1.5
    time_tolerance: int = 2
    max_aae: Optional[float] = None
    max_aee: Optional[float] = None
    output_dir: str = "spikeflow-out"
    window_ms: float = 50.0

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(self.width, self.height)

    def model(self) -> StimulusModel:
        return make_model(self.stimulus, **dict(self.stimulus_params))

    @property
    def duration(self) -> float:
        return self.model().duration

    @property
    def ticks(self) -> int:
        return int(math.ceil(self.duration * 1000.0 / self.tick_ms))

    def validate(self) -> "PipelineConfig":
        if self.stimulus not in STIMULI:
            raise ConfigError(
                f"unknown stimulus '{self.stimulus}', expected one of {', '.join(STIMULI)}"
            )
        if self.tau_r <= self.tau_d:
            raise ConfigError(f"tau_r ({self.tau_r}) must exceed tau_d ({self.tau_d})")
        if self.dx < 1 or self.dy < 1:
            raise ConfigError(f"tile size must be positive, got {self.dx}x{self.dy}")
        n_sigma = neurons_per_core(self.dx, self.dy)
        if n_sigma > CORE_SIZE:
            raise ConfigError(
                f"{self.dx}x{self.dy} tiles need {n_sigma} neurons per core (max {CORE_SIZE})"
            )
        if self.tick_ms <= 0:
            raise ConfigError(f"tick_ms must be positive, got {self.tick_ms}")
        if self.window_ms <= 0:
            raise ConfigError(f"window_ms must be positive, got {self.window_ms}")
        if self.match_radius <= 0:
            raise ConfigError(f"match_radius must be positive, got {self.match_radius}")
        if self.noise_rate < 0:
            raise ConfigError(f"noise_rate must be >= 0, got {self.noise_rate}")
        if self.parallel < 0:
            raise ConfigError(f"parallel must be >= 0, got {self.parallel}")
        if self.width < 2 or self.height < 2:
            raise ConfigError(f"sensor must be at least 2x2, got {self.width}x{self.height}")
        try:
            self.model()
        except Exception as e:
            raise ConfigError(str(e)) from e
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown pipeline settings: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Path) -> "PipelineConfig":
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        return cls.from_dict(data)

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


class Config:
    def __init__(self, config_path: Optional[Path] = None):
        """Initialize configuration manager."""
        if config_path:
            self.config_path = config_path
        else:
            env_path = os.environ.get(CONFIG_ENV)
            if env_path:
                self.config_path = Path(env_path)
            else:
                self.config_path = Path.home() / ".spikeflow" / "config.json"
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        self._settings = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from file, writing the defaults on first use."""
        if not self.config_path.exists():
            default_config = PipelineConfig().to_dict()
            self._save_config(default_config)
            return default_config

        try:
            with open(self.config_path, "r") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error("Error loading config %s: %s", self.config_path, e)
            return {}

    def _save_config(self, config: Dict[str, Any]) -> bool:
        try:
            with open(self.config_path, "w") as f:
                json.dump(config, f, indent=2, sort_keys=True)
            return True
        except OSError as e:
            logger.error("Error saving config %s: %s", self.config_path, e)
            return False

    def get(self, key: str, default: Any = None) -> Any:
        return self._settings.get(key, default)

    def set(self, key: str, value: Any) -> bool:
        self._settings[key] = value
        return self._save_config(self._settings)

    def get_all(self) -> Dict[str, Any]:
        return self._settings.copy()

    def delete(self, key: str) -> bool:
        if key in self._settings:
            del self._settings[key]
            return self._save_config(self._settings)
        return False

    def reset(self) -> bool:
        """Reset configuration to defaults."""
        if self.config_path.exists():
            self.config_path.unlink()
        self._settings = self._load_config()
        return True

    def pipeline(self, **overrides: Any) -> PipelineConfig:
        """PipelineConfig from the stored settings, with non-None overrides applied."""
        known = {f.name for f in fields(PipelineConfig)}
        data = {k: v for k, v in self._settings.items() if k in known}
        params = dict(data.get("stimulus_params") or {})
        # stored parameters belong to the stored stimulus kind
        if overrides.get("stimulus") not in (None, data.get("stimulus")):
            params = {}
        params.update(overrides.pop("stimulus_params", None) or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        data["stimulus_params"] = params
        return PipelineConfig.from_dict(data).validate()
