"""Pipeline configuration shared by every CLI subcommand."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .predictor import DEFAULT_TOP_K
from .reconstruct import ReconstructConfig, WallConfig
from .sampler import DEFAULT_INTERVAL
from .swa import DEFAULT_STEP, DEFAULT_WINDOW, SWAConfig

PREDICTORS = ("replay", "baseline")


class ConfigError(ValueError):
    """Invalid configuration file or value."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that changes pipeline output.

    Thread count is deliberately absent: it never changes results.
    """

    interval: float = DEFAULT_INTERVAL
    scale: float = 1.0
    window: float = DEFAULT_WINDOW
    step: float = DEFAULT_STEP
    mask_threshold: float = 0.5
    nms_threshold: float = 0.5
    nms_sigma: float = 2.0
    nms_kernel: str = "gaussian"
    top_k: int = DEFAULT_TOP_K
    weighted_vote: bool = True
    min_unclaimed: float = 0.5
    class_table: str | None = None
    predictor: str = "replay"
    raster_res: int = 8192
    merge_tol: float | None = None
    area_min: float = 0.0005
    pivot_tol: float = 0.05
    group_tol: float = 0.2
    angle_tol: float = 5.0
    wall_height: float = 3.0

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor must be one of {list(PREDICTORS)}, got {self.predictor!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigError("scale must be a positive finite number")
        try:
            self.swa()
            self.reconstruction()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def swa(self) -> SWAConfig:
        return SWAConfig(self.window, self.step, self.interval, self.mask_threshold, self.nms_threshold,
                         self.nms_sigma, self.nms_kernel, int(self.top_k), bool(self.weighted_vote),
                         self.min_unclaimed)

    def reconstruction(self) -> ReconstructConfig:
        walls = WallConfig(raster_res=int(self.raster_res), merge_tol=self.merge_tol, area_min=self.area_min)
        return ReconstructConfig(walls, self.pivot_tol, self.group_tol, self.angle_tol, self.wall_height)

    def to_dict(self) -> dict:
        return asdict(self)

    def updated(self, **overrides) -> "PipelineConfig":
        """Copy with the non-None overrides applied."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, value in data.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            t = types[key]
            if value is None:
                if "None" not in t:
                    raise ConfigError(f"{key} may not be null")
            elif t.startswith("bool"):
                if not isinstance(value, bool):
                    raise ConfigError(f"{key} must be a boolean")
            elif t.startswith("int"):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"{key} must be an integer")
            elif t.startswith("float"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{key} must be a number")
                value = float(value)
            elif not isinstance(value, str):
                raise ConfigError(f"{key} must be a string")
            out[key] = value
        return cls().updated(**out) if out else cls()


def load_config(path: str | Path | None, **overrides) -> PipelineConfig:
    """Defaults, then the JSON file, then explicit overrides (None means unset)."""
    cfg = PipelineConfig()
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})") from None
        cfg = PipelineConfig.from_dict(data)
    return cfg.updated(**overrides)
