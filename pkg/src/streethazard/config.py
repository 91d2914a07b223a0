"""Run configuration: defaults < JSON config file < HAZ_* environment < flags."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, fields
from typing import Any, Mapping, Optional

from .aggregate import DEFAULT_GRID_N
from .geolabel import DEFAULT_RADIUS_M
from .hazard import BAND_HI, BAND_LO
from .mirror import DEFAULT_K
from .scene import DEFAULT_CAM_THRESHOLD

ENV_PREFIX = "HAZ_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    images: Optional[str] = None
    accidents: Optional[str] = None
    out: str = "out"
    radius_m: float = DEFAULT_RADIUS_M
    cam_threshold: float = DEFAULT_CAM_THRESHOLD
    k: int = DEFAULT_K
    band_lo: float = BAND_LO
    band_hi: float = BAND_HI
    grid_n: int = DEFAULT_GRID_N
    categories: Optional[str] = None
    grouping: Optional[str] = None
    bbox: Optional[tuple] = None  # (min_lat, min_lon, max_lat, max_lon)
    threads: int = 1
    mode: str = "both"
    mask_type: str = "P"
    threshold: float = 0.5
    probs: Optional[str] = None
    mirrors: Optional[str] = None
    per_target: int = 1
    only: Optional[str] = None
    seed: int = 0
    n_images: int = 200

    def __post_init__(self):
        if not self.radius_m > 0:
            raise ConfigError(f"radius_m must be positive, got {self.radius_m}")
        if not 0 <= self.cam_threshold <= 1:
            raise ConfigError(f"cam_threshold must lie in [0, 1], got {self.cam_threshold}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0 <= self.band_lo <= self.band_hi <= 1:
            raise ConfigError(f"band thresholds must satisfy 0 <= lo <= hi <= 1, got {self.band_lo}, {self.band_hi}")
        if self.grid_n < 1:
            raise ConfigError(f"grid_n must be >= 1, got {self.grid_n}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.mode not in ("both", "dummy"):
            raise ConfigError(f"mode must be 'both' or 'dummy', got {self.mode!r}")
        if self.mask_type.upper() not in ("P", "V"):
            raise ConfigError(f"mask_type must be P or V, got {self.mask_type!r}")
        if self.per_target < 1:
            raise ConfigError(f"per_target must be >= 1, got {self.per_target}")
        if self.bbox is not None:
            if len(self.bbox) != 4:
                raise ConfigError(f"bbox needs 4 numbers, got {self.bbox!r}")
            object.__setattr__(self, "bbox", tuple(float(x) for x in self.bbox))


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    default = _FIELDS[name].default
    if name == "bbox":
        if isinstance(value, str):
            value = [p for p in value.replace(";", ",").split(",") if p.strip()]
        return tuple(float(x) for x in value)
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return str(value)


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return data


def resolve_config(flags: Mapping[str, Any], config_path: Optional[str] = None,
                   environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Merge the configuration layers; ``None`` flag values mean "not given"."""
    environ = os.environ if environ is None else environ
    values: dict = {}
    if config_path:
        values.update(load_config_file(config_path))
    for name in _FIELDS:
        env = environ.get(ENV_PREFIX + name.upper())
        if env is not None and env != "":
            values[name] = env
    for name, value in flags.items():
        if name in _FIELDS and value is not None:
            values[name] = value
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})


def as_dict(config: RunConfig) -> dict:
    return dataclasses.asdict(config)
