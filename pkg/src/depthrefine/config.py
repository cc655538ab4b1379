"""Tool configuration: defaults, YAML overrides, and an echo of the effective values."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .distill import LossWeights
from .errors import DataError
from .metrics import DEFAULT_TRUNCATION, CannyConfig
from .refine import RefineConfig


@dataclass
class TsdfConfig:
    voxel_size: float = 0.02
    truncation: float = 0.1
    surface_band: float = 0.2


@dataclass
class Config:
    refine: RefineConfig = field(default_factory=RefineConfig)
    canny: CannyConfig = field(default_factory=CannyConfig)
    dbe_truncation: float = DEFAULT_TRUNCATION
    tsdf: TsdfConfig = field(default_factory=TsdfConfig)
    png_scale: float = 0.001


def _merge(obj, overrides: dict, where: str):
    if not isinstance(overrides, dict):
        raise DataError(f"config section {where or '<root>'} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in overrides.items():
        if key not in names:
            raise DataError(f"unknown config key {where + key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            value = _merge(current, value, f"{where}{key}.")
        else:
            try:
                if isinstance(current, bool):
                    value = bool(value)
                elif isinstance(current, int):
                    value = int(value)
                elif isinstance(current, float):
                    value = float(value)
            except (TypeError, ValueError) as exc:
                raise DataError(f"config key {where + key!r}: {exc}") from exc
        changes[key] = value
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid config section {where or '<root>'}: {exc}") from exc


def config_from_dict(overrides: dict) -> Config:
    return _merge(Config(), overrides or {}, "")


def load_config(path) -> Config:
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise DataError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data or {})


def config_to_dict(cfg: Config) -> dict:
    return dataclasses.asdict(cfg)


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


__all__ = ["Config", "TsdfConfig", "LossWeights", "config_from_dict", "load_config", "config_to_dict", "dump_config"]
