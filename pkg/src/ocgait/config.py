"""Config file handling.

Plain ``section.field = value`` text merged over dataclass defaults; unknown
keys are rejected so typos fail loudly. Every CLI run writes the resolved
snapshot next to its outputs, which is enough to reproduce it.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .evolution import GAConfig
from .gait_data import SyntheticGaitConfig
from .phase_estimator import EstimatorConfig
from .predictor import TrainConfig


@dataclass(frozen=True)
class CliConfig:
    generator: SyntheticGaitConfig = field(default_factory=SyntheticGaitConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ga: GAConfig = field(default_factory=GAConfig)


_SIMPLE_TYPES = (int, float, bool, str)


def _coerce(text: str, typ, key: str):
    origin = typing.get_origin(typ)
    if origin is tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        inner = typing.get_args(typ)[0]
        return tuple(_coerce(p, inner, key) for p in parts)
    if typ is bool:
        low = text.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if typ is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}")
    if typ is float:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}")
    if typ is str:
        return text
    raise ConfigError(f"{key}: field cannot be set from a config file")


def parse_config_file(path) -> dict[str, str]:
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = stripped.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


def _section_fields(section_obj) -> dict[str, type]:
    hints = typing.get_type_hints(type(section_obj))
    out = {}
    for f in dataclasses.fields(section_obj):
        typ = hints[f.name]
        if typ in _SIMPLE_TYPES or typing.get_origin(typ) is tuple:
            out[f.name] = typ
    return out


def apply_config(cfg: CliConfig, mapping: dict[str, str]) -> CliConfig:
    updates: dict[str, dict] = {}
    for key, value in mapping.items():
        if "." not in key:
            raise ConfigError(f"unknown config key {key!r} (expected section.field)")
        section, fname = key.split(".", 1)
        if section not in {f.name for f in dataclasses.fields(cfg)}:
            raise ConfigError(f"unknown config section {section!r}")
        section_obj = getattr(cfg, section)
        allowed = _section_fields(section_obj)
        if fname not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
        updates.setdefault(section, {})[fname] = _coerce(value, allowed[fname], key)
    replacements = {
        name: dataclasses.replace(getattr(cfg, name), **fields)
        for name, fields in updates.items()
    }
    return dataclasses.replace(cfg, **replacements)


def load_cli_config(path=None) -> CliConfig:
    cfg = CliConfig()
    if path is not None:
        cfg = apply_config(cfg, parse_config_file(path))
    return cfg


def _render_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_render_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


def render_config(cfg: CliConfig, extras: dict | None = None) -> str:
    """Deterministic snapshot of all simple config fields plus run extras."""
    lines = []
    for f in dataclasses.fields(cfg):
        section_obj = getattr(cfg, f.name)
        for fname in sorted(_section_fields(section_obj)):
            lines.append(f"{f.name}.{fname} = {_render_value(getattr(section_obj, fname))}")
    for key in sorted(extras or {}):
        lines.append(f"run.{key} = {_render_value(extras[key])}")
    return "\n".join(lines) + "\n"
