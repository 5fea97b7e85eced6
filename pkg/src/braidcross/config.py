"""YAML overrides for the simulation config.

A file mirrors ``SimConfig``: top-level scalars plus optional ``belief``,
``controller`` and ``geometry`` sections, e.g.::

    cycle: 0.25
    v_low_fraction: 0.5
    belief:
      sigmoid_a: 4.0
      sigmoid_delta: 1.0
"""

from __future__ import annotations

from dataclasses import asdict, fields, replace
from pathlib import Path

import yaml

from .belief import BeliefConfig
from .harness import SimConfig
from .world import ControllerConfig, IntersectionGeometry

_SECTIONS = {"belief": BeliefConfig, "controller": ControllerConfig, "geometry": IntersectionGeometry}


class ConfigError(ValueError):
    pass


def _apply(obj, overrides: dict, where: str):
    names = {f.name for f in fields(obj)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    return replace(obj, **overrides)


def config_from_dict(data: dict | None) -> SimConfig:
    data = dict(data or {})
    cfg = SimConfig()
    sections = {}
    for name in _SECTIONS:
        if name in data:
            sub = data.pop(name) or {}
            if not isinstance(sub, dict):
                raise ConfigError(f"section {name!r} must be a mapping")
            sections[name] = _apply(getattr(cfg, name), sub, name)
    if "pref_range" in data:
        data["pref_range"] = tuple(data["pref_range"])
    cfg = _apply(cfg, data, "top-level")
    cfg = replace(cfg, **sections)
    cfg.steps_per_cycle  # validates dt / cycle
    return cfg


def load_config(path: str | Path | None) -> SimConfig:
    if path is None:
        return SimConfig()
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return config_from_dict(data)


def config_to_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    d["pref_range"] = list(cfg.pref_range)
    return d


def dump_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True), encoding="utf-8")
