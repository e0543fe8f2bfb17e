"""YAML config loading for the CLI.

A config file is a nested mapping with optional sections ``task``, ``vae``,
``graph``, ``surrogate``, ``mbo`` plus top-level ``ablation``/``name``; every
field has a default, so an empty mapping is valid. ``sweep`` maps dotted
field names to value lists for the sweep command. The special path
``builtin:nk-desk`` loads the canonical NK desk task.
"""

from __future__ import annotations

from dataclasses import fields

import yaml

from .graph import SmoothingParams
from .mbo import MboConfig, SurrogateConfig
from .pipeline import RunConfig, TaskConfig, VaeSettings, nk_desk_config

_SECTIONS = {
    "task": TaskConfig,
    "vae": VaeSettings,
    "graph": SmoothingParams,
    "surrogate": SurrogateConfig,
    "mbo": MboConfig,
}

BUILTINS = {"nk-desk": nk_desk_config}


def _build_section(cls, mapping: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(mapping) - allowed
    if unknown:
        raise ValueError(f"unknown {section} config fields: {sorted(unknown)}")
    return cls(**mapping)


def config_from_dict(raw: dict) -> tuple[RunConfig, dict]:
    """Build a RunConfig (and the sweep grid, possibly empty) from a mapping."""
    raw = dict(raw or {})
    sweep_grid = raw.pop("sweep", {}) or {}
    kwargs = {}
    for section, cls in _SECTIONS.items():
        mapping = raw.pop(section, {}) or {}
        if not isinstance(mapping, dict):
            raise ValueError(f"config section {section!r} must be a mapping")
        kwargs[section] = _build_section(cls, mapping, section)
    for key in ("ablation", "seed", "name"):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if raw:
        raise ValueError(f"unknown top-level config keys: {sorted(raw)}")
    if not isinstance(sweep_grid, dict):
        raise ValueError("sweep must map dotted config fields to value lists")
    return RunConfig(**kwargs), sweep_grid


def load_config(path: str | None) -> tuple[RunConfig, dict]:
    """Load a YAML config file, a ``builtin:<name>`` config, or defaults."""
    if path is None:
        return RunConfig(), {}
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        if name not in BUILTINS:
            raise ValueError(f"unknown builtin config {name!r}; have {sorted(BUILTINS)}")
        return BUILTINS[name](), {}
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return config_from_dict(raw)
