"""Experiment configuration files.

One TOML file describes one experiment: a [target] table, an [upper]
table for the chains, a [lower] table for the weighting method, and a
[run] table for repetition control. Keys map one to one onto the
``*Spec`` dataclasses in :mod:`lais.harness`; unknown sections or keys are
rejected rather than ignored so a typo cannot silently change an
experiment.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .harness import (ExperimentConfig, LowerSpec, RunSpec, TargetSpec,
                      UpperSpec)

_SECTIONS = {
    "target": TargetSpec,
    "upper": UpperSpec,
    "lower": LowerSpec,
    "run": RunSpec,
}


def _build_section(cls, table: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigError(
            f"[{section}] has unknown keys: {', '.join(unknown)}"
        )
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(f"[{section}] is incomplete: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    if "target" not in data:
        raise ConfigError("a [target] section with a 'name' key is required")
    sections = {}
    for section, cls in _SECTIONS.items():
        table = data.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        sections[section] = _build_section(cls, table, section)
    return ExperimentConfig(**sections).validate()


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from exc
    return config_from_dict(data)


def config_to_toml(config: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` for provenance copies."""

    def fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, str):
            return f'"{value}"'
        if isinstance(value, (list, tuple)):
            return "[" + ", ".join(fmt(v) for v in value) + "]"
        return repr(value)

    lines = []
    for section, spec in (("target", config.target), ("upper", config.upper),
                          ("lower", config.lower), ("run", config.run)):
        lines.append(f"[{section}]")
        for f in dataclasses.fields(spec):
            value = getattr(spec, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {fmt(value)}")
        lines.append("")
    return "\n".join(lines)
