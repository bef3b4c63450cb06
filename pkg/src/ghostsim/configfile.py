"""Reading and writing scenario config files.

Grammar (one statement per line)::

    # comment                      blank lines and comments are ignored
    scenario = two_hole            optional, before the first section
    [section]                      grid, source, ensemble, arms, object,
                                   detector, analysis, output
    key = value                    value may be quoted; ' #' starts a comment

Lengths need a unit (m, cm, mm, um, µm, nm) and times one of s, ms, us, µs,
ns, ps, fs; both are converted to SI. Lists are comma separated. ``none``
clears an optional value. Keys that are not set keep the scenario defaults.
"""
from __future__ import annotations

import dataclasses
import re
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .scenarios.config import SECTIONS, ScenarioConfig, default_config

__all__ = ["parse_config", "parse_config_text", "write_config", "format_config", "parse_quantity"]

LENGTH_UNITS = {"m": "1", "cm": "1e-2", "mm": "1e-3", "um": "1e-6", "µm": "1e-6",
                "μm": "1e-6", "nm": "1e-9"}
TIME_UNITS = {"s": "1", "ms": "1e-3", "us": "1e-6", "µs": "1e-6", "μs": "1e-6",
              "ns": "1e-9", "ps": "1e-12", "fs": "1e-15"}

_NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY = re.compile(rf"^({_NUMBER})\s*([^\d\s.+-][^\s]*)?$")
_SECTION = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
_ASSIGN = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")


def parse_quantity(text: str, units: dict, what: str = "value") -> float:
    """Parse ``"80um"``-style text to SI using ``units`` (suffix -> scale)."""
    m = _QUANTITY.match(text.strip())
    if not m:
        raise ConfigError(f"cannot parse {what} {text!r}")
    number, unit = m.groups()
    if unit is None:
        raise ConfigError(f"{what} {text!r} needs a unit ({', '.join(units)})")
    if unit not in units:
        raise ConfigError(f"unknown unit {unit!r} in {text!r}; expected one of {', '.join(units)}")
    return float(Decimal(number) * Decimal(units[unit]))


def _plain_number(text: str, what: str) -> Decimal:
    t = text.strip()
    if not re.fullmatch(_NUMBER, t):
        raise ConfigError(f"{what} must be a plain number, got {text!r}")
    return Decimal(t)


def _int(text: str, what: str) -> int:
    d = _plain_number(text, what)
    if d != d.to_integral_value():
        raise ConfigError(f"{what} must be an integer, got {text!r}")
    return int(d)


def _parse_value(kind: str, text: str, key: str):
    optional = kind.endswith("?")
    base = kind.rstrip("?")
    if text.lower() == "none":
        if optional:
            return None
        raise ConfigError(f"{key} cannot be none")
    try:
        if base == "length":
            return parse_quantity(text, LENGTH_UNITS, key)
        if base == "time":
            return parse_quantity(text, TIME_UNITS, key)
        if base == "int":
            return _int(text, key)
        if base == "float":
            return float(_plain_number(text, key))
        if base == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ConfigError(f"{key} must be true or false, got {text!r}")
        if base == "floats":
            return tuple(float(_plain_number(p, key)) for p in _split_list(text, key))
        if base == "ints":
            return tuple(_int(p, key) for p in _split_list(text, key))
        if base == "str":
            return text
    except InvalidOperation:
        raise ConfigError(f"cannot parse {key} {text!r}") from None
    raise AssertionError(f"unhandled field kind {kind!r}")


def _split_list(text: str, key: str) -> list:
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(not p for p in parts):
        raise ConfigError(f"{key} must be a comma-separated list, got {text!r}")
    return parts


def _strip(raw: str) -> str:
    v = raw.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "'\"":
        return v[1:-1]
    # Inline comment: whitespace followed by '#'.
    v = re.split(r"\s+#", v, maxsplit=1)[0].strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "'\"":
        return v[1:-1]
    return v


def parse_config_text(text: str, scenario: Optional[str] = None) -> ScenarioConfig:
    """Parse config text on top of the defaults of its scenario.

    ``scenario`` (for example from the command line) names the scenario when
    the text does not; if both are given they must agree.
    """
    file_scenario = None
    section = None
    updates: dict = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SECTIONS)}", lineno)
            updates.setdefault(section, {})
            continue
        m = _ASSIGN.match(line)
        if not m:
            raise ConfigError(f"expected 'key = value' or '[section]', got {line!r}", lineno)
        key, value = m.group(1), _strip(m.group(2))
        if value == "":
            raise ConfigError(f"missing value for {key}", lineno)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key}", lineno)
        seen.add((section, key))
        if section is None:
            if key != "scenario":
                raise ConfigError(f"key {key!r} must appear inside a section", lineno)
            file_scenario = value
            continue
        fields = {f.name: f for f in dataclasses.fields(SECTIONS[section])}
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in [{section}]; expected one of {', '.join(fields)}", lineno)
        try:
            updates[section][key] = _parse_value(fields[key].metadata["kind"], value, key)
        except ConfigError as exc:
            raise ConfigError(str(exc), lineno) from None
    if scenario and file_scenario and scenario != file_scenario:
        raise ConfigError(f"config is for scenario {file_scenario!r} but {scenario!r} was requested")
    name = scenario or file_scenario
    if not name:
        raise ConfigError("no scenario named (set 'scenario = ...' or pass one explicitly)")
    cfg = default_config(name)
    for sec, changes in updates.items():
        if changes:
            cfg = cfg.replace(sec, **changes)
    return cfg.validate()


def parse_config(path, scenario: Optional[str] = None) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from None
    return parse_config_text(text, scenario)


def _format_value(kind: str, value) -> str:
    if value is None:
        return "none"
    base = kind.rstrip("?")
    if base == "length":
        return f"{float(value)!r}m"
    if base == "time":
        return f"{float(value)!r}s"
    if base == "bool":
        return "true" if value else "false"
    if base == "float":
        return repr(float(value))
    if base == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if base == "ints":
        return ", ".join(str(int(v)) for v in value)
    return str(value)


def format_config(cfg: ScenarioConfig) -> str:
    """Every setting of ``cfg`` in config-file syntax (exact round trip)."""
    lines = [f"scenario = {cfg.scenario}"]
    for name in SECTIONS:
        sec = getattr(cfg, name)
        lines.append("")
        lines.append(f"[{name}]")
        for f in dataclasses.fields(sec):
            lines.append(f"{f.name} = {_format_value(f.metadata['kind'], getattr(sec, f.name))}")
    return "\n".join(lines) + "\n"


def write_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")
