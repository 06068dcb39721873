"""INI-style ``key = value`` config files.

Sections: ``[train]`` (training and model hyperparameters, see
``TrainConfig``) and ``[data]`` (generator settings, see ``GeneratorSpec``).
Values are parsed against the type of the field's default.
"""
from __future__ import annotations

import configparser
from dataclasses import MISSING, fields

SECTIONS = ("train", "data")


def _parse(raw: str, default, key: str):
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            return tuple(parts)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        return float(text)
    return text


def coerce(cls, values: dict) -> dict:
    """Parse string ``values`` for dataclass ``cls``; unknown keys raise."""
    defaults = {f.name: (f.default if f.default is not MISSING else None) for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        name = key.replace("-", "_")
        if name not in defaults:
            raise ValueError(f"unknown {cls.__name__} key {key!r}")
        try:
            out[name] = _parse(raw, defaults[name], key) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from None
    return out


def load_config(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path, encoding="utf-8") as f:
        parser.read_file(f)
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}; expected {list(SECTIONS)}")
    return {s: dict(parser[s]) if parser.has_section(s) else {} for s in SECTIONS}
