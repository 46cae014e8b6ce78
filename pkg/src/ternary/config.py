"""Flat ``key = value`` configuration files merged over per-command defaults."""

from __future__ import annotations

import dataclasses
from pathlib import Path


class ConfigError(ValueError):
    """Bad configuration file; the message names the key and line."""


def _convert(raw: str, default, key: str, lineno: int):
    kind = type(default)
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            if not raw.strip():
                return ()
            elem = type(default[0]) if default else float
            return tuple(elem(x.strip()) for x in raw.split(","))
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if default is None:
            return float(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: key '{key}' expects {kind.__name__}, got {raw!r}"
        ) from None


def parse_config_text(text: str, defaults: dict) -> dict:
    """Merge the ``key = value`` lines of ``text`` over ``defaults``.

    Lists are comma separated; ``#`` starts a comment.  Unknown keys,
    malformed lines and values of the wrong type raise ConfigError.
    """
    out = dict(defaults)
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: key '{key}' already set on line {seen[key]}")
        seen[key] = lineno
        out[key] = _convert(raw, defaults[key], key, lineno)
    return out


def parse_config(path, defaults: dict) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"), defaults)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: dict) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in cfg.items())


def dataclass_defaults(cls) -> dict:
    return {f.name: f.default for f in dataclasses.fields(cls)}
