"""Line-based key=value configuration with dotted access to nested fields.

Precedence is CLI flag > config file > built-in default. Values coerce to
the target dataclass field's type; unknown keys are configuration errors
so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .errors import ConfigError

__all__ = ["parse_config_file", "apply_overrides", "describe"]


def parse_config_file(path) -> dict:
    """Read `key = value` lines; blank lines and # comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def _coerce(value, target_type, key: str):
    if isinstance(value, target_type) and not isinstance(value, str):
        return value
    text = str(value)
    try:
        if target_type is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if target_type is int:
            return int(text, 0)
        if target_type is float:
            return float(text)
        if target_type is str:
            return text
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None
    raise ConfigError(f"config key {key!r} has unsupported type "
                      f"{target_type.__name__}")


def apply_overrides(cfg, overrides: dict):
    """New dataclass instance with dotted-key overrides applied.

    Keys name fields of `cfg`; a dotted key like ``registration.huber_gamma``
    descends into a nested dataclass field. Unknown keys raise ConfigError.
    """
    grouped: dict = {}
    updates = {}
    fields = {f.name: f for f in dataclasses.fields(cfg)}
    for key, value in overrides.items():
        head, _, rest = key.partition(".")
        if head not in fields:
            raise ConfigError(f"unknown config key {key!r} for "
                              f"{type(cfg).__name__}")
        if rest:
            grouped.setdefault(head, {})[rest] = value
        else:
            ftype = fields[head].type
            target = ftype if isinstance(ftype, type) else _resolve(cfg, head)
            updates[head] = _coerce(value, target, key)
    for head, sub in grouped.items():
        nested = getattr(cfg, head)
        if not dataclasses.is_dataclass(nested):
            raise ConfigError(f"config key {head!r} is not a section")
        updates[head] = apply_overrides(nested, sub)
    return dataclasses.replace(cfg, **updates)


def _resolve(cfg, name: str) -> type:
    return type(getattr(cfg, name))


def describe(cfg, prefix: str = "") -> str:
    """Flat `key=value` rendering of a (nested) config dataclass."""
    lines = []
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if dataclasses.is_dataclass(val):
            lines.append(describe(val, prefix=f"{prefix}{f.name}."))
        else:
            lines.append(f"{prefix}{f.name}={val}")
    return " ".join(lines)
