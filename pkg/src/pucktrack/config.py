"""``key = value`` config files.

Values are parsed as Python literals when possible (numbers, tuples, lists,
booleans), otherwise kept as strings.  ``#`` starts a comment.
"""

from __future__ import annotations

import ast
import dataclasses
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


def parse_value(text: str) -> Any:
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_key_values(path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        values[key.strip()] = parse_value(val)
    return values


def format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return repr(tuple(format_plain(v) for v in value))
    return repr(format_plain(value))


def format_plain(value: Any) -> Any:
    if dataclasses.is_dataclass(value):
        return tuple(dataclasses.astuple(value))
    if isinstance(value, (list, tuple)):
        return tuple(format_plain(v) for v in value)
    return value


def write_key_values(values: dict[str, Any], path) -> None:
    lines = [f"{k} = {format_value(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def dataclass_from_values(cls, values: dict[str, Any], ignore_unknown: bool = False):
    """Build dataclass ``cls`` from ``values``, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown and not ignore_unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: v for k, v in values.items() if k in names})
