"""Flat ``key = value`` experiment files.

Blank lines and ``#`` comments are ignored. Values are kept as strings;
callers convert them against the dataclass they configure.
"""

from __future__ import annotations

import dataclasses
from typing import Any

from .errors import ConfigError, ParseError


def parse_config(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError("expected 'key = value'", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        values[key] = value.strip()
    return values


def read_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(values: dict[str, Any]) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in values.items())


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def coerce(cls, values: dict[str, str]) -> dict[str, Any]:
    """Convert string values to the field types of dataclass ``cls``.

    Unknown keys are an error.
    """
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    out: dict[str, Any] = {}
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
        kind = str(fields[key])
        try:
            if raw.lower() == "none" and "None" in kind:
                out[key] = None
            elif kind.startswith("tuple[float"):
                out[key] = tuple(float(x) for x in raw.split(","))
            elif kind.startswith("tuple[int"):
                out[key] = tuple(int(x) for x in raw.split(","))
            elif kind.startswith("bool"):
                out[key] = parse_bool(raw)
            elif kind.startswith("int"):
                out[key] = int(raw)
            elif kind.startswith("float"):
                out[key] = float(raw)
            else:
                out[key] = raw
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return out
