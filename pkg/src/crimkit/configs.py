"""JSON config validation against the published schema files.

Every config surface is strict: unknown keys are errors.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema


class ConfigError(ValueError):
    pass


_cache: dict = {}


def load_schema(name: str) -> dict:
    if name not in _cache:
        ref = resources.files("crimkit") / "schemas" / f"{name}.schema.json"
        try:
            _cache[name] = json.loads(ref.read_text())
        except FileNotFoundError:
            raise ConfigError(f"no schema named {name!r}") from None
    return _cache[name]


def validate_config(obj, name: str) -> None:
    try:
        jsonschema.validate(obj, load_schema(name))
    except jsonschema.ValidationError as e:
        raise ConfigError(f"{name} config invalid: {e.message}") from None


def load_json_config(path, name: str) -> dict:
    try:
        with open(path) as f:
            obj = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    validate_config(obj, name)
    return obj
