"""Experiment configuration files.

Configs are YAML documents: nested mappings (blocks) and lists, one key
per line. ``--set key=value`` overrides use dotted paths, with integer
segments indexing into lists (``composition.layers.0.beta=0.5``); the
value is parsed as a YAML scalar or flow collection. Overrides are applied
before hashing, and the hash is the sha256 of the canonical JSON of the
resolved config with ``output_dir`` removed, so the same experiment writes
the same bytes wherever it is run.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable

import yaml

from .errors import ConfigError

SEED_KEY = "master_seed"
OUTPUT_KEY = "output_dir"
UNHASHED_KEYS = (OUTPUT_KEY,)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else source
        raise ConfigError(where, f"not valid YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping of blocks")
    return data


def load_config(path: str | Path, overrides: Iterable[str] = ()) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return apply_overrides(parse_config_text(text, str(path)), overrides)


def apply_overrides(config: dict, overrides: Iterable[str]) -> dict:
    config = copy.deepcopy(config)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(item, "override must look like key=value")
        try:
            value = yaml.safe_load(raw) if raw.strip() else ""
        except yaml.YAMLError:
            raise ConfigError(key, f"cannot parse value {raw!r}") from None
        set_path(config, key, value)
    return config


def set_path(config: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node: Any = config
    for depth, part in enumerate(parts[:-1]):
        node = _step(node, part, dotted, create=True)
    last = parts[-1]
    if isinstance(node, list):
        index = _index(last, node, dotted)
        node[index] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(dotted, "cannot set a key inside a scalar")


def _index(part: str, node: list, dotted: str) -> int:
    try:
        index = int(part)
    except ValueError:
        raise ConfigError(dotted, f"{part!r} is not a list index") from None
    if not -len(node) <= index < len(node):
        raise ConfigError(dotted, f"index {index} out of range for a list of {len(node)}")
    return index


def _step(node: Any, part: str, dotted: str, create: bool) -> Any:
    if isinstance(node, list):
        return node[_index(part, node, dotted)]
    if isinstance(node, dict):
        if part not in node:
            if not create:
                raise ConfigError(dotted, "missing")
            node[part] = {}
        return node[part]
    raise ConfigError(dotted, "cannot descend into a scalar")


def _canonical(value: Any) -> Any:
    if isinstance(value, float):
        if not math.isfinite(value):
            return repr(value)  # JSON has no infinities
        return value
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def canonical_json(config: dict) -> str:
    hashed = {k: v for k, v in config.items() if k not in UNHASHED_KEYS}
    return json.dumps(_canonical(hashed), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def dump_config(config: dict) -> str:
    return yaml.safe_dump(_canonical(config), sort_keys=True, default_flow_style=None)


# --- typed accessors ----------------------------------------------------------


def block(config: dict, key: str, required: bool = True) -> dict:
    value = config.get(key)
    if value is None:
        if required:
            raise ConfigError(key, "missing")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(key, "expected a block (mapping)")
    return value


def get_int(config: dict, key: str, default: int | None = None, minimum: int | None = None, where: str = "") -> int:
    name = f"{where}.{key}" if where else key
    if key not in config:
        if default is None:
            raise ConfigError(name, "missing")
        return default
    value = config[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be at least {minimum}")
    return value


def get_float(config: dict, key: str, default: float | None = None, where: str = "") -> float:
    name = f"{where}.{key}" if where else key
    if key not in config:
        if default is None:
            raise ConfigError(name, "missing")
        return default
    value = config[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    return float(value)


def get_int_list(config: dict, key: str, where: str = "", default: list | None = None) -> tuple[int, ...]:
    name = f"{where}.{key}" if where else key
    if key not in config:
        if default is None:
            raise ConfigError(name, "missing")
        return tuple(default)
    value = config[key]
    if not isinstance(value, list) or not value:
        raise ConfigError(name, "expected a non-empty list")
    if any(isinstance(v, bool) or not isinstance(v, int) for v in value):
        raise ConfigError(name, "expected integers")
    return tuple(value)


def master_seed(config: dict) -> int:
    seed = get_int(config, SEED_KEY, default=0)
    if not 0 <= seed < 1 << 64:
        raise ConfigError(SEED_KEY, "must be a 64-bit unsigned integer")
    return seed


def check_keys(config: dict, allowed: Iterable[str], where: str = "") -> None:
    allowed = set(allowed)
    for key in config:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else str(key), "unknown key")
