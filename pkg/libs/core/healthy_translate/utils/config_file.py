"""
Run config files.

Config files are YAML mappings. Keys may be nested or flat dotted keys (`weights.lambda_rec: 1.0`);
both forms are flattened, merged with `key=value` command line overrides (overrides win), and
unflattened again before the command's pydantic model validates them. Resolved configs are written
back as flat, sorted, dotted-key YAML so a run can be repeated from its snapshot alone.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Type, TypeVar

import yaml
from pydantic import BaseModel

M = TypeVar("M", bound=BaseModel)


def flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if not isinstance(key, str) or key == "":
            raise ValueError(f"Config keys must be non-empty strings, got {key!r}")
        full_key = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict) and value:
            nested = flatten(value, full_key)
        else:
            nested = {full_key: value}
        for nested_key, nested_value in nested.items():
            if nested_key in flat:
                raise ValueError(f"Config key '{nested_key}' is set more than once")
            flat[nested_key] = nested_value
    return flat


def unflatten(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key in sorted(flat.keys()):
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ValueError(
                    f"Config key '{key}' conflicts with the value already set for '{part}'"
                )
            node = child
        if parts[-1] in node and isinstance(node[parts[-1]], dict):
            raise ValueError(f"Config key '{key}' conflicts with its own sub-keys")
        node[parts[-1]] = flat[key]
    return nested


def parse_overrides(tokens: List[str]) -> Dict[str, Any]:
    """Parse `key=value` tokens. Values are YAML scalars, so `seed=5` is an int."""
    overrides: Dict[str, Any] = {}
    for token in tokens:
        key, sep, raw_value = token.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(
                f"Invalid override '{token}': expected key=value, for example seed=5"
            )
        overrides[key] = yaml.safe_load(raw_value) if raw_value.strip() else ""
    return overrides


def load_config_file(path: Path | str) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r") as f:
        data = yaml.safe_load(f.read())
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(
            f"Config file {path} must contain a mapping of keys to values, got {type(data).__name__}"
        )
    return flatten(data)


def resolve_config(
    model_type: Type[M],
    config_path: Path | str | None = None,
    overrides: List[str] | None = None,
) -> M:
    """Merge a config file with overrides and validate with `model_type`.

    Raises:
        FileNotFoundError: config file missing
        ValueError: malformed file or override (pydantic.ValidationError is a ValueError)
    """
    flat = load_config_file(config_path) if config_path is not None else {}
    flat.update(parse_overrides(overrides or []))
    return model_type.model_validate(unflatten(flat))


def snapshot_dict(model: BaseModel) -> Dict[str, Any]:
    return dict(sorted(flatten(model.model_dump(mode="json")).items()))


def write_snapshot(model: BaseModel, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(snapshot_dict(model), f, sort_keys=True, default_flow_style=False)
    return path


def config_hash(model: BaseModel) -> str:
    canonical = json.dumps(
        model.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:8]
