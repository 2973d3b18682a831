"""Run-configuration files: JSON documents mirroring the CLI flags.

A config file supplies defaults for a subcommand; flags given explicitly on
the command line win. Files are schema-validated (known keys, right types)
before any run starts.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import SchemaError

# key -> (expected type, commands it applies to)
_COMMON = ("eval-interactive", "eval-traditional", "train-rl")
SCHEMA: dict[str, tuple[type, tuple[str, ...]]] = {
    "corpus": (str, _COMMON),
    "seed": (int, _COMMON),
    "workers": (int, ("eval-interactive", "eval-traditional")),
    "out": (str, ("eval-interactive", "eval-traditional")),
    "save_sessions": (str, ("eval-interactive", "eval-traditional")),
    "lm": (str, _COMMON),
    "classifier": (str, _COMMON),
    "timeout": (float, ("eval-interactive", "eval-traditional")),
    "simulator": (str, ("eval-interactive",)),
    "system": (str, ("eval-interactive", "eval-traditional")),
    "goals": (int, ("eval-interactive",)),
    "max_turns": (int, ("eval-interactive", "train-rl")),
    "k": (int, ("eval-interactive",)),
    "epochs": (int, ("train-rl",)),
    "episodes_per_phase": (int, ("train-rl",)),
    "goals_per_epoch": (int, ("train-rl",)),
    "sample_pool": (int, ("train-rl",)),
    "lr": (float, ("train-rl",)),
    "gamma": (float, ("train-rl",)),
    "alpha": (float, ("train-rl",)),
    "beta": (float, ("train-rl",)),
    "sent_floor": (float, ("train-rl",)),
    "init_simulator": (str, ("train-rl",)),
    "init_system": (str, ("train-rl",)),
    "out_simulator": (str, ("train-rl",)),
    "out_system": (str, ("train-rl",)),
    "log": (str, ("train-rl",)),
}


def load_run_config(path: str | Path, command: str) -> dict:
    """Load and validate a config file for one subcommand."""
    source = str(path)
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError("config file not found", source=source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", source=source)
    if not isinstance(obj, dict):
        raise SchemaError("config must be a JSON object", source=source)
    out = {}
    for key, value in obj.items():
        dest = key.replace("-", "_")
        spec = SCHEMA.get(dest)
        if spec is None:
            raise SchemaError(f"unknown config key {key!r}", source=source, path=key)
        expected, commands = spec
        if command not in commands:
            raise SchemaError(f"key {key!r} does not apply to {command}",
                              source=source, path=key)
        if expected is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, expected):
            raise SchemaError(
                f"key {key!r} must be {expected.__name__}, got {type(value).__name__}",
                source=source, path=key)
        out[dest] = value
    return out
