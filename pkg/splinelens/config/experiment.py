"""Per-run experiment configuration.

Every command starts from fully specified defaults. An optional TOML file
(with ``include = [...]`` support) is merged on top, then ``--set
section.key=value`` overrides, then direct flags. The result is echoed as
``config.resolved`` into the output directory; passing that file back through
``--config`` reproduces the run.
"""

import copy
import logging
import os
import tomllib
from collections.abc import Iterable, Mapping
from dataclasses import fields
from pathlib import Path
from typing import Any

import tomli_w

from ..core.checks import VerifySettings
from ..core.concentration import DEFAULT_EPSILONS
from .manager import (
    FALLBACK_OUTPUT_ROOT,
    OUTPUT_ROOT_ENV,
    Config,
    ConfigError,
)

logger = logging.getLogger(__name__)

COMMANDS = ("partition", "verify", "concentration", "jitter", "train", "stats")
RESOLVED_NAME = "config.resolved"

COMMON_DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {
        "seed": 0,
        "threads": 1,
        "out": "",
        "eps_bn": 0.0,
        "region_budget": 1_000_000,
    },
    "network": {
        "file": "",
        "depth": 4,
        "width": 6,
        "input_dim": 2,
        "output_dim": 1,
        "activation": "leaky",
        "alpha": 0.1,
    },
    "dataset": {"kind": "star", "file": "", "n": 50, "noise": 0.1, "seed": 0},
    "geometry": {"box": [-3.0, 3.0, -3.0, 3.0]},
}


def _verify_defaults() -> dict[str, Any]:
    values = {}
    for f in fields(VerifySettings):
        if f.name in ("seed", "threads"):
            continue
        values[f.name] = list(f.default) if isinstance(f.default, tuple) else f.default
    return values


COMMAND_DEFAULTS: dict[str, dict[str, dict[str, Any]]] = {
    "partition": {
        "partition": {
            "layers": [],
            "variants": ["no_bn", "bn"],
            "no_bn_init": "random_bias",
            "csv": True,
        },
    },
    "verify": {"verify": _verify_defaults()},
    "concentration": {
        "network": {"depth": 11, "width": 64},
        "concentration": {
            "resolution": 256,
            "epsilon": 0.05,
            "epsilons": [float(eps) for eps in DEFAULT_EPSILONS],
            "layers": [],
            "modes": ["bn_warmup", "random_bias", "zero_bias"],
            "seeds": 1,
            "matched_gaussian": True,
        },
    },
    "jitter": {
        "network": {"depth": 3, "width": 16},
        "dataset": {"kind": "clusters", "n": 512, "noise": 0.3},
        "jitter": {
            "batch_sizes": [16, 256],
            "draws": 20,
            "report_draws": 200,
            "virtual_size": 0,
            "train_epochs": 0,
            "learning_rate": 0.05,
        },
    },
    "train": {
        "network": {"depth": 3, "width": 16},
        "dataset": {"kind": "rings", "n": 200},
        "train": {
            "init": "bn_warmup",
            "learning_rate": 0.05,
            "epochs": 20,
            "batch_size": 32,
            "loss": "softmax_cross_entropy",
            "bn_frozen": True,
            "snapshot_every": 0,
            "holdout_n": 0,
            "compare": False,
            "compare_seeds": 10,
            "learning_rates": [0.01, 0.05, 0.2],
            "compare_modes": ["bn_warmup", "zero_bias"],
        },
    },
    "stats": {
        "dataset": {"kind": "gaussian", "n": 1000},
        "stats": {"batch_sizes": [16, 64, 256]},
    },
}


def defaults_for(
    command: str, settings: Config | None = None
) -> dict[str, dict[str, Any]]:
    """Fully specified defaults of ``command``; compute keys come from ``settings``."""
    if command not in COMMAND_DEFAULTS:
        raise ConfigError(f"Unknown command '{command}'; expected one of {COMMANDS}")
    values = copy.deepcopy(COMMON_DEFAULTS)
    for section, keys in COMMAND_DEFAULTS[command].items():
        values.setdefault(section, {}).update(copy.deepcopy(keys))
    if settings is not None:
        values["run"]["threads"] = settings.threads
        values["run"]["eps_bn"] = settings.eps_bn
        values["run"]["region_budget"] = settings.region_budget
    return values


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Failed to load experiment config {path}: {e}") from e


def _load_with_includes(path: Path, stack: tuple[Path, ...] = ()) -> dict[str, Any]:
    """Read ``path`` with its includes applied first, in listed order."""
    path = path.resolve()
    if path in stack:
        chain = " -> ".join(str(p) for p in (*stack, path))
        raise ConfigError(f"Include cycle: {chain}")
    data = _read_toml(path)
    includes = data.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    merged: dict[str, Any] = {}
    for include in includes:
        _merge(merged, _load_with_includes(path.parent / include, (*stack, path)))
    _merge(merged, data)
    return merged


def _merge(target: dict[str, Any], source: Mapping[str, Any]) -> None:
    for key, value in source.items():
        if isinstance(value, Mapping) and isinstance(target.get(key), dict):
            _merge(target[key], value)
        elif isinstance(value, Mapping):
            target[key] = dict(value)
        else:
            target[key] = value


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    """Match an incoming value to the type of its default."""
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    return value


def _apply(
    values: dict[str, dict[str, Any]], incoming: Mapping[str, Any], origin: str
) -> None:
    for section, keys in incoming.items():
        if section not in values:
            raise ConfigError(f"Unknown section [{section}] in {origin}")
        if not isinstance(keys, Mapping):
            raise ConfigError(f"[{section}] in {origin} must be a table")
        for key, value in keys.items():
            if key not in values[section]:
                raise ConfigError(f"Unknown key {section}.{key} in {origin}")
            values[section][key] = _coerce(section, key, value, values[section][key])


def parse_override(text: str) -> tuple[str, str, Any]:
    """Split ``section.key=value``; the value is read as a TOML value when it parses."""
    name, sep, raw = text.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"Override must look like section.key=value, got '{text}'")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return section, key, value


class ExperimentConfig:
    """Resolved configuration of one command run."""

    def __init__(
        self,
        command: str,
        values: dict[str, dict[str, Any]],
        output_root: Path | None = None,
    ):
        self.command = command
        self.values = values
        self._output_root = output_root

    @classmethod
    def resolve(
        cls,
        command: str,
        config_file: Path | None = None,
        overrides: Iterable[str] = (),
        flags: Mapping[str, Any] | None = None,
        settings: Config | None = None,
    ) -> "ExperimentConfig":
        """Defaults, then the file (includes first), then overrides, then flags.

        Raises:
            ConfigError: On unreadable files, include cycles, unknown keys or
                values of the wrong type.
        """
        values = defaults_for(command, settings)
        if config_file is not None:
            data = _load_with_includes(Path(config_file))
            stated = data.pop("command", command)
            if stated != command:
                raise ConfigError(
                    f"{config_file} was resolved for '{stated}', not '{command}'"
                )
            _apply(values, data, str(config_file))
        for text in overrides:
            section, key, value = parse_override(text)
            _apply(values, {section: {key: value}}, "--set")
        for name, value in (flags or {}).items():
            if value is None:
                continue
            section, _, key = name.partition(".")
            _apply(values, {section: {key: value}}, "command-line flags")
        output_root = settings.output_root if settings is not None else None
        return cls(command, values, output_root)

    def get(self, section: str, key: str) -> Any:
        try:
            return self.values[section][key]
        except KeyError as e:
            raise ConfigError(f"No setting {section}.{key}") from e

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.values.get(name, {}))

    @property
    def seed(self) -> int:
        return int(self.values["run"]["seed"])

    @property
    def threads(self) -> int:
        return int(self.values["run"]["threads"])

    def output_dir(self) -> Path:
        """``run.out`` if set, else ``<output root>/<command>``."""
        out = self.values["run"]["out"]
        if out:
            return Path(out)
        root = self._output_root
        if root is None:
            root = Path(os.environ.get(OUTPUT_ROOT_ENV) or FALLBACK_OUTPUT_ROOT)
        return root / self.command

    def to_toml(self) -> str:
        return tomli_w.dumps({"command": self.command, **self.values})

    def write_resolved(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_NAME
        path.write_text(self.to_toml(), encoding="utf-8")
        logger.debug("Wrote %s", path)
        return path
