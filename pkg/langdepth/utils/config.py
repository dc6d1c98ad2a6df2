"""
This module contains the Config class: shipped defaults, a YAML or JSON file
merged over them and dotted command-line overrides, plus the helpers that
turn a section into its typed dataclass.
"""

import copy
import dataclasses
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

import yaml

from .errors import ConfigurationError
from .logger import logging as log

DEFAULTS_PATH = Path(__file__).parent.parent / "data" / "defaults.yml"

T = TypeVar("T")


def _deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> None:
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)


class Config:
    """
    This class is used to load and get configuration data.

    The shipped defaults are always loaded first; the file at
    ``config_path`` (YAML or JSON) is merged on top of them.
    """

    def __init__(self, config_path: Optional[str] = None) -> None:
        self.config: Optional[Dict[str, Any]] = None
        self.config_path = config_path

    def load(self) -> None:
        """
        This method loads the configuration data from the specified path.
        """
        with open(DEFAULTS_PATH, "r", encoding="utf-8") as f:
            config = yaml.safe_load(f)
        if self.config_path is not None:
            try:
                with open(self.config_path, "r", encoding="utf-8") as f:
                    loaded = yaml.safe_load(f) or {}
            except FileNotFoundError as exc:
                raise ConfigurationError(
                    f"Config file not found: {self.config_path}"
                ) from exc
            except yaml.YAMLError as exc:
                raise ConfigurationError(
                    f"Config file is not valid YAML/JSON: {exc}"
                ) from exc
            if not isinstance(loaded, Mapping):
                raise ConfigurationError(
                    f"Config file must hold a mapping: {self.config_path}"
                )
            unknown = set(loaded) - set(config)
            if unknown:
                raise ConfigurationError(
                    f"Unknown config sections: {sorted(unknown)}"
                )
            _deep_merge(config, loaded)
            log.debug("[config] Loaded %s", self.config_path)
        self.config = config

    def get_config_of(self, key: str) -> Mapping[str, Any]:
        """
        This method retrieves the configuration data for the given key.
        """
        if self.config is None:
            self.load()
        assert self.config is not None
        if key not in self.config:
            raise ConfigurationError(f"Unknown config section: {key}")
        return self.config[key]

    def set(self, dotted_key: str, raw_value: str) -> None:
        """
        Override one configuration value.

        Args:
            dotted_key: Key path such as ``train.lr0``.
            raw_value: Value as typed on the command line; parsed as YAML
                so numbers, lists and booleans keep their types.
        """
        if self.config is None:
            self.load()
        assert self.config is not None
        parts = dotted_key.split(".")
        node: Any = self.config
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigurationError(f"Unknown config key: {dotted_key}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigurationError(f"Unknown config key: {dotted_key}")
        try:
            node[parts[-1]] = yaml.safe_load(raw_value)
        except yaml.YAMLError as exc:
            raise ConfigurationError(
                f"Cannot parse value for {dotted_key}: {raw_value!r}"
            ) from exc

    def as_dict(self) -> Dict[str, Any]:
        """Return a deep copy of the merged configuration."""
        if self.config is None:
            self.load()
        return copy.deepcopy(self.config)  # type: ignore[arg-type]


def section_from_mapping(cls: Type[T], mapping: Mapping[str, Any]) -> T:
    """
    Build a config dataclass from a mapping, rejecting unknown keys.

    List values are converted to tuples so the frozen dataclasses stay
    hashable.

    Args:
        cls: The dataclass type.
        mapping: Raw values, usually one config section.

    Returns:
        The dataclass instance (its ``__post_init__`` validates).
    """
    names = {f.name for f in dataclasses.fields(cls)}  # type: ignore
    unknown = set(mapping) - names
    if unknown:
        raise ConfigurationError(
            f"Unknown keys for {cls.__name__}: {sorted(unknown)}"
        )
    values = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in mapping.items()
    }
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"{cls.__name__}: {exc}") from exc


def worker_count(config: Optional[Config] = None) -> int:
    """
    Resolve the parallel worker count.

    ``LANGDEPTH_WORKERS`` takes precedence over ``runtime.workers``.
    """
    raw = os.environ.get("LANGDEPTH_WORKERS")
    if raw is None:
        if config is None:
            return 1
        raw = str(config.get_config_of("runtime").get("workers", 1))
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"Invalid worker count: {raw!r}") from exc
    if count < 1:
        raise ConfigurationError(f"Worker count must be >= 1: {count}")
    return count
