"""Settings loader.

Defaults ship in ``settings.yaml`` next to this module. A user file given by
``--config`` or the ``LIPGRAPH_SETTINGS`` environment variable is deep-merged
over them.
"""

import copy
import functools
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = Path(__file__).with_name("settings.yaml")
ENV_VAR = "LIPGRAPH_SETTINGS"

_active_path: Optional[str] = None


def load_settings(settings_path: Union[str, Path]) -> dict:
    try:
        with open(settings_path, "r", encoding="utf-8") as file:
            loaded = yaml.safe_load(file)
    except Exception as e:
        logger.error("Failed to load settings: %s", e)
        raise
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ParameterError(f"settings file {settings_path} must contain a mapping")
    return loaded


def merge_settings(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_settings(merged[key], value)
        else:
            merged[key] = value
    return merged


@functools.lru_cache(maxsize=None)
def _cached(user_path: Optional[str]) -> Dict[str, Any]:
    settings = load_settings(DEFAULT_SETTINGS_PATH)
    if user_path:
        logger.info("Merging user settings from %s", user_path)
        settings = merge_settings(settings, load_settings(user_path))
    return settings


def use_settings_file(path: Optional[Union[str, Path]]) -> None:
    """Make a user settings file the process-wide override (CLI --config)."""
    global _active_path  # pylint: disable=global-statement
    _active_path = str(path) if path else None


def get_settings(user_path: Optional[str] = None) -> Dict[str, Any]:
    """Merged settings. Do not mutate the returned dict."""
    return _cached(user_path or _active_path or os.environ.get(ENV_VAR) or None)


def setting(section: str, key: str, user_path: Optional[str] = None) -> Any:
    try:
        return get_settings(user_path)[section][key]
    except KeyError:
        raise ParameterError(f"missing setting {section}.{key}") from None
