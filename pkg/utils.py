"""YAML I/O, manifest hashing and the shared log-and-raise helper."""
from typing import Callable, Type, Optional, Any, Dict, Union
import hashlib
import json
import os
import pathlib
import logging

import yaml

import errors


logger = logging.getLogger(__name__)


def get_config(
    path: Union[pathlib.Path, os.PathLike, str], logger: logging.Logger
) -> Dict[str, Any]:
    """Builds a dictionary from the YAML file at `path`."""
    if not pathlib.Path(path).exists():
        log_and_raise(logger.error, f"Path {str(path)} does not exist.", ValueError, errors.UT_PATH_DOES_NOT_EXIST)

    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def write_yaml(path: Union[pathlib.Path, os.PathLike, str], document: Dict[str, Any]) -> None:
    """Writes `document` as block-style YAML to `path`."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(document, fh, sort_keys=False, default_flow_style=None)


def config_hash(document: Dict[str, Any]) -> str:
    """A stable sha256 over a JSON rendering of `document`."""
    encoded = json.dumps(document, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(encoded).hexdigest()


def log_and_raise(logger_func: Callable, error_message: str, exception: Union[Type[BaseException], BaseException],
                  error_key: Optional[str] = None) -> None:
    """Logs `error_message` through `logger_func`, then raises `exception`.

    Every expected failure goes through here so tests can patch one function and check
    which `errors` key fired.

    Args:
        logger_func: Bound logging method of the caller, usually `logger.error`.
        error_message: Human-readable description.
        exception: Exception class or instance to raise.
        error_key: Key from errors.py, prepended to the logged message.
    """
    if error_key is not None:
        error_message = f"{error_key}: {error_message}"
    logger_func(error_message)
    raise exception
