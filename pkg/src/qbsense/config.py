"""Configuration management for qbsense.

Settings are resolved per command with the precedence
CLI flags > run file table > ``[tool.qbsense]`` > built-in defaults.
"""

import logging
import sys
from collections.abc import Mapping
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .exceptions import ConfigError
from .models import Config

logger = logging.getLogger(__name__)

RUN_FILE_TABLES = ("charge", "qfi", "squeeze", "spin-scaling", "protocol", "sweep")
OUTPUT_FORMATS = ("csv", "json")


def get_default_config() -> Config:
    """Get default configuration.

    Returns:
        Config instance with default values
    """
    return Config()


def find_pyproject(start: Path | None = None) -> Path | None:
    """Nearest ``pyproject.toml`` in ``start`` (default: CWD) or its parents."""
    current_dir = start or Path.cwd()
    for path in [current_dir, *current_dir.parents]:
        candidate = path / "pyproject.toml"
        if candidate.exists():
            return candidate
    return None


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with path.open("rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML syntax in {path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Failed to read {path}: {e}") from e


def load_config() -> Config:
    """Load configuration from pyproject.toml.

    Looks for a [tool.qbsense] section in pyproject.toml in the current
    directory or parent directories.

    Returns:
        Config instance with loaded or default values

    Raises:
        ConfigError: If configuration file is invalid
    """
    config = get_default_config()
    pyproject_path = find_pyproject()
    if not pyproject_path:
        return config

    tool_config = _read_toml(pyproject_path).get("tool", {}).get("qbsense", {})
    if not tool_config:
        return config

    try:
        if "output_format" in tool_config:
            config.output_format = _output_format(tool_config["output_format"])
        if "output_dir" in tool_config:
            config.output_dir = str(tool_config["output_dir"])
        if "workers" in tool_config:
            config.workers = _positive_int("workers", tool_config["workers"])
        if "seed" in tool_config:
            config.seed = int(tool_config["seed"])
        if "strict_leakage" in tool_config:
            config.strict_leakage = bool(tool_config["strict_leakage"])

        # Handle squeeze subsection
        squeeze_config = tool_config.get("squeeze", {})
        if "grid_size" in squeeze_config:
            config.squeeze_grid_size = _positive_int("grid_size", squeeze_config["grid_size"])
        if "rescan_every" in squeeze_config:
            config.squeeze_rescan_every = _positive_int(
                "rescan_every", squeeze_config["rescan_every"]
            )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Failed to load configuration: {e}") from e

    logger.debug("Loaded [tool.qbsense] from %s", pyproject_path)
    return config


def _output_format(value: Any) -> Any:
    if value not in OUTPUT_FORMATS:
        raise ConfigError(f"output_format must be one of {OUTPUT_FORMATS}, got {value!r}")
    return value


def _positive_int(name: str, value: Any) -> int:
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def load_run_file(path: Path) -> dict[str, dict[str, Any]]:
    """Read a run file with one table per command.

    Raises:
        ConfigError: If the file is unreadable or has unknown tables
    """
    if not path.exists():
        raise ConfigError(f"Run file does not exist: {path}")
    data = _read_toml(path)
    unknown = sorted(set(data) - set(RUN_FILE_TABLES))
    if unknown:
        raise ConfigError(f"Unknown tables in {path}: {', '.join(unknown)}")
    for name, table in data.items():
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] in {path} must be a table")
    return data


def normalize_key(key: str) -> str:
    """Option names may use dashes; settings use underscores."""
    return key.replace("-", "_")


def coerce_value(name: str, value: Any, default: Any) -> Any:
    """Convert a configured value to the type of its default.

    Raises:
        ConfigError: If the value cannot represent the expected type
    """
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        return str(value)
    return value


def resolve_settings(
    defaults: Mapping[str, Any],
    run_table: Mapping[str, Any] | None = None,
    cli_values: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Merge defaults, a run file table and explicitly given CLI values.

    ``None`` in ``cli_values`` means the flag was not given.

    Raises:
        ConfigError: If the run table has unknown or wrongly typed keys
    """
    settings = dict(defaults)
    for key, value in (run_table or {}).items():
        name = normalize_key(key)
        if name not in defaults:
            raise ConfigError(f"Unknown setting '{key}'; expected one of {sorted(defaults)}")
        settings[name] = coerce_value(name, value, defaults[name])
    for key, value in (cli_values or {}).items():
        if value is not None:
            settings[normalize_key(key)] = value
    return settings
