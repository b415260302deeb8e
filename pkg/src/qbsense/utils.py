"""Utility functions for qbsense."""

import logging
from datetime import datetime
from datetime import timezone as _timezone

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from .exceptions import ConfigError

UTC = _timezone.utc

# Binary units: 1 KiB = 1024 bytes, 1 MiB = 1024 KiB
BYTES_PER_KIB = 1024
BYTES_PER_MIB = 1024 * 1024

LOG_FORMAT = "%(name)s: %(message)s"


def get_timestamp() -> str:
    """Get current UTC timestamp in ISO format.

    Returns:
        ISO format timestamp string
    """
    return datetime.now(UTC).isoformat(timespec="seconds")


def format_file_size(size_bytes: int) -> str:
    """Format file size in human-readable format.

    Args:
        size_bytes: Size in bytes

    Returns:
        Formatted size string (e.g., "42 bytes", "1.5 KiB")
    """
    if size_bytes < BYTES_PER_KIB:
        return f"{size_bytes} bytes"
    if size_bytes < BYTES_PER_MIB:
        return f"{size_bytes / BYTES_PER_KIB:.1f} KiB"
    return f"{size_bytes / BYTES_PER_MIB:.1f} MiB"


def configure_logging(verbose: bool = False) -> None:
    """Route library logging through a rich handler on stderr.

    Args:
        verbose: Log at DEBUG instead of WARNING
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format=LOG_FORMAT,
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def parse_complex(value: str | complex | float) -> complex:
    """Parse a complex amplitude such as ``-4j``, ``2`` or ``1+2j``.

    Raises:
        ConfigError: If the value is not a complex literal
    """
    if isinstance(value, (int, float, complex)) and not isinstance(value, bool):
        return complex(value)
    try:
        return complex(str(value).replace(" ", "").replace("i", "j"))
    except ValueError as e:
        raise ConfigError(f"Not a complex number: {value!r}") from e


def format_complex(value: complex) -> str:
    """Compact text form of a complex number that :func:`parse_complex` reads back."""
    return repr(complex(value)).strip("()")


def format_float(value: float) -> str:
    """Shortest text that keeps a double exact (17 significant digits)."""
    return format(value, ".17g")


def log_spaced_sizes(low: int, high: int, count: int) -> list[int]:
    """Distinct integers spread evenly on a log axis between ``low`` and ``high``.

    Raises:
        ConfigError: If the range is empty or ``count < 2``
    """
    if low < 1 or high <= low or count < 2:  # noqa: PLR2004
        raise ConfigError(f"Invalid size range {low}..{high} with {count} points")
    sizes = np.unique(np.rint(np.geomspace(low, high, count)).astype(np.int64))
    return [int(s) for s in sizes]
