"""Result file emission for qbsense.

CSV files start with ``# key = <json>`` metadata lines (sorted, ``created_at`` last),
followed by a header row and one row per record. JSON files hold
``{"metadata": ..., "records": [...]}`` with sorted keys.
"""

import csv
import io
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import platformdirs

from .exceptions import OutputError
from .models import ManifestEntry, OutputFormat
from .utils import format_complex, format_float

MANIFEST_NAME = "manifest.json"
TIMESTAMP_KEY = "created_at"


def default_output_dir() -> Path:
    """Per-user run directory."""
    return Path(platformdirs.user_data_dir("qbsense", "qbsense")) / "runs"


def default_output_path(command: str, fmt: OutputFormat, output_dir: str | None = None) -> Path:
    """``<output_dir>/<command>.<fmt>``, falling back to the user data dir."""
    directory = Path(output_dir) if output_dir else default_output_dir()
    return directory / f"{command}.{fmt}"


def to_plain(value: Any) -> Any:
    """Convert numpy and complex values to JSON-compatible Python objects."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, complex):
        return format_complex(value)
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value


def format_cell(value: Any) -> str:
    """Text of one CSV cell; floats keep 17 significant digits."""
    value = to_plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value) if math.isfinite(value) else str(value)
    return str(value)


def columns_of(records: Sequence[dict[str, Any]]) -> list[str]:
    """Column names in first-seen order."""
    names: dict[str, None] = {}
    for record in records:
        names.update(dict.fromkeys(record))
    return list(names)


def render_csv(records: Sequence[dict[str, Any]], metadata: dict[str, Any]) -> str:
    """CSV text with metadata comment lines."""
    buffer = io.StringIO()
    ordered = sorted(k for k in metadata if k != TIMESTAMP_KEY)
    if TIMESTAMP_KEY in metadata:
        ordered.append(TIMESTAMP_KEY)
    for key in ordered:
        buffer.write(f"# {key} = {json.dumps(to_plain(metadata[key]), sort_keys=True)}\n")
    columns = columns_of(records)
    writer = csv.writer(buffer, lineterminator="\n")
    if columns:
        writer.writerow(columns)
    for record in records:
        writer.writerow([format_cell(record.get(name)) for name in columns])
    return buffer.getvalue()


def render_json(records: Sequence[dict[str, Any]], metadata: dict[str, Any]) -> str:
    """JSON text with sorted keys."""
    document = {"metadata": to_plain(metadata), "records": to_plain(list(records))}
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_table(
    path: Path,
    records: Sequence[dict[str, Any]],
    metadata: dict[str, Any],
    fmt: OutputFormat = "csv",
) -> int:
    """Write one result file, creating parent directories.

    Args:
        path: Target file
        records: Table rows
        metadata: Run metadata embedded in the file
        fmt: ``csv`` or ``json``

    Returns:
        Number of bytes written

    Raises:
        OutputError: If the format is unknown or writing fails
    """
    if fmt == "csv":
        text = render_csv(records, metadata)
    elif fmt == "json":
        text = render_json(records, metadata)
    else:
        raise OutputError(f"Unknown output format: {fmt!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path.stat().st_size
    except OSError as e:
        raise OutputError(f"Failed to write '{path}': {e}") from e


def check_unique_outputs(paths: Iterable[Path]) -> None:
    """Reject sweeps where two jobs write the same file.

    Raises:
        OutputError: On the first duplicated path
    """
    seen: set[Path] = set()
    for path in paths:
        resolved = path.resolve()
        if resolved in seen:
            raise OutputError(f"Duplicate output path in sweep: {path}")
        seen.add(resolved)


def write_manifest(
    directory: Path, entries: Sequence[ManifestEntry], metadata: dict[str, Any]
) -> Path:
    """Write the sweep manifest once all jobs have finished.

    Raises:
        OutputError: If writing fails
    """
    path = directory / MANIFEST_NAME
    document = {"metadata": to_plain(metadata), "jobs": [to_plain(e.to_dict()) for e in entries]}
    try:
        directory.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Failed to write manifest '{path}': {e}") from e
    return path


def load_manifest(path: Path) -> list[ManifestEntry]:
    """Read the jobs of a manifest.

    Raises:
        OutputError: If the manifest cannot be read
    """
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise OutputError(f"Failed to read manifest '{path}': {e}") from e
    return [ManifestEntry.from_dict(job) for job in document.get("jobs", [])]
