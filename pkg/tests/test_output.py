"""Tests for result file emission."""

import json
from pathlib import Path

import numpy as np
import pytest

from qbsense.exceptions import OutputError
from qbsense.models import ManifestEntry, SweepJob
from qbsense.output import (
    check_unique_outputs,
    default_output_path,
    format_cell,
    load_manifest,
    render_csv,
    render_json,
    to_plain,
    write_manifest,
    write_table,
)

RECORDS = [
    {"t": 0.1, "flag": True, "estimate": None},
    {"t": np.float64(0.5), "flag": False, "estimate": 2, "extra": "x"},
]


def test_render_csv_layout() -> None:
    """Test metadata order, header and cell formatting."""
    metadata = {"created_at": "2026-01-01T00:00:00+00:00", "seed": 3, "command": "qfi"}

    lines = render_csv(RECORDS, metadata).splitlines()

    assert lines[0] == '# command = "qfi"'
    assert lines[1] == "# seed = 3"
    assert lines[2].startswith("# created_at = ")
    assert lines[3] == "t,flag,estimate,extra"
    assert lines[4] == "0.10000000000000001,true,,"
    assert lines[5] == "0.5,false,2,x"


def test_render_csv_without_records() -> None:
    """Test that an empty table keeps only the metadata."""
    assert render_csv([], {"a": 1}) == "# a = 1\n"


def test_format_cell_values() -> None:
    """Test special cell values."""
    assert format_cell(float("inf")) == "inf"
    assert format_cell(np.int64(7)) == "7"
    assert format_cell(1 - 2j) == "1-2j"


def test_render_json_sorted() -> None:
    """Test the JSON document layout."""
    document = json.loads(render_json(RECORDS, {"b": 1, "a": np.array([1.0, 2.0])}))

    assert list(document) == ["metadata", "records"]
    assert document["metadata"] == {"a": [1.0, 2.0], "b": 1}
    assert document["records"][0] == {"estimate": None, "flag": True, "t": 0.1}


def test_to_plain_nested() -> None:
    """Test conversion of numpy and complex values."""
    value = {"z": (np.float32(1.5), 2j), 3: [np.bool_(True)]}

    assert to_plain(value) == {"z": [1.5, "2j"], "3": [True]}


def test_write_table(tmp_path: Path) -> None:
    """Test writing into a new directory."""
    path = tmp_path / "nested" / "run.json"

    size = write_table(path, RECORDS, {"seed": 0}, "json")

    assert size == path.stat().st_size
    assert json.loads(path.read_text(encoding="utf-8"))["metadata"]["seed"] == 0


def test_write_table_unknown_format(tmp_path: Path) -> None:
    """Test that only csv and json are accepted."""
    with pytest.raises(OutputError, match="Unknown output format"):
        write_table(tmp_path / "run.xml", RECORDS, {}, "xml")  # type: ignore[arg-type]


def test_write_table_to_directory(tmp_path: Path) -> None:
    """Test the error for a path that is a directory."""
    with pytest.raises(OutputError, match="Failed to write"):
        write_table(tmp_path, RECORDS, {}, "csv")


def test_check_unique_outputs(tmp_path: Path) -> None:
    """Test duplicate detection across equivalent paths."""
    check_unique_outputs([tmp_path / "a.csv", tmp_path / "b.csv"])

    with pytest.raises(OutputError, match="Duplicate output path"):
        check_unique_outputs([tmp_path / "a.csv", tmp_path / "sub" / ".." / "a.csv"])


def test_manifest_roundtrip(tmp_path: Path) -> None:
    """Test that a written manifest reads back into the same entries."""
    entries = [
        ManifestEntry(SweepJob("charge", {"n": 2}, "charge_000.csv"), "ok"),
        ManifestEntry(SweepJob("charge", {"n": 5}, "charge_001.csv"), "error", "bad", 1),
    ]

    path = write_manifest(tmp_path / "sweep", entries, {"job_count": 2})

    assert path.name == "manifest.json"
    assert load_manifest(path) == entries


def test_load_manifest_missing(tmp_path: Path) -> None:
    """Test the error for an unreadable manifest."""
    with pytest.raises(OutputError, match="Failed to read manifest"):
        load_manifest(tmp_path / "manifest.json")


def test_default_output_path(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Test the explicit directory and the user data fallback."""
    monkeypatch.setattr("platformdirs.user_data_dir", lambda *_: str(tmp_path / "data"))

    assert default_output_path("qfi", "csv", "results") == Path("results") / "qfi.csv"
    assert default_output_path("qfi", "json") == tmp_path / "data" / "runs" / "qfi.json"
