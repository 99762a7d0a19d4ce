"""CSV and JSON result files."""

import csv
import json
import logging
import subprocess
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__

logger = logging.getLogger(__name__)

FIELD_COLUMNS = ("x", "y", "re_u", "im_u")


def _cell(value: Any) -> str:
    # repr of a Python float is the shortest string that round-trips.
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def write_field_csv(path: Path, points, values) -> Path:
    """Write complex field values at points as x,y,re_u,im_u rows."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=complex).ravel()
    if len(points) != len(values):
        raise ValueError(f"{len(points)} points but {len(values)} values")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FIELD_COLUMNS)
        for (x, y), u in zip(points, values):
            writer.writerow([_cell(x), _cell(y), _cell(u.real), _cell(u.imag)])
    logger.info(f"Wrote {len(values)} field values to {path}")
    return path


def read_field_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a file written by ``write_field_csv``; returns (points, values)."""
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != FIELD_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(FIELD_COLUMNS)}")
        rows = [[float(row[c]) for c in FIELD_COLUMNS] for row in reader]
    data = np.array(rows, dtype=float).reshape(-1, 4)
    return data[:, :2], data[:, 2] + 1j * data[:, 3]


def write_table_csv(path: Path, rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> Path:
    """Write study or benchmark rows with a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _cell(row.get(c)) for c in columns})
    logger.info(f"Wrote {len(rows)} table rows to {path}")
    return path


def to_jsonable(value: Any) -> Any:
    """Convert numpy arrays/scalars, complex numbers and paths to JSON data."""
    if isinstance(value, (str, bool)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": to_jsonable(value.real), "im": to_jsonable(value.imag)}
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return str(value)


def version_stamp() -> str:
    """Package version plus ``git describe`` output when run from a checkout."""
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        described = "unknown"
    return f"{__version__} ({described or 'unknown'})"


def write_report_json(path: Path, payload: Mapping[str, Any]) -> Path:
    """Write a JSON report (sorted keys, indent 2) with a version stamp."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report = {"version": version_stamp(), **payload}
    with path.open("w", encoding="utf-8") as f:
        json.dump(to_jsonable(report), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote report to {path}")
    return path
