"""Atomic file output: CSV tables with a versioned header comment and JSON reports."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

CSV_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "" if np.isnan(value) else repr(float(value))
    return str(value)


def write_csv(path, columns, rows, kind: str) -> Path:
    """Write a table whose first line is ``# <kind> schema <version>``."""
    buf = io.StringIO()
    buf.write(f"# pendulearn {kind} schema {CSV_SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        writer.writerow([_cell(v) for v in row])
    return write_atomic(path, buf.getvalue())


def read_csv(path) -> tuple[str, list[str], np.ndarray]:
    """Read a table written by :func:`write_csv`; text cells become nan."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# pendulearn "):
            raise ValueError(f"{path}: missing schema header line")
        parts = first.split()
        kind, version = parts[2], int(parts[4])
        if version != CSV_SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema version {version}")
        reader = csv.reader(fh)
        columns = next(reader)
        data = []
        for row in reader:
            vals = []
            for cell in row:
                try:
                    vals.append(float(cell) if cell else np.nan)
                except ValueError:
                    vals.append(np.nan)
            data.append(vals)
    return kind, columns, np.array(data, dtype=float).reshape(-1, len(columns))


def write_json(path, payload: dict) -> Path:
    return write_atomic(path, json.dumps(payload, indent=2, sort_keys=False) + "\n")
