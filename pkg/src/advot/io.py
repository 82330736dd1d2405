"""CSV reading and writing for sample clouds and result tables.

Files have one header row and one point per row.  Numbers are written with
``repr`` so they round-trip exactly and never depend on the locale.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .core import DataError


def read_points(path, label: str = "points") -> np.ndarray:
    """Read an (n, d) float matrix from a headed CSV file.

    Row numbers in error messages count data rows from 1 (the header is
    not a data row).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header:
            raise DataError(f"{path}: empty file, expected a header row")
        d = len(header)
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d:
                raise DataError(f"{path}: row {row_no} has {len(row)} columns, expected {d}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {row_no}: non-finite value")
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: {label} need at least 2 rows, got {len(rows)}")
    return np.array(rows, dtype=float)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def write_table(path, header, rows):
    """Write ``rows`` (iterable of sequences) under ``header``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_points(path, points, prefix: str = "x"):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    write_table(path, [f"{prefix}{j}" for j in range(points.shape[1])], points.tolist())
