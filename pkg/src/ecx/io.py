"""CSV and JSON serialization with round-trip exact floats."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ecx.errors import DimensionError, ValidationError


def fmt_float(x: float) -> str:
    """17 significant digits; ``nan``/``inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return fmt_float(x)
    return str(x)


def matrix_csv(
    values: ArrayLike, row_ids: Sequence[str], col_ids: Sequence[str], corner: str = "id"
) -> str:
    """Header of column ids, first column of row ids."""
    values = np.asarray(values)
    if values.shape != (len(row_ids), len(col_ids)):
        raise DimensionError("ids do not match matrix shape")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *col_ids])
    integer = np.issubdtype(values.dtype, np.integer) or values.dtype == bool
    for rid, row in zip(row_ids, values):
        w.writerow([rid, *(str(int(v)) if integer else fmt_float(v) for v in row)])
    return buf.getvalue()


def write_matrix_csv(
    path: str | Path, values: ArrayLike, row_ids: Sequence[str], col_ids: Sequence[str]
) -> Path:
    path = Path(path)
    path.write_text(matrix_csv(values, row_ids, col_ids), newline="")
    return path


def read_matrix_csv(path: str | Path) -> tuple[NDArray[np.float64], tuple[str, ...], tuple[str, ...]]:
    """Inverse of :func:`write_matrix_csv`; returns (values, row_ids, col_ids)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or len(rows[0]) < 2:
        raise ValidationError(f"{path}: matrix CSV needs a header row and at least one data row")
    col_ids = tuple(rows[0][1:])
    row_ids = tuple(r[0] for r in rows[1:])
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric matrix entry ({exc})") from None
    if values.shape != (len(row_ids), len(col_ids)):
        raise DimensionError(f"{path}: ragged matrix CSV")
    return values, row_ids, col_ids


def table_csv(columns: dict[str, Sequence[Any]]) -> str:
    """Columnar table to CSV; all columns must have equal length."""
    names = list(columns)
    lengths = {len(v) for v in columns.values()}
    if len(lengths) > 1:
        raise DimensionError("table columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*(columns[n] for n in names)):
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def write_table_csv(path: str | Path, columns: dict[str, Sequence[Any]]) -> Path:
    path = Path(path)
    path.write_text(table_csv(columns), newline="")
    return path


def jsonable(obj: Any) -> Any:
    """Convert numpy containers and scalars; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj: Any) -> str:
    # repr of a Python float is its shortest round-trip form (<= 17 digits)
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path
