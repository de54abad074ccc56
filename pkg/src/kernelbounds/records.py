"""CSV ingestion and emission with shortest round-trip number formatting."""

from __future__ import annotations

import csv
import io
import math
import re
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import InvalidInput

_INT = re.compile(r"^[+-]?\d+$")


def fmt(v) -> str:
    """Shortest decimal that parses back to the same float (``repr``)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(getattr(v, "value", v))


def parse(s: str):
    """Inverse of :func:`fmt` for one cell."""
    if s in ("true", "false"):
        return s == "true"
    if _INT.match(s):
        return int(s)
    try:
        return float(s)
    except ValueError:
        return s


def _float(cell: str, line: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise InvalidInput(f"line {line}: column {col!r} is not a number", line=line, value=cell) from None
    if not math.isfinite(v):
        raise InvalidInput(f"line {line}: column {col!r} is not finite", line=line, value=cell)
    return v


def _rows(fh: TextIO):
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InvalidInput("line 1: missing header") from None
    return header, ((reader.line_num, row) for row in reader if row)


def read_points(fh: TextIO, with_y: bool):
    """Rows of ``x_1, ..., x_d[, y]``; returns ``(X, y)`` or ``X``."""
    header, rows = _rows(fh)
    d = len(header) - (1 if with_y else 0)
    want = [f"x_{i + 1}" for i in range(d)] + (["y"] if with_y else [])
    if d < 1 or header != want:
        raise InvalidInput(f"line 1: expected header {','.join(want) or 'x_1'}", line=1, header=header)
    x, y = [], []
    for line, row in rows:
        if len(row) != len(header):
            raise InvalidInput(f"line {line}: expected {len(header)} fields, got {len(row)}", line=line)
        x.append([_float(c, line, header[j]) for j, c in enumerate(row[:d])])
        if with_y:
            y.append(_float(row[d], line, "y"))
    xa = np.array(x, dtype=float).reshape(-1, d)
    return (xa, np.array(y, dtype=float)) if with_y else xa


def read_dataset(path) -> tuple:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_points(fh, with_y=True)


def read_queries(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_points(fh, with_y=False)


def write_rows(fh: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])


def write_dataset(fh: TextIO, x, y) -> None:
    x = np.asarray(x, dtype=float).reshape(len(y), -1) if len(y) else np.asarray(x, dtype=float).reshape(0, -1)
    d = x.shape[1] if x.ndim == 2 and x.shape[1] else 1
    write_rows(fh, [f"x_{i + 1}" for i in range(d)] + ["y"], (list(xi) + [yi] for xi, yi in zip(x, y)))


def write_records(fh: TextIO, records: Sequence[dict], header: Sequence[str] = ()) -> None:
    header = list(header) or (list(records[0]) if records else [])
    write_rows(fh, header, ([r.get(h, "") for h in header] for r in records))


def read_records(fh: TextIO) -> list:
    reader = csv.DictReader(fh)
    return [{k: parse(v) for k, v in row.items()} for row in reader]


def records_to_csv(records: Sequence[dict], header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    write_records(buf, records, header)
    return buf.getvalue()


def jsonable(v):
    """Replace non-finite floats by strings so output stays strict JSON."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return getattr(v, "value", v)
