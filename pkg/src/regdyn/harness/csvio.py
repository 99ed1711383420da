"""CSV output: header row, UTF-8, LF line endings, 17 significant digits for reals."""
from __future__ import annotations

import csv
import math
import os


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def write_rows(path: str, columns: list, rows: list) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_rows(path: str) -> tuple[list, list]:
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        try:
            columns = next(r)
        except StopIteration:
            return [], []
        rows = [{c: _parse(v) for c, v in zip(columns, line)} for line in r]
    return columns, rows
