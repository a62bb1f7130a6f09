"""Deterministic CSV/JSON report emission."""

from __future__ import annotations

import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path


def fixed(value, places: int = 6) -> float:
    """Round an exact or float value to ``places`` decimals for output."""
    return float(f"{float(value):.{places}f}")


def sig(value, digits: int = 6) -> float:
    """Round to ``digits`` significant digits (p-values)."""
    return float(f"{float(value):.{digits}g}")


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return repr(fixed(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, Fraction):
        return fixed(v)
    return v


def render(columns, rows, fmt: str = "csv") -> str:
    if fmt == "json":
        records = [{c: _json_value(v) for c, v in zip(columns, row)} for row in rows]
        return json.dumps(records, ensure_ascii=False, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def emit(name: str, columns, rows, fmt: str = "csv", out_dir=None, stream=None) -> None:
    """Write a report to ``out_dir/<name>.<fmt>`` or to ``stream`` (stdout)."""
    text = render(columns, rows, fmt)
    if out_dir is None:
        (stream or sys.stdout).write(text)
        return
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / f"{name}.{fmt}", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
