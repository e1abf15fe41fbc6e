"""CSV, key-value and manifest files written by the command line tool."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

MARGIN_FIELDS = frozenset(
    {"gain_margin", "gain_margin_db", "phase_margin_deg", "time_delay_margin_s", "gain_crossover", "GM", "PM", "TDM"}
)


def format_value(v, column: str = "") -> str:
    """Text form of one cell; floats use ``repr`` so they read back exactly.

    ``None`` becomes an empty cell.  Non-finite floats are only accepted in
    margin columns.
    """
    if v is None:
        return ""
    if isinstance(v, (bool,)):
        return "1" if v else "0"
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        if not math.isfinite(v) and column not in MARGIN_FIELDS:
            raise ValueError(f"non-finite value in non-margin column {column!r}")
        return repr(v)
    return str(v)


def parse_value(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(path, columns: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(v, c) for c, v in zip(columns, row)])
    return path


def write_columns(path, data: dict) -> Path:
    cols = list(data)
    return write_csv(path, cols, zip(*(data[c] for c in cols)))


def read_csv(path) -> tuple[list[str], list[list]]:
    """Header and typed rows of a file written by :func:`write_csv`."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [[parse_value(x) for x in row] for row in r]


def write_kv(path, items: dict) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {format_value(v, k)}\n" for k, v in items.items()))
    return path


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition(" = ")
            out[k] = parse_value(v)
    return out


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path
