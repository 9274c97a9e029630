"""Byte-stable CSV/JSON output."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path
from typing import Iterable, Sequence

DIGITS = 12


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, f".{DIGITS}g")
    if isinstance(value, tuple):
        return " ".join(fmt(v) for v in value)
    try:
        return format(float(value), f".{DIGITS}g")
    except (TypeError, ValueError):
        return str(value)


def write_csv(path: str | Path | None, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def write_json(path: str | Path | None, obj) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
