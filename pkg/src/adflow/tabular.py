"""Rendering of row-oriented command output as table, csv or json-lines."""

from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Sequence

FORMATS = ("table", "csv", "json-lines")


def render(columns: Sequence[str], rows: Iterable[Sequence[object]], fmt: str = "table") -> str:
    rows = [[str(c) for c in row] for row in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "json-lines":
        return "".join(json.dumps(dict(zip(columns, row)), sort_keys=True) + "\n" for row in rows)
    if fmt != "table":
        raise ValueError(f"unknown format {fmt!r}")
    widths = [max([len(c)] + [len(r[i]) for r in rows]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def parse(text: str, fmt: str = "table") -> list[dict[str, str]]:
    """Inverse of :func:`render` (table cells must not contain spaces)."""
    if fmt == "csv":
        return list(csv.DictReader(io.StringIO(text)))
    if fmt == "json-lines":
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    lines = [line.split() for line in text.splitlines() if line.strip()]
    if not lines:
        return []
    header = lines[0]
    return [dict(zip(header, row)) for row in lines[1:]]
