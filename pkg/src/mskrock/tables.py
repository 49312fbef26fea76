"""CSV tables and key-value metadata files that round-trip without loss."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

_INT = re.compile(r"^[-+]?\d+$")


def format_cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def parse_cell(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class Table:
    header: list[str]
    rows: list[list]

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """Comma-separated, header row first, LF line endings, floats in shortest exact form."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
            w.writerow([format_cell(v) for v in row])


def write_columns(path, columns: Mapping[str, Sequence]) -> None:
    names = list(columns)
    n = {len(columns[k]) for k in names}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    write_csv(path, names, list(zip(*(columns[k] for k in names))))


def read_csv(path) -> Table:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[parse_cell(c) for c in rec] for rec in reader]
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"{path}: ragged row {r}")
    return Table(header, rows)


def write_metadata(path, meta: Mapping[str, Any]) -> None:
    lines = []
    for k, v in meta.items():
        if "=" in k or "\n" in k:
            raise ValueError(f"bad metadata key {k!r}")
        text = format_cell(v)
        if "\n" in text:
            raise ValueError(f"metadata value for {k!r} spans lines")
        lines.append(f"{k} = {text}\n")
    Path(path).write_text("".join(lines))


def read_metadata(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        k, sep, v = line.partition(" = ")
        if not sep:
            raise ValueError(f"{path}: malformed line {line!r}")
        out[k] = parse_cell(v)
    return out
