"""Tabular sweep results with RFC-4180 CSV round-tripping."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


@dataclass
class SweepResult:
    """One row per grid point (and seed); ``columns`` fixes the CSV header order."""

    columns: list
    rows: list = field(default_factory=list)

    def append(self, row: dict) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise KeyError(f"row lacks columns {missing}")
        self.rows.append({c: row[c] for c in self.columns})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, dest=None, header: bool = True) -> str | None:
        if dest is None:
            buf = io.StringIO()
            self.to_csv(buf, header=header)
            return buf.getvalue()
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, "w", newline="", encoding="utf-8") as fh:
                self.to_csv(fh, header=header)
            return None
        writer = csv.writer(dest, lineterminator="\r\n")
        if header:
            writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([_fmt(r[c]) for c in self.columns])
        return None

    @classmethod
    def from_csv(cls, src) -> "SweepResult":
        if isinstance(src, (str, os.PathLike)):
            with open(src, newline="", encoding="utf-8") as fh:
                return cls.from_csv(fh)
        reader = csv.reader(src)
        try:
            columns = next(reader)
        except StopIteration:
            return cls([])
        out = cls(columns)
        for rec in reader:
            if rec:
                out.rows.append(dict(zip(columns, rec)))
        return out
