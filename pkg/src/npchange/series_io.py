"""CSV ingest/export and the small text formats the CLI writes."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .windowed_regression import PairedSeries


class SchemaError(ValueError):
    """Input file does not match the expected CSV layout."""


@dataclass(frozen=True)
class LoadedSeries:
    series: PairedSeries
    labels: list[str] | None

    def label(self, t: int | None) -> str | None:
        if t is None or self.labels is None:
            return None
        return self.labels[t - 1]


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def read_series_csv(path: str | Path, x_col: str = "x", y_col: str = "y",
                    label_col: str | None = None) -> LoadedSeries:
    """Read a headed CSV; every row must carry finite x and y values.

    Malformed rows are reported together, by line number, in one
    :class:`SchemaError`.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty (a header row is required)") from None
        header = [h.strip() for h in header]
        wanted = [x_col, y_col] + ([label_col] if label_col else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        ix, iy = header.index(x_col), header.index(y_col)
        il = header.index(label_col) if label_col else None
        xs, ys, labels, problems = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                problems.append(f"line {lineno}: empty row")
                continue
            if len(row) != len(header):
                problems.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            try:
                xv, yv = float(row[ix]), float(row[iy])
            except ValueError:
                problems.append(f"line {lineno}: non-numeric {x_col}/{y_col} "
                                f"({row[ix]!r}, {row[iy]!r})")
                continue
            if not (math.isfinite(xv) and math.isfinite(yv)):
                problems.append(f"line {lineno}: non-finite {x_col}/{y_col}")
                continue
            xs.append(xv)
            ys.append(yv)
            if il is not None:
                labels.append(row[il])
    if problems:
        shown = "; ".join(problems[:20])
        more = f" (and {len(problems) - 20} more)" if len(problems) > 20 else ""
        raise SchemaError(f"{path}: {len(problems)} malformed row(s): {shown}{more}")
    if len(xs) < 2:
        raise SchemaError(f"{path}: need at least two data rows, found {len(xs)}")
    return LoadedSeries(PairedSeries(np.array(xs), np.array(ys)),
                        labels if il is not None else None)


def write_series_csv(path: str | Path, series: PairedSeries, labels=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y"] if labels is None else ["label", "x", "y"])
        first = labels if labels is not None else range(1, series.n + 1)
        for lab, x, y in zip(first, series.x.tolist(), series.y.tolist()):
            w.writerow([lab, repr(x), repr(y)])


def _plain(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def dump_records(path: str | Path, records) -> None:
    """Line-delimited JSON, keys in insertion order, floats round-trip exact."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({k: _plain(v) for k, v in rec.items()}) + "\n")


def load_records(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def dump_column(path: str | Path, values) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{'NA' if v is None else repr(v)}\n" for v in values)


def fmt4(v) -> str:
    """Four significant digits for human-facing tables."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(v)
    return f"{v:.4g}"
