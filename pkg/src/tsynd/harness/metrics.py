"""Append-only metric rows and their CSV form."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import astuple, dataclass
from typing import Iterable, List, Union

from ..errors import FormatError

HEADER = ("run_id", "seed", "epoch", "split", "perturbation", "metric", "value")


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    seed: int
    epoch: int
    split: str
    perturbation: str
    metric: str
    value: float


def format_value(v: float) -> str:
    return f"{v:.6g}"


def metrics_to_csv(rows: Iterable[MetricsRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in rows:
        writer.writerow([r.run_id, r.seed, r.epoch, r.split, r.perturbation, r.metric, format_value(r.value)])
    return buf.getvalue()


def write_metrics(rows: Iterable[MetricsRecord], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_to_csv(rows))


def read_metrics(path: Union[str, os.PathLike]) -> List[MetricsRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != HEADER:
        raise FormatError(f"unexpected metrics header {header}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(HEADER):
            raise FormatError(f"line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
        try:
            rows.append(MetricsRecord(row[0], int(row[1]), int(row[2]), row[3], row[4], row[5], float(row[6])))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return rows
