"""Structured experiment results and their CSV/JSON serialization.

CSV: RFC-4180 quoting, mandatory header, '.' decimal separator, floats with
17 significant digits. Rows carry a ``row_type`` column: ``trial`` rows (one
per cell and seed) come first, then ``aggregate`` rows. JSON: UTF-8 with
sorted keys; the wall-clock timestamp lives only in ``meta``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np


def format_value(v: Any) -> str:
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
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


@dataclass
class ExperimentReport:
    name: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    aggregate: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)

    def columns(self) -> list[str]:
        cols: list[str] = []
        for r in self.rows + self.aggregate:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return ["row_type"] + cols

    def to_csv_text(self) -> str:
        tagged = [{"row_type": kind, **r}
                  for kind, rows in (("trial", self.rows), ("aggregate", self.aggregate)) for r in rows]
        return rows_to_csv(tagged, self.columns())

    def to_dict(self, timestamp: bool = True) -> dict:
        out = {"name": self.name, "config": jsonable(self.config), "metrics": jsonable(self.metrics),
               "seeds": list(self.seeds), "aggregate": jsonable(self.aggregate)}
        if timestamp:
            out["meta"] = {"created": datetime.now(timezone.utc).isoformat(timespec="seconds")}
        return out

    def to_json_text(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def write(self, directory, stem: str | None = None) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        csv_path, json_path = directory / f"{stem}.csv", directory / f"{stem}.json"
        atomic_write(csv_path, self.to_csv_text())
        atomic_write(json_path, self.to_json_text())
        return csv_path, json_path


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def summarize(values) -> dict:
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "min": float(a.min()), "max": float(a.max())}
