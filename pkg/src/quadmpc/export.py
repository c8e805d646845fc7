"""Atomic file output: traces, metric tables and the effective config."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from quadmpc.sim import TRACE_COLUMNS, RunMetrics, SweepRow

METRIC_COLUMNS = ("method", "t_o", "total_err_x", "total_err_y", "total_err_z",
                  "min_err_x", "min_err_y", "min_err_z", "flight_time", "status")


def write_atomic(path: str | Path, data: bytes | str) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_trace(path, trace) -> Path:
    trace = np.asarray(trace, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return write_atomic(path, _csv_text(TRACE_COLUMNS, trace.tolist()))


def metrics_row(label: str, m: RunMetrics | None, t_o=None, error: str | None = None) -> list:
    if m is None:
        return [label, t_o, None, None, None, None, None, None, None, f"failed: {error}"]
    return [label, t_o, *m.total_err, *m.min_err, m.flight_time, "ok"]


def write_metrics(path, rows) -> Path:
    """``rows`` are ``metrics_row`` lists, one per method."""
    return write_atomic(path, _csv_text(METRIC_COLUMNS, rows))


def write_sweep(path, rows: list[SweepRow]) -> Path:
    return write_metrics(path, [metrics_row(r.label, r.metrics, r.t_o, r.error) for r in rows])


def write_json(path, obj) -> Path:
    return write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_trace(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError(f"{path} is not a trace file")
    return np.array(rows[1:], dtype=float).reshape(-1, len(TRACE_COLUMNS))
