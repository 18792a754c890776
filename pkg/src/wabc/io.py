"""CSV tables and run metadata.

Floats are written with ``repr`` so that reading a file and writing it back
reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_dataset(path, data) -> Path:
    """Write an ``(n, d)`` array with header ``y_1..y_d``."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    header = [f"y_{j + 1}" for j in range(data.shape[1])]
    return write_rows(path, header, data.tolist())


def read_dataset(path) -> np.ndarray:
    """Read a dataset CSV (one header row, numeric columns)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_records(path, records: list[dict]) -> Path:
    """Write a list of dicts sharing the same keys."""
    if not records:
        return write_rows(path, [], [])
    header = list(records[0])
    return write_rows(path, header, [[r[k] for k in header] for r in records])


def read_records(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_trace(path, trace, param_names=None) -> Path:
    """One row per (step, particle): step, epsilon, sim_count, particle_index,
    theta_1.., distance."""
    d = trace[0].theta.shape[1]
    names = list(param_names) if param_names else [f"theta_{j + 1}" for j in range(d)]
    header = ["step", "epsilon", "sim_count", "particle_index", *names, "distance"]

    def rows():
        for rec in trace:
            for i in range(rec.theta.shape[0]):
                yield [rec.step, float(rec.epsilon), rec.sim_count, i, *map(float, rec.theta[i]),
                       float(rec.distance[i])]

    return write_rows(path, header, rows())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_metadata(path, config: dict, seed, command: str, extra: dict | None = None) -> Path:
    """Structured record of a run: command, full config, seed, versions."""
    from . import __version__

    record = {
        "command": command,
        "seed": seed,
        "config": config,
        "version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        record.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
    return path
