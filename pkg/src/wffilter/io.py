"""Dataset files: ``t,y`` or ``t,x,y`` CSV with an optional JSON sidecar.

Floats are written with ``repr``, the shortest string that round-trips.
"""
from __future__ import annotations

import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import DomainError

__all__ = ["Dataset", "fmt", "read_dataset", "sidecar_path", "write_csv", "write_dataset"]


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class Dataset:
    times: np.ndarray
    obs: np.ndarray
    states: np.ndarray | None = None
    meta: dict | None = None

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times)


def sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root + ".json"


def write_csv(stream: TextIO, header: list[str], rows) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])


def write_dataset(path: str | None, data: Dataset, stream: TextIO | None = None) -> None:
    """Write ``t,x,y`` (or ``t,y``) to ``path`` (or ``stream``) and the sidecar next to ``path``."""
    header = ["t", "x", "y"] if data.states is not None else ["t", "y"]
    if data.states is not None:
        rows = zip(data.times, data.states, (int(y) for y in data.obs))
    else:
        rows = zip(data.times, (int(y) for y in data.obs))
    buf = io.StringIO()
    write_csv(buf, header, rows)
    if path is None or path == "-":
        (stream or sys.stdout).write(buf.getvalue())
        return
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    if data.meta is not None:
        with open(sidecar_path(path), "w") as fh:
            json.dump(data.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_dataset(path: str) -> Dataset:
    """Read a dataset CSV (``t,y`` or ``t,x,y``) or a JSON array of observations.

    A JSON array is taken as unit-spaced observations.  The sidecar, if
    present, is attached as ``meta``.
    """
    if path.endswith(".json") and not os.path.exists(path[:-5] + ".csv"):
        with open(path) as fh:
            payload = json.load(fh)
        if not isinstance(payload, list):
            raise DomainError("a JSON dataset must be an array of observations")
        obs = np.asarray(payload)
        return Dataset(np.arange(obs.size, dtype=float), _as_counts(obs), None, None)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if "t" not in fields or "y" not in fields:
            raise DomainError(f"{path}: expected a header with columns t,y (and optionally x)")
        rows = [{k.strip(): v for k, v in r.items()} for r in reader]
    if not rows:
        raise DomainError(f"{path}: no observations")
    try:
        times = np.array([float(r["t"]) for r in rows])
        obs = [float(r["y"]) for r in rows]
        states = np.array([float(r["x"]) for r in rows]) if "x" in fields else None
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{path}: malformed row ({exc})") from None
    if np.any(np.diff(times) <= 0):
        raise DomainError(f"{path}: times must be strictly increasing")
    meta = None
    side = sidecar_path(path)
    if os.path.exists(side) and side != path:
        with open(side) as fh:
            meta = json.load(fh)
    return Dataset(times, _as_counts(np.asarray(obs)), states, meta)


def _as_counts(obs: np.ndarray) -> np.ndarray:
    if obs.ndim != 1 or np.any(obs < 0) or np.any(obs != np.floor(obs)):
        raise DomainError("observations must be nonnegative integers")
    return obs.astype(np.int64)
