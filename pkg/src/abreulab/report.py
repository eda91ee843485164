"""Report containers and on-disk formats: JSON reports, CSV field snapshots.

Field CSVs use the header ``x1,x2,value`` with Python repr formatting,
which round-trips IEEE-754 doubles exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import GridDomain


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class SolveReport:
    """Accumulates solver and diagnostic data, serialized deterministically."""

    command: str
    data: dict = field(default_factory=dict)

    def set(self, key: str, value):
        self.data[key] = value

    def append(self, key: str, value):
        self.data.setdefault(key, []).append(value)

    def to_json(self) -> str:
        payload = {"command": self.command}
        payload.update(_jsonable(self.data))
        return json.dumps(payload, indent=2, sort_keys=True)

    def write(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def write_field_csv(path: str, domain: GridDomain, values: np.ndarray,
                    region: Optional[np.ndarray] = None):
    """Row-major node snapshot: header x1,x2,value; repr round-trip floats."""
    if region is None:
        region = np.isfinite(values)
    with open(path, "w") as fh:
        fh.write("x1,x2,value\n")
        ny, nx = domain.shape
        for i in range(ny):
            for j in range(nx):
                if region[i, j]:
                    fh.write(f"{float(domain.x1[i, j])!r},"
                             f"{float(domain.x2[i, j])!r},"
                             f"{float(values[i, j])!r}\n")


def read_field_csv(path: str):
    """Returns (x1, x2, value) arrays from a field snapshot."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return data[:, 0], data[:, 1], data[:, 2]


def field_to_grid(domain: GridDomain, x1, x2, vals) -> np.ndarray:
    """Scatter CSV triples back onto the domain's grid (NaN elsewhere)."""
    out = np.full(domain.shape, np.nan)
    h = domain.h
    i = np.rint((np.asarray(x2) - domain.x2[0, 0]) / h).astype(int)
    j = np.rint((np.asarray(x1) - domain.x1[0, 0]) / h).astype(int)
    out[i, j] = vals
    return out


def ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
