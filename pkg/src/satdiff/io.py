"""File formats.

* Fields: CSV with one row per cell, ``i[,j],x[,y],value``.
* Trajectories: one JSON header line followed by a little-endian float64
  payload, row-major: the ``n`` snapshot times, then the ``n`` fields.
* JSON documents are written with sorted keys so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ContractError
from .mesh import DensityField, Grid, Trajectory

TRAJECTORY_FORMAT = "satdiff-trajectory"
TRAJECTORY_VERSION = 1
_F8 = np.dtype("<f8")


def write_field_csv(path: str | Path, field: DensityField) -> None:
    grid = field.grid
    idx_names = ["i", "j"][:grid.dim]
    x_names = ["x", "y"][:grid.dim]
    index = np.indices(grid.shape).reshape(grid.dim, -1)
    coords = [c.reshape(-1) for c in grid.centers]
    vals = field.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(idx_names + x_names + ["value"])
        for n in range(vals.size):
            w.writerow([int(i[n]) for i in index] + ["%.17g" % c[n] for c in coords]
                       + ["%.17g" % vals[n]])


def read_field_csv(path: str | Path, grid: Grid) -> DensityField:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[-1] != "value" or len(header) != 2 * grid.dim + 1:
            raise ContractError(f"unexpected field header {header}")
        values = np.zeros(grid.shape)
        for row in r:
            idx = tuple(int(v) for v in row[:grid.dim])
            values[idx] = float(row[-1])
    return DensityField(grid, values)


def write_trajectory(path: str | Path, traj: Trajectory) -> None:
    header = {"format": TRAJECTORY_FORMAT, "version": TRAJECTORY_VERSION,
              "grid": traj.grid.to_dict(), "snapshots": len(traj),
              "dtype": "<f8", "order": "C"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(traj.times, dtype=_F8).tobytes())
        fh.write(np.ascontiguousarray(traj.data, dtype=_F8).tobytes())


def read_trajectory(path: str | Path) -> Trajectory:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: unreadable trajectory header") from exc
        if header.get("format") != TRAJECTORY_FORMAT:
            raise ContractError(f"{path}: not a trajectory file")
        grid = Grid.from_dict(header["grid"])
        n = int(header["snapshots"])
        payload = np.frombuffer(fh.read(), dtype=_F8)
    if payload.size != n * (1 + grid.size):
        raise ContractError(f"{path}: payload holds {payload.size} values, "
                            f"expected {n * (1 + grid.size)}")
    return Trajectory(grid, payload[:n].copy(), payload[n:].reshape(n, *grid.shape).copy())


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_rows_csv(path: str | Path, header: list[str], rows) -> None:
    """CSV with floats written at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, (int, str)) else "%.17g" % x for x in row])
