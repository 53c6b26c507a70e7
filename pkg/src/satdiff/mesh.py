"""Uniform tensor grids on rectangles of R^N (N = 1, 2), cell-averaged fields
and the two-point difference operators used by the finite-volume scheme.

Face arrays follow one convention throughout: along axis ``a`` a face array
has ``n_a + 1`` entries, entry ``j`` being the face between cells ``j - 1``
and ``j``.  Entries ``0`` and ``n_a`` are the boundary faces, which carry no
flux.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import ContractError, ShapeError

ArrayLike = Union[np.ndarray, "DensityField"]


@dataclass(frozen=True)
class Grid:
    """Cell-centred uniform grid on ``prod_a [a_a, b_a)``."""

    extents: tuple[tuple[float, float], ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        extents = tuple((float(a), float(b)) for a, b in self.extents)
        cells = tuple(int(n) for n in self.cells)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells", cells)
        if len(extents) not in (1, 2) or len(cells) != len(extents):
            raise ShapeError("grid must have 1 or 2 axes with one cell count each")
        for (a, b), n in zip(extents, cells):
            if not b > a:
                raise ShapeError(f"empty interval [{a}, {b})")
            if n < 4:
                raise ShapeError(f"need at least 4 cells per axis, got {n}")

    @classmethod
    def uniform(cls, a: float, b: float, n: int, dim: int = 1) -> "Grid":
        return cls(((a, b),) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / n for (a, b), n in zip(self.extents, self.cells))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        """1D arrays of cell-centre coordinates, one per axis."""
        return tuple(a + (np.arange(n) + 0.5) * h
                     for (a, _), n, h in zip(self.extents, self.cells, self.h))

    @cached_property
    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinates broadcast to the full grid shape."""
        if self.dim == 1:
            return self.axes
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def face_coordinates(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces normal to ``axis`` (boundary faces included)."""
        a, _ = self.extents[axis]
        faces = a + np.arange(self.cells[axis] + 1) * self.h[axis]
        axes = list(self.axes)
        axes[axis] = faces
        if self.dim == 1:
            return (faces,)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def distance_from(self, x0: Sequence[float]) -> np.ndarray:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if x0.shape != (self.dim,):
            raise ShapeError(f"point {x0} does not match grid dimension {self.dim}")
        sq = sum((c - x) ** 2 for c, x in zip(self.centers, x0))
        return np.sqrt(sq)

    def translated(self, shift: Sequence[float]) -> "Grid":
        shift = np.atleast_1d(shift)
        return Grid(tuple((a + s, b + s) for (a, b), s in zip(self.extents, shift)),
                    self.cells)

    def to_dict(self) -> dict:
        return {"extents": [list(e) for e in self.extents], "cells": list(self.cells)}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        return cls(tuple(tuple(e) for e in data["extents"]), tuple(data["cells"]))


@dataclass(frozen=True)
class DensityField:
    """Cell averages on a grid.  Values are stored read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError(f"values of shape {values.shape} on grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ContractError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def is_admissible(self, rho_max: float) -> bool:
        return bool(self.values.min() >= 0.0 and self.values.max() <= rho_max)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class Trajectory:
    """Snapshots ``fields[j]`` of a density at strictly increasing ``times[j]``."""

    grid: Grid
    times: np.ndarray
    data: np.ndarray  # shape (n_snapshots, *grid.shape)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        data = np.array(self.data, dtype=float)
        if data.shape != (times.size, *self.grid.shape):
            raise ShapeError(f"data of shape {data.shape} does not match "
                             f"{times.size} snapshots on grid {self.grid.shape}")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ContractError("snapshot times must be strictly increasing")
        times.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_fields(cls, times: Sequence[float], fields: Sequence[DensityField]) -> "Trajectory":
        if not fields:
            raise ContractError("a trajectory needs at least one field")
        grid = fields[0].grid
        for f in fields:
            if f.grid != grid:
                raise ShapeError("all fields of a trajectory must share the grid")
        return cls(grid, np.asarray(times), np.stack([f.values for f in fields]))

    def __len__(self) -> int:
        return self.times.size

    def field(self, j: int) -> DensityField:
        return DensityField(self.grid, self.data[j])

    @property
    def fields(self) -> list[DensityField]:
        return [self.field(j) for j in range(len(self))]

    @property
    def masses(self) -> np.ndarray:
        axes = tuple(range(1, self.data.ndim))
        return self.data.sum(axis=axes) * self.grid.cell_volume

    def uniform_spacing(self, rtol: float = 1e-6) -> float:
        """Common snapshot spacing; raises if the spacing is not uniform."""
        if len(self) < 2:
            raise ContractError("need at least two snapshots for a time spacing")
        d = np.diff(self.times)
        if np.max(np.abs(d - d[0])) > rtol * d[0]:
            raise ContractError("snapshot spacing is not uniform")
        return float(d.mean())


def _values(f: ArrayLike) -> np.ndarray:
    return f.values if isinstance(f, DensityField) else np.asarray(f, dtype=float)


def face_gradient(grid: Grid, f: ArrayLike) -> tuple[np.ndarray, ...]:
    """Two-point differences ``(f_{i+1} - f_i) / h`` on every face.

    Boundary faces get zero, which is how the no-flux condition enters.
    """
    f = _values(f)
    if f.shape != grid.shape:
        raise ShapeError(f"field of shape {f.shape} on grid {grid.shape}")
    out = []
    for axis, h in enumerate(grid.h):
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        g = np.pad(np.diff(f, axis=axis) / h, pad)
        out.append(g)
    return tuple(out)


def _check_boundary(fluxes: Sequence[np.ndarray], grid: Grid, atol: float) -> None:
    for axis, F in enumerate(fluxes):
        expected = list(grid.shape)
        expected[axis] += 1
        if F.shape != tuple(expected):
            raise ShapeError(f"face array of shape {F.shape} on axis {axis}, "
                             f"expected {tuple(expected)}")
        lo = np.take(F, 0, axis=axis)
        hi = np.take(F, -1, axis=axis)
        if np.max(np.abs(lo)) > atol or np.max(np.abs(hi)) > atol:
            raise ContractError("boundary faces must carry zero flux")


def divergence(grid: Grid, fluxes: Sequence[np.ndarray], atol: float = 0.0) -> np.ndarray:
    """Cell divergence ``sum_a (F_{i+1/2} - F_{i-1/2}) / h_a`` of face fluxes."""
    fluxes = [np.asarray(F, dtype=float) for F in fluxes]
    if len(fluxes) != grid.dim:
        raise ShapeError("need one face array per axis")
    _check_boundary(fluxes, grid, atol)
    out = np.zeros(grid.shape)
    for axis, (F, h) in enumerate(zip(fluxes, grid.h)):
        out += np.diff(F, axis=axis) / h
    return out


def _pair(a: DensityField, b: DensityField) -> tuple[np.ndarray, np.ndarray]:
    if a.grid != b.grid:
        raise ShapeError("fields live on different grids")
    return a.values, b.values


def l1_distance(a: DensityField, b: DensityField) -> float:
    va, vb = _pair(a, b)
    return float(np.abs(va - vb).sum() * a.grid.cell_volume)


def sup_distance(a: DensityField, b: DensityField) -> float:
    va, vb = _pair(a, b)
    return float(np.abs(va - vb).max())
