"""Periodic grids, fine-to-coarse subsampling and error metrics.

Fields are plain float64 numpy arrays. A 1D field has shape ``(n,)`` with
``values[i]`` at ``x_i = i * dx``; a 2D field has shape ``(nx, ny)`` with
``values[i, j]`` at ``(x_i, y_j)``. Vector fields stack their components on
a leading axis, e.g. ``(2, nx, ny)`` for ``(u, v)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two fields or a field and a factor do not fit together."""


@dataclass(frozen=True)
class Grid1D:
    n_points: int
    dt: float
    domain_length: float = 1.0

    def __post_init__(self):
        if self.n_points < 4:
            raise ValueError(f"n_points must be >= 4, got {self.n_points}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.domain_length != 1.0:
            raise ValueError("domain_length is fixed at 1.0")

    ndim = 1

    @property
    def dx(self) -> float:
        return self.domain_length / self.n_points

    @property
    def shape(self) -> tuple[int]:
        return (self.n_points,)

    @property
    def spacing(self) -> tuple[float]:
        return (self.dx,)

    def coords(self) -> tuple[np.ndarray]:
        return (np.arange(self.n_points) * self.dx,)

    def coarsen(self, factor: int, dt: float) -> Grid1D:
        if self.n_points % factor:
            raise GridMismatchError(f"{self.n_points} points not divisible by {factor}")
        return Grid1D(self.n_points // factor, dt)


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    dt: float

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"nx, ny must be >= 4, got {self.nx}, {self.ny}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    ndim = 2

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dy(self) -> float:
        return 1.0 / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.dx, self.dy)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return tuple(np.meshgrid(x, y, indexing="ij"))

    def coarsen(self, factor: int, dt: float) -> Grid2D:
        if self.nx % factor or self.ny % factor:
            raise GridMismatchError(f"{self.nx}x{self.ny} not divisible by {factor}")
        return Grid2D(self.nx // factor, self.ny // factor, dt)


Grid = Grid1D | Grid2D


def periodic_index(i: int, n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return i % n


def subsample_1d(fine: np.ndarray, factor: int) -> np.ndarray:
    """Keep every ``factor``-th point of the last axis, starting at index 0."""
    fine = np.asarray(fine, dtype=np.float64)
    if factor < 1 or fine.shape[-1] % factor:
        raise GridMismatchError(f"length {fine.shape[-1]} not divisible by {factor}")
    return fine[..., ::factor].copy()


def subsample_2d(fine: np.ndarray, factor: int) -> np.ndarray:
    """Strided restriction of the last two axes with the same factor."""
    fine = np.asarray(fine, dtype=np.float64)
    nx, ny = fine.shape[-2:]
    if factor < 1 or nx % factor or ny % factor:
        raise GridMismatchError(f"shape {nx}x{ny} not divisible by {factor}")
    return fine[..., ::factor, ::factor].copy()


def subsample(fine: np.ndarray, factor: int, ndim: int) -> np.ndarray:
    return subsample_1d(fine, factor) if ndim == 1 else subsample_2d(fine, factor)


def _check_same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GridMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def mae(a, b) -> float:
    a, b = _check_same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def cumulative_error(series) -> np.ndarray:
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("series must be nonempty")
    return np.cumsum(series)


def write_field_csv(path: str | Path, field: np.ndarray) -> None:
    """1D: one value per line. 2D: a line holding nx, then row-major values."""
    field = np.asarray(field, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        if field.ndim == 2:
            fh.write(f"{field.shape[0]}\n")
        elif field.ndim != 1:
            raise GridMismatchError(f"cannot serialize a field of rank {field.ndim}")
        for value in field.ravel():
            fh.write(f"{float(value)!r}\n")


def read_field_csv(path: str | Path, ndim: int = 1) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [row[0] for row in csv.reader(fh) if row]
    if ndim == 1:
        return np.array([float(r) for r in rows])
    nx = int(rows[0])
    values = np.array([float(r) for r in rows[1:]])
    if values.size % nx:
        raise GridMismatchError(f"{values.size} values cannot form {nx} rows")
    return values.reshape(nx, -1)
