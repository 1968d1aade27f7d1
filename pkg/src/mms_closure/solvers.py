"""Explicit first-order finite-difference steppers on periodic grids.

Upwind differences for advection terms (direction picked by the sign of the
advecting velocity at the cell), central second differences for diffusion,
forward Euler in time. All steppers accept extra leading batch axes.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid, Grid1D, Grid2D


class BlowUpError(FloatingPointError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def _differences(f: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled periodic backward and forward differences along ``axis``."""
    back = f - np.roll(f, 1, axis=axis)
    return back, np.roll(back, -1, axis=axis)


def _upwind(f: np.ndarray, vel: np.ndarray, h: float, axis: int) -> np.ndarray:
    back, fwd = _differences(f, axis)
    return np.where(vel > 0, back, fwd) / h


def _advect_diffuse(f: np.ndarray, vel: np.ndarray, nu: float, h: float, axis: int) -> np.ndarray:
    """-vel * upwind(f) + nu * second(f), sharing the difference arrays."""
    back, fwd = _differences(f, axis)
    return -vel * np.where(vel > 0, back, fwd) / h + nu * (fwd - back) / (h * h)


def _quiet(fn):
    """Overflow is detected explicitly by ``_finite``; silence numpy's warnings."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with np.errstate(over="ignore", invalid="ignore"):
            return fn(*args, **kwargs)

    return wrapper


def _finite(out: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite value in solver output")
    return out


@_quiet
def step_burgers_1d(psi, nu: float, grid: Grid1D, forcing=None) -> np.ndarray:
    dx, dt = grid.dx, grid.dt
    rhs = _advect_diffuse(psi, psi, nu, dx, -1)
    if forcing is not None:
        rhs = rhs + forcing
    return _finite(psi + dt * rhs)


@_quiet
def step_burgers_2d(field, nu: float, grid: Grid2D, forcing=None) -> np.ndarray:
    """``field`` has shape (..., 2, nx, ny) holding (u, v)."""
    u, v = field[..., 0, :, :], field[..., 1, :, :]
    dx, dy, dt = grid.dx, grid.dy, grid.dt
    out = np.empty_like(field)
    for k, w in enumerate((u, v)):
        rhs = _advect_diffuse(w, u, nu, dx, -2) + _advect_diffuse(w, v, nu, dy, -1)
        if forcing is not None:
            rhs = rhs + forcing[..., k, :, :]
        out[..., k, :, :] = w + dt * rhs
    return _finite(out)


@_quiet
def step_advection_2d(psi, velocity, grid: Grid2D, forcing=None) -> np.ndarray:
    """``psi`` has shape (..., nx, ny); ``velocity`` is (2, nx, ny)."""
    u, v = velocity[0], velocity[1]
    rhs = -u * _upwind(psi, u, grid.dx, -2) - v * _upwind(psi, v, grid.dy, -1)
    if forcing is not None:
        rhs = rhs + forcing
    return _finite(psi + grid.dt * rhs)


@dataclass(frozen=True)
class Burgers1D:
    nu: float

    name = "burgers1d"
    ndim = 1
    n_components = 1

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError("nu must be non-negative")

    def step(self, state, grid: Grid1D, forcing=None):
        f = None if forcing is None else forcing[..., 0, :]
        return step_burgers_1d(state[..., 0, :], self.nu, grid, f)[..., None, :]

    def speeds(self, state):
        return [np.abs(state[..., 0, :])]


@dataclass(frozen=True)
class Burgers2D:
    nu: float

    name = "burgers2d"
    ndim = 2
    n_components = 2

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValueError("nu must be non-negative")

    def step(self, state, grid: Grid2D, forcing=None):
        return step_burgers_2d(state, self.nu, grid, forcing)

    def speeds(self, state):
        return [np.abs(state[..., 0, :, :]), np.abs(state[..., 1, :, :])]


@dataclass(frozen=True)
class Advection2D:
    """Advection by u = x + alpha, v = y + beta, evaluated on whichever grid steps."""

    alpha: float = 0.0
    beta: float = 0.0

    name = "advection2d"
    ndim = 2
    n_components = 1
    nu = 0.0

    def velocity(self, grid: Grid2D) -> np.ndarray:
        x, y = grid.coords()
        return np.stack([x + self.alpha, y + self.beta])

    def step(self, state, grid: Grid2D, forcing=None):
        f = None if forcing is None else forcing[..., 0, :, :]
        vel = _velocity_cache(self, grid)
        return step_advection_2d(state[..., 0, :, :], vel, grid, f)[..., None, :, :]

    def speeds(self, state):
        raise NotImplementedError  # velocity depends on the grid; see cfl_check


_VEL_CACHE: dict = {}


def _velocity_cache(pde: Advection2D, grid: Grid2D) -> np.ndarray:
    key = (pde.alpha, pde.beta, grid.nx, grid.ny)
    vel = _VEL_CACHE.get(key)
    if vel is None:
        if len(_VEL_CACHE) > 256:
            _VEL_CACHE.clear()
        vel = _VEL_CACHE[key] = pde.velocity(grid)
    return vel


PdeKind = Burgers1D | Burgers2D | Advection2D


def make_pde(kind: str, nu: float | None = None, spec=None) -> PdeKind:
    """Build the PDE for ``kind``; advection takes its velocity offsets from ``spec``."""
    if kind == "burgers1d":
        return Burgers1D(nu)
    if kind == "burgers2d":
        return Burgers2D(nu)
    if kind == "advection2d":
        return Advection2D(spec.alpha, spec.beta) if spec is not None else Advection2D()
    raise ValueError(f"unknown PDE kind {kind!r}")


def run_trajectory(
    pde: PdeKind,
    initial: np.ndarray,
    grid: Grid,
    steps: int,
    forcing: Callable[[float], np.ndarray] | None = None,
    save_every: int = 1,
) -> np.ndarray:
    """Integrate ``steps`` steps and return snapshots every ``save_every`` steps.

    ``forcing(t)`` is called at each step's start time ``t_n = n * dt``.
    The result has ``steps // save_every + 1`` entries, the first being
    ``initial``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    state = np.array(initial, dtype=np.float64)
    snapshots = [state.copy()]
    for n in range(steps):
        f = None if forcing is None else forcing(n * grid.dt)
        try:
            state = pde.step(state, grid, f)
        except BlowUpError as err:
            raise BlowUpError(f"blow-up at step {n + 1}", step=n + 1) from err
        if (n + 1) % save_every == 0:
            snapshots.append(state.copy())
    return np.stack(snapshots)


@dataclass(frozen=True)
class CflReport:
    convective: float
    diffusion: float
    max_cfl: float
    stable: bool


def cfl_check(pde: PdeKind, state: np.ndarray, grid: Grid) -> CflReport:
    """Advisory Courant numbers for the explicit upwind/central scheme.

    ``convective`` sums max |velocity| dt/h over axes, ``diffusion`` sums
    2 nu dt / h^2 over axes. The scheme is monotone (hence stable) when
    their sum ``max_cfl`` is at most 1.
    """
    spacing = grid.spacing
    if isinstance(pde, Advection2D):
        speeds = [np.abs(c) for c in pde.velocity(grid)]
    else:
        speeds = pde.speeds(np.asarray(state))
    convective = sum(float(np.max(s, initial=0.0)) * grid.dt / h for s, h in zip(speeds, spacing))
    diffusion = sum(2.0 * pde.nu * grid.dt / h**2 for h in spacing)
    total = convective + diffusion
    return CflReport(convective, diffusion, total, total <= 1.0)
