"""Closure environment: a coarse solver whose every step is corrected per cell.

One step advances the coarse field with the solver (forced by the MMS term
during training), adds the agent's action to the result, and rewards each
cell by how much the action reduced its squared error against the reference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import grid as G
from .grid import Grid, Grid1D, Grid2D
from .solvers import BlowUpError, make_pde, run_trajectory

NORMALIZATION_FLOOR = 1e-12

OBS_CHANNELS = {"burgers1d": 3, "burgers2d": 6, "advection2d": 5}
ACTION_CHANNELS = {"burgers1d": 1, "burgers2d": 2, "advection2d": 1}


@dataclass(frozen=True)
class EpisodeConfig:
    kind: str
    coarse: Grid
    fine: Grid
    nu: float | None
    mae_threshold: float
    max_steps: int = 200

    def __post_init__(self):
        if self.kind not in OBS_CHANNELS:
            raise ValueError(f"unknown PDE kind {self.kind!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.mae_threshold > 0:
            raise ValueError("mae_threshold must be positive")
        if self.kind != "advection2d" and not (self.nu and self.nu > 0):
            raise ValueError("nu must be positive for Burgers problems")
        if self.coarse.ndim != self.fine.ndim:
            raise G.GridMismatchError("coarse and fine grids differ in dimension")
        if self.coarse.shape[0] * self.space_factor != self.fine.shape[0]:
            raise G.GridMismatchError("fine grid is not an integer refinement of the coarse grid")

    @property
    def ndim(self) -> int:
        return self.coarse.ndim

    @property
    def space_factor(self) -> int:
        return self.fine.shape[0] // self.coarse.shape[0]

    @property
    def time_factor(self) -> int:
        ratio = self.coarse.dt / self.fine.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise G.GridMismatchError("coarse dt is not a multiple of fine dt")
        return round(ratio)

    @property
    def obs_channels(self) -> int:
        return OBS_CHANNELS[self.kind]

    @property
    def action_channels(self) -> int:
        return ACTION_CHANNELS[self.kind]


def default_config(kind: str) -> EpisodeConfig:
    if kind == "burgers1d":
        return EpisodeConfig(kind, Grid1D(64, 5e-3), Grid1D(2048, 1e-5), 1e-2, 2e-2)
    if kind == "burgers2d":
        return EpisodeConfig(kind, Grid2D(32, 32, 5e-3), Grid2D(128, 128, 1e-4), 5e-3, 1e-1)
    if kind == "advection2d":
        return EpisodeConfig(kind, Grid2D(32, 32, 5e-3), Grid2D(128, 128, 1e-4), None, 5e-2)
    raise ValueError(f"unknown PDE kind {kind!r}")


class AnalyticReference:
    """Exact manufactured solution sampled at the coarse points."""

    def __init__(self, spec, grid: Grid):
        self.spec = spec
        self.grid = grid

    def __call__(self, n: int) -> np.ndarray:
        return self.spec.solution_field(self.grid, n * self.grid.dt)


class FineReference:
    """Subsampled fine-grid snapshots, one per coarse step."""

    def __init__(self, snapshots: np.ndarray):
        self.snapshots = np.asarray(snapshots)
        self.snapshots.setflags(write=False)

    def __call__(self, n: int) -> np.ndarray:
        if n >= len(self.snapshots):
            raise IndexError(f"no fine-grid snapshot cached for step {n}")
        return self.snapshots[n]


def fine_reference(config: EpisodeConfig, spec, steps: int | None = None) -> FineReference:
    """Solve the homogeneous PDE on the fine grid from the MMS initial state."""
    return fine_references(config, [spec], steps)[0]


def fine_references(config: EpisodeConfig, specs, steps: int | None = None) -> list[FineReference]:
    """Fine solves for several initial conditions; Burgers problems are batched."""
    steps = config.max_steps if steps is None else steps
    dt_factor, d = config.time_factor, config.space_factor
    if config.kind == "advection2d":
        batches = [[s] for s in specs]
    else:
        batches = [list(specs)]
    out = []
    for batch in batches:
        pde = make_pde(config.kind, config.nu, batch[0])
        initial = np.stack([s.solution_field(config.fine, 0.0) for s in batch])
        traj = run_trajectory(pde, initial, config.fine, steps * dt_factor, save_every=dt_factor)
        coarse = G.subsample(traj, d, config.ndim)
        out.extend(FineReference(coarse[:, b]) for b in range(len(batch)))
    return out


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: np.ndarray
    terminated: bool
    truncated: bool
    info: dict = field(default_factory=dict)


class ClosureEnv:
    """Single-owner mutable environment over one coarse grid.

    ``reset(spec)`` starts a forced (in-distribution) episode referenced to
    the analytic solution. ``reset(spec, forced=False, reference=ref)``
    starts a homogeneous episode referenced to a cached fine solve.
    """

    def __init__(self, config: EpisodeConfig, enforce_threshold: bool = True):
        self.config = config
        self.enforce_threshold = enforce_threshold
        self.grid = config.coarse
        self.history: list[dict] = []
        self.state = None

    def reset(self, spec, forced: bool = True, reference=None) -> np.ndarray:
        if not forced and reference is None:
            raise ValueError("homogeneous episodes need a fine-grid reference")
        self.spec = spec
        self.forced = forced
        self.pde = make_pde(self.config.kind, self.config.nu, spec)
        self.reference = reference if reference is not None else AnalyticReference(spec, self.grid)
        self.state = np.array(self.reference(0), dtype=np.float64)
        self.prev = self.state.copy()
        self.n = 0
        self.done = False
        self.history = []
        if self.config.kind == "advection2d":
            self._velocity = self.pde.velocity(self.grid)
        return self.build_observation()

    @property
    def t(self) -> float:
        return self.n * self.grid.dt

    def forcing(self, n: int) -> np.ndarray | None:
        if not self.forced:
            return None
        return self.spec.forcing_field(self.grid, n * self.grid.dt, self.config.nu)

    def reference_at(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.config.max_steps:
            raise IndexError(f"step {n} outside the episode")
        return self.reference(n)

    def build_observation(self) -> np.ndarray:
        f = self.forcing(self.n)
        if f is None:
            f = np.zeros_like(self.state)
        else:
            peak = np.max(np.abs(f))
            f = f / peak if peak >= NORMALIZATION_FLOOR else np.zeros_like(f)
        parts = [f, self.prev, self.state]
        if self.config.kind == "advection2d":
            parts.append(self._velocity)
        return np.concatenate(parts, axis=0)

    def step(self, action: np.ndarray) -> StepOutcome:
        if self.state is None or self.done:
            raise RuntimeError("call reset() before step()")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != self.state.shape:
            raise G.GridMismatchError(f"action shape {action.shape} != field shape {self.state.shape}")
        if not np.all(np.isfinite(action)):
            raise ValueError("action contains non-finite values")

        ref = self.reference_at(self.n + 1)
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                candidate = self.pde.step(self.state, self.grid, self.forcing(self.n))
            except BlowUpError:
                candidate = None
            post = None if candidate is None else candidate + action
            reward = None if post is None else np.sum((ref - candidate) ** 2 - (ref - post) ** 2, axis=0)
        if reward is None or not (np.all(np.isfinite(post)) and np.all(np.isfinite(reward))):
            # overflowing errors count as a blow-up as well
            self.done = True
            reward = np.zeros(self.state.shape[1:])
            info = {"mae": np.inf, "mse": np.inf, "blowup": True, "step": self.n + 1}
            self._record(info, reward)
            return StepOutcome(self.build_observation(), reward, True, False, info)

        self.prev, self.state = self.state, post
        self.n += 1
        err_mae, err_mse = G.mae(post, ref), G.mse(post, ref)
        terminated = bool(self.enforce_threshold and err_mae > self.config.mae_threshold)
        truncated = not terminated and self.n >= self.config.max_steps
        self.done = terminated or truncated
        info = {"mae": err_mae, "mse": err_mse, "blowup": False, "step": self.n}
        self._record(info, reward)
        return StepOutcome(self.build_observation(), reward, terminated, truncated, info)

    def _record(self, info, reward):
        self.history.append(
            {
                "step": info["step"],
                "t": info["step"] * self.grid.dt,
                "mae": info["mae"],
                "mse": info["mse"],
                "mean_reward": float(np.mean(reward)),
            }
        )

    def write_episode_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "t", "mae", "mse", "mean_reward"])
            writer.writeheader()
            writer.writerows(self.history)


def with_max_steps(config: EpisodeConfig, max_steps: int) -> EpisodeConfig:
    return replace(config, max_steps=max_steps)
