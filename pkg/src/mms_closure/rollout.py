"""Deterministic lock-step rollouts used by validation and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ClosureEnv, EpisodeConfig
from .policy import NetworkParams, forward


@dataclass
class RolloutResult:
    mse: np.ndarray  # (samples, steps + 1), NaN after a blow-up
    blew_up: np.ndarray  # (samples,) bool
    snapshots: dict  # step -> (samples, components, *space) fields
    references: dict  # step -> reference fields


def rollout(
    params: NetworkParams | None,
    config: EpisodeConfig,
    specs,
    forced: bool = True,
    references=None,
    snapshot_steps=(),
) -> RolloutResult:
    """Run every sample for ``config.max_steps`` steps with the mean action.

    ``params=None`` runs the bare coarse solver (zero action). The MAE
    threshold is not enforced; a non-finite state ends that sample only.
    """
    envs = [ClosureEnv(config, enforce_threshold=False) for _ in specs]
    refs = references if references is not None else [None] * len(specs)
    obs = np.stack([env.reset(s, forced, r) for env, s, r in zip(envs, specs, refs)])
    steps = config.max_steps
    mse = np.full((len(specs), steps + 1), np.nan)
    mse[:, 0] = [np.mean((env.state - env.reference_at(0)) ** 2) for env in envs]
    blew_up = np.zeros(len(specs), dtype=bool)
    snapshot_steps = set(snapshot_steps)
    snapshots, ref_snaps = {}, {}

    def grab(n):
        if n in snapshot_steps:
            snapshots[n] = np.stack([env.state for env in envs])
            ref_snaps[n] = np.stack([env.reference_at(n) for env in envs])

    grab(0)
    for n in range(steps):
        active = np.flatnonzero(~blew_up)
        if active.size == 0:
            break
        if params is None:
            actions = np.zeros((active.size,) + envs[0].state.shape)
        else:
            actions = forward(params, obs[active])[0].mean
        for k, i in enumerate(active):
            outcome = envs[i].step(actions[k])
            obs[i] = outcome.observation
            if outcome.info["blowup"]:
                blew_up[i] = True
            else:
                mse[i, n + 1] = outcome.info["mse"]
        grab(n + 1)
    return RolloutResult(mse, blew_up, snapshots, ref_snaps)
