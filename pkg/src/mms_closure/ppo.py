"""Proximal policy optimization over per-cell agents.

Every grid cell is an agent with its own reward, value, log-probability and
advantage; all cells share one network. Losses average over cells and
transitions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .env import ClosureEnv, EpisodeConfig, fine_references
from .mms import sample_spec
from .policy import (
    NetworkParams,
    backward,
    forward,
    init_params,
    log_prob_and_entropy,
    sample_action,
    save_checkpoint,
)
from .rollout import rollout

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "episode_idx", "reward_sum", "episode_len", "validation_score"]


@dataclass
class PpoConfig:
    learning_rate: float = 1e-5
    entropy_coef: float = 0.02
    discount: float = 1.0
    epochs: int = 1000
    transitions_per_epoch: int = 2500
    episodes_per_update: int = 10
    batch_size: int = 50
    repeat_per_collect: int = 2
    validation_episodes: int = 32
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    max_grad_norm: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("learning_rate", "entropy_coef", "value_coef"):
                if value < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {value}")
            elif not value > 0:
                raise ValueError(f"{f.name} must be positive, got {value}")
        if not 0 < self.clip_ratio < 1:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if self.discount > 1 or self.gae_lambda > 1:
            raise ValueError("discount and gae_lambda must be <= 1")


@dataclass
class TransitionBatch:
    obs: np.ndarray  # (T, C, *space)
    actions: np.ndarray  # (T, m, *space)
    log_probs: np.ndarray  # (T, *space)
    rewards: np.ndarray  # (T, *space)
    values: np.ndarray  # (T, *space)
    dones: np.ndarray  # (T,) True on the last transition of an episode
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self):
        return len(self.dones)


@dataclass
class EpisodeStats:
    reward_sum: float  # sum over steps of the cell-mean reward
    length: int
    terminated: bool


class Adam:
    def __init__(self, params: NetworkParams, lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: NetworkParams, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for a, g, m, v in zip(params.arrays(), grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self):
        return self.t, [m.copy() for m in self.m], [v.copy() for v in self.v]

    def restore(self, state):
        self.t, m, v = state
        for dst, src in zip(self.m + self.v, m + v):
            dst[...] = src


EpisodeFactory = Callable[[np.random.Generator], tuple[object, np.ndarray]]


def closure_episodes(config: EpisodeConfig) -> EpisodeFactory:
    """Fresh forced episodes with a newly sampled manufactured solution each."""

    def make(rng):
        env = ClosureEnv(config)
        return env, env.reset(sample_spec(config.kind, rng))

    return make


def collect(
    params: NetworkParams,
    make_episode: EpisodeFactory,
    n_episodes: int,
    rng: np.random.Generator,
    max_transitions: int | None = None,
) -> tuple[TransitionBatch, list[EpisodeStats]]:
    """Run complete episodes with the stochastic policy.

    Stops after ``n_episodes`` episodes or, if given, as soon as an episode
    brings the count to ``max_transitions``.
    """
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    obs_l, act_l, logp_l, rew_l, val_l, done_l = [], [], [], [], [], []
    stats = []
    total = 0
    for _ in range(n_episodes):
        env, obs = make_episode(rng)
        reward_sum, length = 0.0, 0
        while True:
            out, value = forward(params, obs)
            action, logp = sample_action(out, rng)
            outcome = env.step(action[0])
            obs_l.append(obs)
            act_l.append(action[0])
            logp_l.append(logp[0])
            val_l.append(value[0])
            rew_l.append(outcome.reward)
            done = outcome.terminated or outcome.truncated
            done_l.append(done)
            reward_sum += float(np.mean(outcome.reward))
            length += 1
            obs = outcome.observation
            if done:
                break
        stats.append(EpisodeStats(reward_sum, length, outcome.terminated))
        total += length
        if max_transitions is not None and total >= max_transitions:
            break
    batch = TransitionBatch(
        np.stack(obs_l),
        np.stack(act_l),
        np.stack(logp_l),
        np.stack(rew_l),
        np.stack(val_l),
        np.array(done_l),
    )
    return batch, stats


def compute_advantages(batch: TransitionBatch, discount: float = 1.0, gae_lambda: float = 0.95, normalize: bool = True):
    """Per-cell GAE with zero bootstrap at every episode end.

    Returns are advantages plus values (before normalization). Normalized
    advantages have zero mean and unit variance over the whole batch.
    """
    T = len(batch)
    adv = np.zeros_like(batch.rewards)
    running = np.zeros_like(batch.rewards[0])
    for t in range(T - 1, -1, -1):
        if batch.dones[t]:
            next_value = 0.0
            running = np.zeros_like(running)
        else:
            next_value = batch.values[t + 1]
        delta = batch.rewards[t] + discount * next_value - batch.values[t]
        running = delta + discount * gae_lambda * running
        adv[t] = running
    batch.returns = adv + batch.values
    if normalize and adv.size > 1:
        std = adv.std()
        adv = adv - adv.mean()
        if std > 0:
            adv = adv / std
    batch.advantages = adv
    return batch


@dataclass
class LossTerms:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def ppo_loss_and_grads(params: NetworkParams, batch: TransitionBatch, idx, config: PpoConfig):
    """Clipped-surrogate + value + entropy loss on ``batch[idx]`` and its exact gradients."""
    obs, act = batch.obs[idx], batch.actions[idx]
    old_logp, adv, ret = batch.log_probs[idx], batch.advantages[idx], batch.returns[idx]
    out, value, cache = forward(params, obs, keep_cache=True)
    logp, ent = log_prob_and_entropy(out, act)
    n = logp.size
    eps = config.clip_ratio

    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1 - eps, 1 + eps)
    surr1, surr2 = ratio * adv, clipped * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_loss = np.mean((value - ret) ** 2)
    entropy = np.mean(ent)
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy

    inside = (ratio > 1 - eps) & (ratio < 1 + eps)
    d_ratio = np.where(surr1 <= surr2, adv, adv * inside)
    d_logp = (-d_ratio * ratio / n)[:, None]
    inv_var = np.exp(-2 * out.log_std)
    diff = act - out.mean
    d_mean = d_logp * diff * inv_var
    d_log_std = d_logp * (diff * diff * inv_var - 1.0) - config.entropy_coef / n
    d_value = config.value_coef * 2.0 * (value - ret) / n
    grads = backward(params, cache, d_mean, d_log_std, d_value)
    terms = LossTerms(float(loss), float(policy_loss), float(value_loss), float(entropy), float(np.mean(~inside)))
    return terms, grads


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads:
            g *= scale
    return norm


def ppo_update(
    params: NetworkParams,
    batch: TransitionBatch,
    config: PpoConfig,
    optimizer: Adam,
    rng: np.random.Generator,
) -> list[LossTerms]:
    """In-place update: ``repeat_per_collect`` passes of shuffled minibatches.

    A non-finite loss or gradient restores the parameters and optimizer state
    from before the update and raises ``FloatingPointError``.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    backup = params.copy()
    opt_state = optimizer.state()
    history = []
    for _ in range(config.repeat_per_collect):
        order = rng.permutation(len(batch))
        for start in range(0, len(batch), config.batch_size):
            idx = order[start : start + config.batch_size]
            terms, grads = ppo_loss_and_grads(params, batch, idx, config)
            if not np.isfinite(terms.loss) or not all(np.all(np.isfinite(g)) for g in grads):
                for dst, src in zip(params.arrays(), backup.arrays()):
                    dst[...] = src
                optimizer.restore(opt_state)
                raise FloatingPointError("non-finite PPO loss; update rolled back")
            clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(params, grads)
            history.append(terms)
    return history


def validation_set(config: EpisodeConfig, n: int, seed: int):
    """Fixed homogeneous validation problems and their fine-grid references."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11D]))
    specs = [sample_spec(config.kind, rng) for _ in range(n)]
    return specs, fine_references(config, specs)


def validate(params: NetworkParams | None, config: EpisodeConfig, specs, references) -> float:
    """Mean over episodes of the cumulative MSE against the fine solution (lower is better)."""
    result = rollout(params, config, specs, forced=False, references=references)
    if result.blew_up.any():
        return float("inf")
    return float(np.mean(np.sum(result.mse, axis=1)))


def moving_average(values, window: int = 10) -> np.ndarray:
    """Trailing mean over up to ``window`` most recent values."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    for i in range(len(values)):
        lo = max(0, i + 1 - window)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    epoch_scores: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    best_score: float = float("inf")

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r["reward_sum"] for r in self.rows])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([r["episode_len"] for r in self.rows])

    def reward_moving_average(self, window: int = 10) -> np.ndarray:
        return moving_average(self.rewards, window)

    def length_moving_average(self, window: int = 10) -> np.ndarray:
        return moving_average(self.lengths, window)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(row[k]) for k in LOG_FIELDS})


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else value


def read_training_log(path: str | Path) -> TrainingLog:
    log_ = TrainingLog()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            log_.rows.append(
                {
                    "epoch": int(row["epoch"]),
                    "episode_idx": int(row["episode_idx"]),
                    "reward_sum": float(row["reward_sum"]),
                    "episode_len": int(row["episode_len"]),
                    "validation_score": float(row["validation_score"]),
                }
            )
    return log_


def train(
    config: PpoConfig,
    episode_config: EpisodeConfig,
    seed: int,
    output_dir: str | Path,
    checkpoint_every: int = 1,
    initial_params: NetworkParams | None = None,
) -> tuple[NetworkParams, TrainingLog]:
    """Train from scratch on forced problems; keep the best homogeneous validation score.

    Writes ``epoch_<k>.ckpt`` every ``checkpoint_every`` epochs, ``best.ckpt``
    and ``training_log.csv`` into ``output_dir``.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).spawn(3)
    init_rng, collect_rng, update_rng = (np.random.default_rng(s) for s in seeds)
    params = initial_params.copy() if initial_params is not None else init_params(init_rng, episode_config.kind)
    optimizer = Adam(params, config.learning_rate)
    make_episode = closure_episodes(episode_config)

    log.info("building %d validation references", config.validation_episodes)
    val_specs, val_refs = validation_set(episode_config, config.validation_episodes, seed)

    training_log = TrainingLog()
    best = params.copy()
    episode_idx = 0
    for epoch in range(1, config.epochs + 1):
        consumed = 0
        epoch_rows = []
        while consumed < config.transitions_per_epoch:
            batch, stats = collect(
                params,
                make_episode,
                config.episodes_per_update,
                collect_rng,
                max_transitions=config.transitions_per_epoch - consumed,
            )
            consumed += len(batch)
            compute_advantages(batch, config.discount, config.gae_lambda)
            try:
                ppo_update(params, batch, config, optimizer, update_rng)
            except FloatingPointError:
                log.warning("epoch %d: skipped an update with a non-finite loss", epoch)
            for s in stats:
                epoch_rows.append(
                    {"epoch": epoch, "episode_idx": episode_idx, "reward_sum": s.reward_sum, "episode_len": s.length}
                )
                episode_idx += 1

        score = validate(params, episode_config, val_specs, val_refs)
        for row in epoch_rows:
            row["validation_score"] = score
        training_log.rows.extend(epoch_rows)
        training_log.epoch_scores.append(score)
        if score < training_log.best_score or training_log.best_epoch is None:
            training_log.best_score, training_log.best_epoch = score, epoch
            best = params.copy()
            save_checkpoint(best, out / "best.ckpt")
        if epoch % checkpoint_every == 0 or epoch == config.epochs:
            save_checkpoint(params, out / f"epoch_{epoch}.ckpt")
        lengths = [r["episode_len"] for r in epoch_rows]
        rewards = [r["reward_sum"] for r in epoch_rows]
        log.info(
            "epoch %d: %d episodes, mean length %.1f, mean reward %.3e, validation %.4e",
            epoch, len(epoch_rows), np.mean(lengths), np.mean(rewards), score,
        )
        training_log.write_csv(out / "training_log.csv")
    return best, training_log

