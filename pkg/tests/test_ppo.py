import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mms_closure import policy as P
from mms_closure.env import default_config, with_max_steps
from mms_closure.ppo import (
    Adam,
    PpoConfig,
    TransitionBatch,
    closure_episodes,
    collect,
    compute_advantages,
    moving_average,
    ppo_loss_and_grads,
    ppo_update,
    read_training_log,
    train,
    validate,
    validation_set,
)
from mms_closure.rollout import rollout

TOY = dict(width=4, dilations=(1, 2))


def make_batch(rewards, values, dones):
    rewards = np.asarray(rewards, dtype=float)
    T = len(rewards)
    return TransitionBatch(
        obs=np.zeros((T, 3, *rewards.shape[1:])),
        actions=np.zeros((T, 1, *rewards.shape[1:])),
        log_probs=np.zeros_like(rewards),
        rewards=rewards,
        values=np.asarray(values, dtype=float),
        dones=np.asarray(dones),
    )


def test_config_defaults_and_validation():
    cfg = PpoConfig()
    assert cfg.learning_rate == 1e-5 and cfg.entropy_coef == 0.02 and cfg.discount == 1.0
    assert (cfg.epochs, cfg.transitions_per_epoch, cfg.episodes_per_update) == (1000, 2500, 10)
    assert (cfg.batch_size, cfg.repeat_per_collect, cfg.validation_episodes) == (50, 2, 32)
    with pytest.raises(ValueError):
        PpoConfig(batch_size=0)
    with pytest.raises(ValueError):
        PpoConfig(clip_ratio=1.5)
    with pytest.raises(ValueError):
        PpoConfig(learning_rate=-1)


def test_gae_trivial_cases():
    b = compute_advantages(make_batch(np.zeros((4, 3)), np.zeros((4, 3)), [0, 0, 0, 1]), normalize=False)
    assert np.all(b.advantages == 0) and np.all(b.returns == 0)
    b = compute_advantages(make_batch([[2.0]], [[0.5]], [1]), normalize=False)
    assert b.advantages[0, 0] == 1.5 and b.returns[0, 0] == 2.0


def brute_force_gae(r, v, gamma, lam):
    T = len(r)
    adv = np.zeros(T)
    for t in range(T):
        total, weight = 0.0, 1.0
        for k in range(t, T):
            nxt = v[k + 1] if k + 1 < T else 0.0
            total += weight * (r[k] + gamma * nxt - v[k])
            weight *= gamma * lam
        adv[t] = total
    return adv


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.5, 1.0), lam=st.floats(0.0, 1.0))
def test_gae_matches_brute_force(seed, gamma, lam):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=5), rng.normal(size=5)
    b = compute_advantages(make_batch(r[:, None], v[:, None], [0, 0, 0, 0, 1]), gamma, lam, normalize=False)
    np.testing.assert_allclose(b.advantages[:, 0], brute_force_gae(r, v, gamma, lam), rtol=1e-12, atol=1e-12)


def test_gae_lambda_one_is_return_minus_value():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=5), rng.normal(size=5)
    b = compute_advantages(make_batch(r[:, None], v[:, None], [0, 0, 0, 0, 1]), 1.0, 1.0, normalize=False)
    np.testing.assert_allclose(b.advantages[:, 0], np.cumsum(r[::-1])[::-1] - v, atol=1e-12)


def test_gae_does_not_cross_episode_boundaries():
    r = np.array([[1.0], [1.0], [5.0], [7.0]])
    b = compute_advantages(make_batch(r, np.zeros_like(r), [0, 1, 0, 1]), 1.0, 1.0, normalize=False)
    np.testing.assert_array_equal(b.advantages[:, 0], [2.0, 1.0, 12.0, 7.0])


def test_advantage_normalization():
    rng = np.random.default_rng(1)
    b = compute_advantages(make_batch(rng.normal(size=(30, 8)), rng.normal(size=(30, 8)), [0] * 29 + [1]))
    assert abs(b.advantages.mean()) < 1e-6
    assert abs(b.advantages.std() - 1) < 1e-6


def test_collection_is_deterministic_and_bounded():
    cfg = with_max_steps(default_config("burgers1d"), 20)
    params = P.init_params(np.random.default_rng(0), "burgers1d", **TOY)
    runs = [collect(params, closure_episodes(cfg), 5, np.random.default_rng(3)) for _ in range(2)]
    for field in ("obs", "actions", "log_probs", "rewards", "values", "dones"):
        np.testing.assert_array_equal(getattr(runs[0][0], field), getattr(runs[1][0], field))
    assert all(1 <= s.length <= 20 for s in runs[0][1])
    assert sum(s.length for s in runs[0][1]) == len(runs[0][0])


def test_zero_action_policy_collects_zero_rewards():
    cfg = with_max_steps(default_config("burgers1d"), 15)
    params = P.init_params(np.random.default_rng(0), "burgers1d", **TOY)
    head = params.policy_head
    head.weight[...] = 0.0
    head.bias[...] = [0.0, -20.0]
    batch, _ = collect(params, closure_episodes(cfg), 3, np.random.default_rng(0))
    # actions are N(0, e^-20): rewards vanish up to 2 |error| |a|
    assert np.all(np.abs(batch.rewards) < 1e-9)


def test_ratio_is_one_before_update():
    cfg = with_max_steps(default_config("burgers1d"), 10)
    params = P.init_params(np.random.default_rng(0), "burgers1d", **TOY)
    batch, _ = collect(params, closure_episodes(cfg), 3, np.random.default_rng(1))
    out, _ = P.forward(params, batch.obs)
    logp, _ = P.log_prob_and_entropy(out, batch.actions)
    np.testing.assert_allclose(np.exp(logp - batch.log_probs), 1.0, rtol=0, atol=1e-12)


def _toy_batch(seed=0):
    cfg = with_max_steps(default_config("burgers1d"), 6)
    params = P.init_params(np.random.default_rng(seed), "burgers1d", **TOY)
    params.policy_head.weight *= 30  # move the policy away from its init scale
    batch, _ = collect(params, closure_episodes(cfg), 2, np.random.default_rng(seed + 1))
    compute_advantages(batch)
    return params, batch


def test_zero_advantage_gives_zero_policy_gradient():
    params, batch = _toy_batch()
    batch.advantages = np.zeros_like(batch.advantages)
    cfg = PpoConfig(entropy_coef=0.0, value_coef=0.0)
    terms, grads = ppo_loss_and_grads(params, batch, np.arange(len(batch)), cfg)
    assert terms.policy_loss == 0
    assert all(np.all(g == 0) for g in grads)


def test_full_loss_gradient_matches_finite_differences():
    params, batch = _toy_batch(seed=4)
    rng = np.random.default_rng(2)
    # perturb so some ratios fall outside the clip range
    for a in params.arrays():
        a += rng.normal(0, 0.05, a.shape)
    cfg = PpoConfig()
    idx = np.arange(len(batch))
    _, grads = ppo_loss_and_grads(params, batch, idx, cfg)
    h = 1e-5
    worst = 0.0
    for array, grad in zip(params.arrays(), grads):
        for i in np.ndindex(array.shape):
            old = array[i]
            array[i] = old + h
            up = ppo_loss_and_grads(params, batch, idx, cfg)[0].loss
            array[i] = old - h
            down = ppo_loss_and_grads(params, batch, idx, cfg)[0].loss
            array[i] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / (abs(grad[i]) + 1e-8))
    assert worst < 1e-4


def test_zero_learning_rate_leaves_params_unchanged():
    params, batch = _toy_batch()
    before = params.copy()
    cfg = PpoConfig(learning_rate=0.0, batch_size=4)
    ppo_update(params, batch, cfg, Adam(params, 0.0), np.random.default_rng(0))
    for a, b in zip(params.arrays(), before.arrays()):
        np.testing.assert_array_equal(a, b)


def test_bandit_recovers_optimum(bandit_factory):
    rng = np.random.default_rng(0)
    params = P.init_params(rng, "burgers1d", width=8, dilations=(1, 1))
    cfg = PpoConfig(learning_rate=1e-3)
    opt = Adam(params, cfg.learning_rate)
    for _ in range(500):
        batch, _ = collect(params, bandit_factory, 10, rng)
        compute_advantages(batch, cfg.discount, cfg.gae_lambda)
        ppo_update(params, batch, cfg, opt, rng)
    out, _ = P.forward(params, np.ones((3, 1)))
    assert abs(out.mean.item() - 0.3) <= 0.05


def test_moving_average():
    np.testing.assert_allclose(moving_average([1, 2, 3, 4], window=2), [1, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(moving_average([5.0], window=10), [5.0])


def test_validation_score_properties():
    cfg = with_max_steps(default_config("burgers1d"), 10)
    specs, refs = validation_set(cfg, 3, seed=0)
    params = P.init_params(np.random.default_rng(0), "burgers1d", **TOY)
    assert validate(params, cfg, specs, refs) == validate(params, cfg, specs, refs)
    baseline = validate(None, cfg, specs, refs)
    assert baseline > 0
    zero = params.copy()
    zero.policy_head.weight[...] = 0.0
    zero.policy_head.bias[...] = 0.0
    assert validate(zero, cfg, specs, refs) == baseline
    res = rollout(None, cfg, specs, forced=False, references=refs)
    assert baseline == pytest.approx(np.mean(res.mse.sum(axis=1)))


def test_smoke_training(tmp_path):
    episode_cfg = with_max_steps(default_config("burgers1d"), 20)
    cfg = PpoConfig(epochs=2, transitions_per_epoch=100, validation_episodes=2)
    best, log = train(cfg, episode_cfg, seed=1, output_dir=tmp_path)
    for name in ("epoch_1.ckpt", "epoch_2.ckpt", "best.ckpt", "training_log.csv"):
        assert (tmp_path / name).exists()
    loaded = P.load_checkpoint(tmp_path / "best.ckpt", kind="burgers1d")
    for a, b in zip(loaded.arrays(), best.arrays()):
        np.testing.assert_array_equal(a, b)
    assert log.best_score == min(log.epoch_scores)
    per_epoch = [sum(r["episode_len"] for r in log.rows if r["epoch"] == e) for e in (1, 2)]
    assert all(100 <= n < 100 + 20 for n in per_epoch)
    reread = read_training_log(tmp_path / "training_log.csv")
    assert reread.rows == log.rows
    header = (tmp_path / "training_log.csv").read_text().splitlines()[0]
    assert header == "epoch,episode_idx,reward_sum,episode_len,validation_score"
