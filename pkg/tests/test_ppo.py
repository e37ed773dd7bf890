import csv

import numpy as np
import pytest

from gradcheck import fresh, mini_batch
from oracles import discounted_advantages
from xdistill.losses import Adam, LossCoefficients, loss_and_grad
from xdistill.policy import PolicyConfig, init_params
from xdistill.ppo import (PPOConfig, RolloutError, Trainer, collect_rollouts, compute_gae, gae,
                          ppo_update)
from xdistill.world import SurrogateWorld, WorldConfig

SMALL = PolicyConfig(trunk=(16, 16), head=(16,), critic=(16, 16))
TINY_PPO = PPOConfig(n_envs=10, horizon=8, minibatch_size=40, epochs=2)


def world(registry, n=10, seed=0):
    return SurrogateWorld.balanced(registry, n, seed=seed)


# ---------------------------------------------------------------------- GAE
def test_gae_lambda_zero_is_one_step_td(rng):
    r, v = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    last = rng.normal(size=3)
    d = np.zeros((10, 3))
    adv, ret = gae(r, v, d, last, 0.9, 0.0)
    nxt = np.concatenate([v[1:], last[None]])
    np.testing.assert_allclose(adv, r + 0.9 * nxt - v, atol=1e-14)
    np.testing.assert_allclose(ret, adv + v, atol=1e-14)


def test_gae_lambda_one_is_discounted_return(rng):
    r, v = rng.normal(size=10), rng.normal(size=10)
    last, g = 0.7, 0.95
    adv, _ = gae(r[:, None], v[:, None], np.zeros((10, 1)), np.array([last]), g, 1.0)
    for t in range(10):
        ret = sum(g ** (k - t) * r[k] for k in range(t, 10)) + g ** (10 - t) * last
        assert adv[t, 0] == pytest.approx(ret - v[t], abs=1e-12)


def test_no_bootstrap_across_done(rng):
    r, v = rng.normal(size=(10, 1)), rng.normal(size=(10, 1))
    d = np.zeros((10, 1))
    d[4] = 1.0
    a1, _ = gae(r, v, d, np.zeros(1), 0.99, 0.95)
    v2 = v.copy()
    v2[5] += 100.0
    a2, _ = gae(r, v2, d, np.zeros(1), 0.99, 0.95)
    np.testing.assert_array_equal(a1[:5], a2[:5])


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_gae_matches_brute_force(lam, rng):
    for _ in range(20):
        r, v = rng.normal(size=10), rng.normal(size=10)
        d = (rng.uniform(size=10) < 0.15).astype(float)
        last = rng.normal()
        adv, _ = gae(r[:, None], v[:, None], d[:, None], np.array([last]), 0.99, lam)
        want = discounted_advantages(r, v, d, last, 0.99, lam)
        np.testing.assert_allclose(adv[:, 0], want, rtol=0, atol=1e-10)


# ----------------------------------------------------------------- rollouts
def test_collection_is_deterministic(registry):
    p = init_params(SMALL, 0)
    bufs = [collect_rollouts(p, world(registry), 6, np.random.default_rng(3)) for _ in range(2)]
    for name in ("actions", "rewards", "proprio", "values", "dones"):
        assert np.array_equal(getattr(bufs[0], name), getattr(bufs[1], name))
    assert bufs[0].collector == p.digest()


def test_buffer_shapes_and_allocation(registry):
    p = init_params(SMALL, 0)
    buf = collect_rollouts(p, world(registry, 20), 5, np.random.default_rng(0))
    assert buf.actions.shape == (5, 20, 32)
    assert buf.critic_obs.shape == (5, 20, SMALL.critic_dim)
    frac = np.bincount(buf.embodiment[0]) / 20
    assert np.all(frac == 0.2)
    # unclaimed slots never contribute to the log-probability
    assert np.all(buf.mask.sum(axis=-1) < 32)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_reward_names_embodiment(registry):
    p = init_params(SMALL, 0)
    w = world(registry, 5)
    w.reset()
    w.state.base_vel[3, 0] = np.inf
    with pytest.raises(RolloutError, match="embodiment 3, env 3"):
        collect_rollouts(p, w, 3, np.random.default_rng(0))


def test_episode_returns_are_recorded(registry):
    p = init_params(SMALL, 0)
    w = SurrogateWorld.balanced(registry, 5, config=WorldConfig(horizon=4))
    buf = collect_rollouts(p, w, 9, np.random.default_rng(0))
    assert len(buf.episode_returns) == 10
    assert buf.dones.sum() == 10


# ------------------------------------------------------------------ updates
def test_sgd_step_matches_directional_derivative():
    rng = np.random.default_rng(2)
    params = fresh(0)
    mb = mini_batch(params, rng, n=1)
    coef = LossCoefficients(estimation=0.5)
    base, grads = loss_and_grad(params, mb, coef)
    eta = 1e-6
    sq = sum(float(np.sum(g * g)) for k, g in grads.items() if k != "value_norm")
    for k, g in grads.items():
        if k != "value_norm":
            params.arrays[k] -= eta * g
    after = loss_and_grad(params, mb, coef, need_grad=False)[0]["total"]
    predicted = -eta * sq
    assert abs((after - base["total"]) - predicted) / abs(predicted) < 1e-3


def test_ppo_update_changes_parameters(registry):
    p = init_params(SMALL, 0)
    before = p.digest()
    buf = compute_gae(collect_rollouts(p, world(registry), 8, np.random.default_rng(0)), 0.99, 0.95)
    losses = ppo_update(p, buf, TINY_PPO, Adam(1e-3), np.random.default_rng(0))
    assert p.digest() != before
    assert all(np.isfinite(v) for v in losses.values())


def test_ppo_update_needs_advantages(registry):
    p = init_params(SMALL, 0)
    buf = collect_rollouts(p, world(registry), 4, np.random.default_rng(0))
    with pytest.raises(ValueError, match="compute_gae"):
        ppo_update(p, buf, TINY_PPO, Adam(), np.random.default_rng(0))


def test_trainer_log_continues_counter(registry, tmp_path):
    log = tmp_path / "log.csv"
    p = init_params(SMALL, 0)
    Trainer(p, world(registry), TINY_PPO, log_path=log).train(2)
    Trainer(p, world(registry, seed=1), TINY_PPO, seed=1, log_path=log, start_update=2).train(2)
    rows = list(csv.DictReader(open(log)))
    assert [int(r["update"]) for r in rows] == [0, 1, 2, 3]
    assert "return_H1surrogate" in rows[0] and "E_vx" in rows[0]


def test_config_validation():
    with pytest.raises(ValueError):
        PPOConfig(gamma=1.0)
    with pytest.raises(ValueError, match="unknown"):
        PPOConfig.from_dict({"gamma": 0.9, "kl_target": 0.01})
    assert PPOConfig.from_dict(PPOConfig().to_dict()) == PPOConfig()
