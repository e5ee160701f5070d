import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shepherd.env import EpisodeConfig
from shepherd.nn import Cache, backward, forward, gaussian_log_prob, init_mlp, log_softmax
from shepherd.rl import (Optimizers, PpoHyper, RolloutBuffer, TrainingError, compute_gae, driving_networks,
                         moving_average, normalize, ppo_loss, ppo_surrogate, ppo_update, train_driving,
                         train_selection, write_learning_curve)
from shepherd.sim import SimParams


def brute_gae(r, v, boot, done, gamma, lam):
    n = len(r)
    nxt = list(v[1:]) + [boot]
    delta = [r[t] + gamma * nxt[t] * (1 - done[t]) - v[t] for t in range(n)]
    adv = []
    for t in range(n):
        total, w = 0.0, 1.0
        for k in range(t, n):
            total += w * delta[k]
            if done[k]:
                break
            w *= gamma * lam
        adv.append(total)
    return np.array(adv)


def numeric_grad(f, params, h=1e-5):
    flat = params.flat()
    g = np.empty_like(flat)
    for j in range(len(flat)):
        probe = flat.copy()
        probe[j] += h
        params.set_flat(probe)
        up = f()
        probe[j] -= 2 * h
        params.set_flat(probe)
        g[j] = (up - f()) / (2 * h)
    params.set_flat(flat)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b))))


def gaussian_case(seed, n=12):
    rng = np.random.default_rng(seed)
    actor = init_mlp((4, 8, 8, 2), "tanh", rng, final_scale=0.5, gaussian=True)
    critic = init_mlp((4, 8, 1), "linear", rng)
    actor.log_std[:] = rng.normal(-0.3, 0.2, 2)
    for b in actor.biases + critic.biases:
        b += rng.normal(0, 0.2, b.shape)
    obs = rng.normal(size=(n, 4))
    mean = forward(actor, obs)
    actions = mean + np.exp(actor.log_std) * rng.normal(size=mean.shape)
    logp = gaussian_log_prob(mean, actor.log_std, actions)
    batch = {"obs": obs, "actions": actions, "logp": logp + rng.normal(0, 0.3, n),
             "advantages": rng.normal(size=n), "returns": rng.normal(size=n)}
    return actor, critic, batch


def categorical_case(seed, n=12):
    rng = np.random.default_rng(seed)
    actor = init_mlp((6, 8, 5), "softmax", rng, final_scale=0.5)
    critic = init_mlp((6, 8, 1), "linear", rng)
    obs = rng.normal(size=(n, 6))
    actions = rng.integers(0, 5, n)
    c = Cache()
    forward(actor, obs, c)
    logp = log_softmax(c.pre[-1])[np.arange(n), actions]
    batch = {"obs": obs, "actions": actions, "logp": logp + rng.normal(0, 0.3, n),
             "advantages": rng.normal(size=n), "returns": rng.normal(size=n)}
    return actor, critic, batch


def test_gae_examples():
    adv, ret = compute_gae([1, 1], [0, 0], 0.0, [0, 0], 0.98, 0.95)
    np.testing.assert_allclose(adv, [1.931, 1.0], atol=1e-12)
    np.testing.assert_allclose(ret, [1.931, 1.0], atol=1e-12)
    r, v = np.array([0.5, -1, 2]), np.array([0.3, 0.1, -0.4])
    adv, _ = compute_gae(r, v, 0.7, [0, 0, 0], 0.9, 0.0)
    np.testing.assert_allclose(adv, r + 0.9 * np.array([0.1, -0.4, 0.7]) - v, atol=1e-12)
    adv, _ = compute_gae(r, np.zeros(3), 0.0, [0, 0, 0], 1.0, 1.0)
    np.testing.assert_allclose(adv, [1.5, 1.0, 2.0], atol=1e-12)


def test_gae_shape_mismatch():
    with pytest.raises(ValueError):
        compute_gae([1, 2], [0], 0.0, [0, 0], 0.9, 0.9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.floats(0, 1), st.floats(0, 1))
def test_gae_matches_double_loop(seed, n, gamma, lam):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=n), rng.normal(size=n)
    done = (rng.random(n) < 0.3).astype(float)
    boot = float(rng.normal())
    adv, ret = compute_gae(r, v, boot, done, gamma, lam)
    np.testing.assert_allclose(adv, brute_gae(r, v, boot, done, gamma, lam), atol=1e-12)
    np.testing.assert_allclose(ret, adv + v, atol=1e-15)


def test_gae_streams_are_independent():
    rng = np.random.default_rng(1)
    r, v, d = rng.normal(size=(6, 3)), rng.normal(size=(6, 3)), (rng.random((6, 3)) < 0.3).astype(float)
    boot = rng.normal(size=3)
    adv, _ = compute_gae(r, v, boot, d, 0.98, 0.95)
    for j in range(3):
        np.testing.assert_allclose(adv[:, j], compute_gae(r[:, j], v[:, j], boot[j], d[:, j], 0.98, 0.95)[0],
                                   atol=1e-15)


@pytest.mark.parametrize("ratio, adv, expected", [(1.0, 3.7, 3.7), (1.5, 2.0, 2.4), (0.5, -1.0, -0.8)])
def test_surrogate_examples(ratio, adv, expected):
    assert ppo_surrogate(np.log(ratio), 0.0, adv, 0.2) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e3, 1e3))
def test_surrogate_on_policy_is_advantage(a):
    assert ppo_surrogate(0.3, 0.3, a, 0.2) == a


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50))
def test_normalize_moments(xs):
    x = np.array(xs)
    z = normalize(x)
    if x.std() > 1e-6 * max(1.0, np.abs(x).max()):
        assert abs(z.mean()) < 1e-10 and abs(z.std() - 1) < 1e-10


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("kind", ["gaussian", "categorical"])
def test_total_loss_gradients_match_finite_differences(seed, kind):
    actor, critic, batch = (gaussian_case if kind == "gaussian" else categorical_case)(seed)
    hyper = PpoHyper(entropy_coeff=0.1, vf_coeff=0.5)
    _, ga, gc, _ = ppo_loss(actor, critic, batch, hyper, kind)

    def f():
        return ppo_loss(actor, critic, batch, hyper, kind)[0]

    assert rel_err(ga.flat(), numeric_grad(f, actor)) < 1e-4
    assert rel_err(gc.flat(), numeric_grad(f, critic)) < 1e-4


def test_on_policy_gradient_is_vanilla_policy_gradient():
    actor, critic, batch = gaussian_case(4)
    mean = forward(actor, batch["obs"])
    batch["logp"] = gaussian_log_prob(mean, actor.log_std, batch["actions"])
    hyper = PpoHyper(entropy_coeff=0.0, vf_coeff=0.0)
    _, ga, _, stats = ppo_loss(actor, critic, batch, hyper, "gaussian")
    assert stats["mean_ratio"] == pytest.approx(1.0, abs=1e-12)

    def pg():
        m = forward(actor, batch["obs"])
        return -float(np.mean(batch["advantages"] * gaussian_log_prob(m, actor.log_std, batch["actions"])))

    assert rel_err(ga.flat(), numeric_grad(pg, actor)) < 1e-4


def test_single_zero_advantage_transition_leaves_actor_unchanged():
    actor, critic, batch = gaussian_case(5, n=1)
    before = actor.flat()
    hyper = PpoHyper(entropy_coeff=0.0, minibatch_size=1, horizon=1, num_actors=1)
    ppo_update(actor, critic, batch, hyper, Optimizers.create(actor, critic, 5e-4), np.random.default_rng(0),
               "gaussian")
    assert np.array_equal(actor.flat(), before)


def test_update_is_deterministic():
    results = []
    for _ in range(2):
        actor, critic, batch = categorical_case(6, n=32)
        hyper = PpoHyper(minibatch_size=8, horizon=32, num_actors=1, epochs=3)
        ppo_update(actor, critic, batch, hyper, Optimizers.create(actor, critic, 1e-3), np.random.default_rng(9),
                   "categorical")
        results.append(np.concatenate([actor.flat(), critic.flat()]))
    assert np.array_equal(results[0], results[1])


def test_update_aborts_on_non_finite_loss():
    actor, critic, batch = gaussian_case(7)
    batch["returns"] = batch["returns"].copy()
    batch["returns"][0] = np.nan
    hyper = PpoHyper(minibatch_size=12, horizon=12, num_actors=1)
    with pytest.raises(TrainingError):
        ppo_update(actor, critic, batch, hyper, Optimizers.create(actor, critic, 1e-3), np.random.default_rng(0),
                   "gaussian")


def test_log_std_is_capped():
    actor, critic, batch = gaussian_case(8)
    actor.log_std[:] = [0.0, -0.5]
    hyper = PpoHyper(entropy_coeff=50.0, minibatch_size=12, horizon=12, num_actors=1)
    ppo_update(actor, critic, batch, hyper, Optimizers.create(actor, critic, 0.1), np.random.default_rng(0),
               "gaussian")
    assert np.all(actor.log_std <= 0.0)
    free = replace(hyper, log_std_max=None)
    actor2, critic2, _ = gaussian_case(8)
    actor2.log_std[:] = [0.0, -0.5]
    ppo_update(actor2, critic2, batch, free, Optimizers.create(actor2, critic2, 0.1), np.random.default_rng(0),
               "gaussian")
    assert np.any(actor2.log_std > 0.0)


def test_rollout_buffer_flattens_steps_and_streams():
    buf = RolloutBuffer()
    for t in range(4):
        buf.add(np.full((3, 2, 5), t), np.zeros((3, 2)), np.zeros((3, 2)), np.ones((3, 2)), np.zeros((3, 2)),
                np.zeros((3, 2)))
    with pytest.raises(RuntimeError):
        buf.batch()
    buf.finish(np.zeros((3, 2)), 0.9, 0.9)
    b = buf.batch()
    assert b["obs"].shape == (24, 5) and b["advantages"].shape == (24,)
    assert b["obs"][0, 0] == 0 and b["obs"][-1, 0] == 3


def test_moving_average_and_curve_file(tmp_path):
    np.testing.assert_allclose(moving_average([1, 2, 3, 4], 2), [1, 1.5, 2.5, 3.5])
    path = tmp_path / "curve.csv"
    write_learning_curve(path, [1.0, 3.0, 5.0], 200)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["episode_index", "cumulative_reward", "moving_average"]
    assert [float(r[2]) for r in rows[1:]] == [1.0, 2.0, 3.0]


def test_hyper_defaults_and_invariants():
    h = PpoHyper()
    assert (h.stepsize, h.gamma, h.gae_lambda, h.clip, h.vf_coeff, h.entropy_coeff) == (5e-4, 0.98, 0.95, 0.2,
                                                                                         0.5, 0.1)
    assert (h.epochs, h.horizon, h.minibatch_size, h.num_actors, h.total_episodes) == (10, 4096, 128, 8, 20000)
    assert h.hidden == (64,) * 5
    m = PpoHyper.mappo()
    assert (m.entropy_coeff, m.horizon, m.minibatch_size, m.num_actors, m.total_episodes) == (0.0, 32, 1024, 32,
                                                                                            200000)
    assert m.hidden == (256, 128)
    with pytest.raises(ValueError):
        PpoHyper(gamma=1.5)
    with pytest.raises(ValueError):
        PpoHyper(clip=0)
    with pytest.raises(ValueError):
        PpoHyper(minibatch_size=100, horizon=4, num_actors=2)


TINY = PpoHyper(horizon=64, minibatch_size=64, num_actors=2, epochs=2, total_episodes=6, hidden=(8, 8))


def test_zero_stepsize_freezes_driving_policy():
    res = train_driving(replace(TINY, stepsize=0.0), SimParams(), EpisodeConfig(60, 10), 3)
    init, _ = driving_networks(TINY, np.random.default_rng(np.random.SeedSequence(3).spawn(3)[0]))
    assert np.array_equal(res.actor.flat(), init.flat())
    assert len(res.episode_rewards) == 6


def test_driving_training_reproducible_and_moves():
    a = train_driving(TINY, SimParams(), EpisodeConfig(60, 10), 1)
    b = train_driving(TINY, SimParams(), EpisodeConfig(60, 10), 1)
    assert a.episode_rewards == b.episode_rewards
    assert np.array_equal(a.actor.flat(), b.actor.flat())
    init, _ = driving_networks(TINY, np.random.default_rng(np.random.SeedSequence(1).spawn(3)[0]))
    assert not np.array_equal(a.actor.flat(), init.flat())
    with pytest.raises(ValueError):
        train_driving(TINY, SimParams(num_targets=2), EpisodeConfig(60, 10), 1)


def test_selection_training_structure():
    params = SimParams(num_herders=2, num_targets=5)
    driving, _ = driving_networks(TINY, np.random.default_rng(0))
    hyper = PpoHyper.mappo(horizon=3, num_actors=2, minibatch_size=6, total_episodes=2, hidden=(8,), epochs=2)
    res = train_selection(hyper, params, EpisodeConfig(80, 20, action_hold=10), driving, 0)
    assert res.actor.sizes == (14, 8, 5) and res.actor.output == "softmax"
    assert all(k % 10 == 0 for k in res.decision_steps)
    assert res.transitions_per_herder[0] == res.transitions_per_herder[1] > 0
    probs = forward(res.actor, np.random.default_rng(0).normal(size=(20, 14)))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    again = train_selection(hyper, params, EpisodeConfig(80, 20, action_hold=10), driving, 0)
    assert np.array_equal(again.actor.flat(), res.actor.flat())


def test_backward_zero_upstream_in_loss_path():
    actor, _, batch = categorical_case(2)
    c = Cache()
    forward(actor, batch["obs"], c)
    assert not np.any(backward(actor, c, np.zeros((12, 5)), through_output=False).flat())
