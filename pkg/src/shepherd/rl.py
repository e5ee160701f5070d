"""PPO for the continuous driving policy and parameter-shared MAPPO for the
discrete target-selection policy."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .env import (Episode, EpisodeConfig, RewardGains, driving_observations, observe_driving,
                  observe_selection, reward_driving, reward_selection, selection_layout)
from .nn import (AdamState, Cache, MlpParams, adam_step, backward, forward, gaussian_entropy, gaussian_log_prob,
                 init_mlp, log_softmax)
from .sim import RngStream, SimParams

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PpoHyper:
    stepsize: float = 5e-4
    gamma: float = 0.98
    gae_lambda: float = 0.95
    clip: float = 0.2
    vf_coeff: float = 0.5
    entropy_coeff: float = 0.1
    epochs: int = 10
    horizon: int = 4096
    minibatch_size: int = 128
    num_actors: int = 8
    total_episodes: int = 20_000
    hidden: tuple[int, ...] = (64, 64, 64, 64, 64)
    # upper bound on the Gaussian log-std (None: unbounded)
    log_std_max: float | None = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if not self.clip > 0:
            raise ValueError("clip must be > 0")
        if self.stepsize < 0:
            raise ValueError("stepsize must be >= 0")
        if min(self.epochs, self.horizon, self.minibatch_size, self.num_actors, self.total_episodes) < 1:
            raise ValueError("epochs, horizon, minibatch_size, num_actors, total_episodes must be >= 1")
        if self.minibatch_size > self.horizon * self.num_actors:
            raise ValueError(f"minibatch_size {self.minibatch_size} exceeds horizon*num_actors "
                             f"{self.horizon * self.num_actors}")

    @classmethod
    def mappo(cls, **kw) -> "PpoHyper":
        base = dict(entropy_coeff=0.0, horizon=32, minibatch_size=1024, num_actors=32,
                    total_episodes=200_000, hidden=(256, 128))
        base.update(kw)
        return cls(**base)


# -- advantage estimation and surrogate ------------------------------------

def compute_gae(rewards, values, bootstrap, dones, gamma: float, gae_lambda: float):
    """Generalised advantage estimates and returns along axis 0.

    Trailing axes index independent streams; ``bootstrap`` is the value of the
    state after the last step (ignored where that step is terminal).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(f"shape mismatch: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}")
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1:])
    next_value = np.broadcast_to(np.asarray(bootstrap, dtype=float), rewards.shape[1:])
    for t in range(len(rewards) - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        last = delta + gamma * gae_lambda * live * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def ppo_surrogate(new_logp, old_logp, advantage, clip: float):
    ratio = np.exp(np.asarray(new_logp, dtype=float) - np.asarray(old_logp, dtype=float))
    advantage = np.asarray(advantage, dtype=float)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage)


def normalize(adv: np.ndarray) -> np.ndarray:
    centered = adv - adv.mean()
    std = centered.std()
    return centered / std if std > 0 else centered


# -- losses ----------------------------------------------------------------

def ppo_loss(actor: MlpParams, critic: MlpParams, batch: dict, hyper: PpoHyper, kind: str):
    """Total loss (-surrogate + vf*value - ent*entropy) and its gradients."""
    obs, actions = batch["obs"], batch["actions"]
    old_logp, adv, returns = batch["logp"], batch["advantages"], batch["returns"]
    n = len(obs)
    ac = Cache()
    forward(actor, obs, ac)
    if kind == "gaussian":
        mean = ac.output
        log_std = actor.log_std
        logp = gaussian_log_prob(mean, log_std, actions)
        entropy = gaussian_entropy(log_std)
    elif kind == "categorical":
        logp_all = log_softmax(ac.pre[-1])
        idx = actions.astype(np.int64)
        logp = logp_all[np.arange(n), idx]
        p = np.exp(logp_all)
        ent_each = -np.sum(p * logp_all, axis=1)
        entropy = float(ent_each.mean())
    else:
        raise ValueError(f"unknown policy kind {kind!r}")

    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip)
    unclipped_active = ratio * adv <= clipped * adv
    surr = np.where(unclipped_active, ratio * adv, clipped * adv)
    d_logp = -np.where(unclipped_active, ratio * adv, 0.0) / n

    if kind == "gaussian":
        inv_std = np.exp(-log_std)
        z = (actions - mean) * inv_std
        actor_grads = backward(actor, ac, d_logp[:, None] * z * inv_std)
        actor_grads.log_std = np.sum(d_logp[:, None] * (z * z - 1.0), axis=0) - hyper.entropy_coeff
    else:
        onehot = np.zeros_like(p)
        onehot[np.arange(n), idx] = 1.0
        g = d_logp[:, None] * (onehot - p)
        g += hyper.entropy_coeff * p * (logp_all + ent_each[:, None]) / n
        actor_grads = backward(actor, ac, g, through_output=False)

    cc = Cache()
    v = forward(critic, obs, cc)[:, 0]
    err = v - returns
    value_loss = float(np.mean(err * err))
    critic_grads = backward(critic, cc, (hyper.vf_coeff * 2.0 * err / n)[:, None])

    policy_loss = -float(np.mean(surr))
    loss = policy_loss + hyper.vf_coeff * value_loss - hyper.entropy_coeff * entropy
    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > hyper.clip)),
        "approx_kl": float(np.mean(old_logp - logp)),
    }
    return loss, actor_grads, critic_grads, stats


@dataclass
class Optimizers:
    actor: AdamState
    critic: AdamState

    @classmethod
    def create(cls, actor: MlpParams, critic: MlpParams, stepsize: float) -> "Optimizers":
        return cls(AdamState.for_params(actor, stepsize), AdamState.for_params(critic, stepsize))


def ppo_update(actor: MlpParams, critic: MlpParams, batch: dict, hyper: PpoHyper, opt: Optimizers,
               rng: np.random.Generator, kind: str) -> dict:
    """Run ``epochs`` passes of shuffled minibatch Adam steps; networks update in place."""
    n = len(batch["obs"])
    data = dict(batch)
    data["advantages"] = normalize(np.asarray(batch["advantages"], dtype=float))
    totals: dict[str, float] = {}
    count = 0
    for _ in range(hyper.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, hyper.minibatch_size):
            idx = perm[start:start + hyper.minibatch_size]
            mb = {k: v[idx] for k, v in data.items()}
            loss, ga, gc, stats = ppo_loss(actor, critic, mb, hyper, kind)
            if not np.isfinite(loss) or not np.all(np.isfinite(ga.flat())) or not np.all(np.isfinite(gc.flat())):
                raise TrainingError(f"non-finite PPO loss or gradient (loss={loss}, stats={stats})")
            adam_step(actor, ga, opt.actor)
            if actor.log_std is not None and hyper.log_std_max is not None:
                np.minimum(actor.log_std, hyper.log_std_max, out=actor.log_std)
            adam_step(critic, gc, opt.critic)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in totals.items()}


class RolloutBuffer:
    """Per-step, per-stream transitions of one rollout (leading axes: step, stream)."""

    def __init__(self):
        self.clear()

    def clear(self):
        self.obs, self.actions, self.logp, self.rewards, self.values, self.dones = [], [], [], [], [], []
        self.advantages = self.returns = None

    def add(self, obs, actions, logp, rewards, values, dones):
        self.obs.append(obs)
        self.actions.append(actions)
        self.logp.append(logp)
        self.rewards.append(rewards)
        self.values.append(values)
        self.dones.append(dones)

    def __len__(self):
        return len(self.rewards)

    def finish(self, bootstrap, gamma: float, gae_lambda: float) -> None:
        self.advantages, self.returns = compute_gae(np.array(self.rewards), np.array(self.values), bootstrap,
                                                    np.array(self.dones), gamma, gae_lambda)

    def batch(self) -> dict:
        if self.advantages is None:
            raise RuntimeError("finish() must run before batch()")
        lead = np.asarray(self.rewards).ndim

        def flat(x):
            x = np.asarray(x)
            return x.reshape(-1, *x.shape[lead:])

        return {"obs": flat(self.obs), "actions": flat(self.actions), "logp": flat(self.logp),
                "advantages": flat(self.advantages), "returns": flat(self.returns)}


# -- training loops --------------------------------------------------------

@dataclass
class TrainResult:
    actor: MlpParams
    critic: MlpParams
    episode_rewards: list[float]
    diagnostics: list[dict] = field(default_factory=list)
    # decision step indices seen by actor stream 0 (selection training only)
    decision_steps: list[int] = field(default_factory=list)
    transitions_per_herder: list[int] = field(default_factory=list)


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` samples."""
    x = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def write_learning_curve(path, rewards, window: int) -> None:
    ma = moving_average(rewards, window)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode_index", "cumulative_reward", "moving_average"])
        for i, (r, m) in enumerate(zip(rewards, ma)):
            w.writerow([i, repr(float(r)), repr(float(m))])


class _EpisodeSource:
    """Hands out fresh training episodes with distinct derived seeds."""

    def __init__(self, params: SimParams, config: EpisodeConfig, seed: int):
        self.params, self.config, self.seed = params, config, seed
        self.started = 0

    def new(self) -> Episode:
        ep = Episode(self.params, self.config, [self.seed, 7, self.started])
        self.started += 1
        return ep


def driving_networks(hyper: PpoHyper, rng: np.random.Generator) -> tuple[MlpParams, MlpParams]:
    actor = init_mlp((4, *hyper.hidden, 2), "tanh", rng, final_scale=0.01, gaussian=True)
    critic = init_mlp((4, *hyper.hidden, 1), "linear", rng, final_scale=1.0)
    return actor, critic


def train_driving(hyper: PpoHyper, params: SimParams, config: EpisodeConfig, seed: int,
                  gains: RewardGains = RewardGains(), progress=None) -> TrainResult:
    """Single-herder, single-target PPO on the shaped driving reward."""
    if params.num_herders != 1 or params.num_targets != 1:
        raise ValueError("driving policy is trained with one herder and one target")
    init_rng, policy_rng, shuffle_rng = (s.generator for s in RngStream(seed).spawn(3))
    actor, critic = driving_networks(hyper, init_rng)
    opt = Optimizers.create(actor, critic, hyper.stepsize)
    source = _EpisodeSource(params, config, seed)
    n_act = hyper.num_actors
    envs = [source.new() for _ in range(n_act)]
    ep_reward = np.zeros(n_act)
    curve: list[float] = []
    diagnostics = []
    buf = RolloutBuffer()
    vmax = params.herder_max_speed
    while len(curve) < hyper.total_episodes:
        buf.clear()
        for _ in range(hyper.horizon):
            obs = np.stack([observe_driving(e.state, params) for e in envs])
            mean = forward(actor, obs)
            action = mean + np.exp(actor.log_std) * policy_rng.standard_normal(mean.shape)
            logp = gaussian_log_prob(mean, actor.log_std, action)
            value = forward(critic, obs)[:, 0]
            rewards = np.zeros(n_act)
            dones = np.zeros(n_act)
            for j, e in enumerate(envs):
                applied = e.step(vmax * action[j])
                r = reward_driving(e.state, applied[0], params, gains)
                ep_reward[j] += r
                if e.done:
                    curve.append(float(ep_reward[j]))
                    ep_reward[j] = 0.0
                    dones[j] = 1.0
                    if e.truncated:
                        r += hyper.gamma * float(forward(critic, observe_driving(e.state, params))[0])
                    envs[j] = source.new()
                rewards[j] = r
            buf.add(obs, action, logp, rewards, value, dones)
        last_obs = np.stack([observe_driving(e.state, params) for e in envs])
        buf.finish(forward(critic, last_obs)[:, 0], hyper.gamma, hyper.gae_lambda)
        diag = ppo_update(actor, critic, buf.batch(), hyper, opt, shuffle_rng, "gaussian")
        diag["episodes"] = len(curve)
        diagnostics.append(diag)
        log.info("driving update %d: episodes=%d %s", len(diagnostics), len(curve), diag)
        if progress:
            progress(len(curve), diag)
    return TrainResult(actor, critic, curve[: hyper.total_episodes], diagnostics)


def selection_networks(hyper: PpoHyper, n_herders: int, n_targets: int,
                       rng: np.random.Generator) -> tuple[MlpParams, MlpParams]:
    n_in = 2 * (n_herders + n_targets)
    actor = init_mlp((n_in, *hyper.hidden, n_targets), "softmax", rng, final_scale=0.01)
    critic = init_mlp((n_in, *hyper.hidden, 1), "linear", rng, final_scale=1.0)
    return actor, critic


def drive_selected(driving: MlpParams, herders: np.ndarray, targets: np.ndarray, params: SimParams) -> np.ndarray:
    """Deterministic driving commands for paired (herder, selected target) rows."""
    obs = driving_observations(herders, targets, params.arena_half_width)
    return params.herder_max_speed * forward(driving, obs)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(probs))
    idx = (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def train_selection(hyper: PpoHyper, params: SimParams, config: EpisodeConfig, driving: MlpParams, seed: int,
                    gains: RewardGains = RewardGains(), progress=None) -> TrainResult:
    """MAPPO with one shared actor/critic; each herder decides every ``config.action_hold`` steps.

    A transition spans one held decision: its reward is the team reward summed
    over the window and discounting is applied per decision.
    """
    n_herd, n_targ = params.num_herders, params.num_targets
    init_rng, policy_rng, shuffle_rng = (s.generator for s in RngStream(seed).spawn(3))
    actor, critic = selection_networks(hyper, n_herd, n_targ, init_rng)
    opt = Optimizers.create(actor, critic, hyper.stepsize)
    source = _EpisodeSource(params, config, seed)
    n_act = hyper.num_actors
    envs = [source.new() for _ in range(n_act)]
    ep_reward = np.zeros(n_act)
    curve: list[float] = []
    diagnostics = []
    decision_steps: list[int] = []
    per_herder = [0] * n_herd
    buf = RolloutBuffer()
    hold = config.action_hold
    idx_herd = np.arange(n_herd)

    def observe(e):
        rows, ids = [], []
        for i in range(n_herd):
            rows.append(observe_selection(e.state, i, params))
            ids.append(selection_layout(e.state, i)[1])
        return np.stack(rows), np.stack(ids)

    while len(curve) < hyper.total_episodes:
        buf.clear()
        for _ in range(hyper.horizon):
            views = [observe(e) for e in envs]
            obs = np.stack([v[0] for v in views])  # (A, N, 2(N+M))
            flat_obs = obs.reshape(n_act * n_herd, -1)
            probs = forward(actor, flat_obs)
            action = sample_categorical(probs, policy_rng)
            logp = np.log(probs[np.arange(len(action)), action])
            value = forward(critic, flat_obs)[:, 0].reshape(n_act, n_herd)
            chosen = np.stack([views[j][1][idx_herd, action.reshape(n_act, n_herd)[j]] for j in range(n_act)])
            decision_steps.append(envs[0].k)
            for i in range(n_herd):
                per_herder[i] += n_act
            window = np.zeros(n_act)
            for _step in range(hold):
                live = [j for j, e in enumerate(envs) if not e.done]
                if not live:
                    break
                h = np.concatenate([envs[j].state.herders for j in live])
                t = np.concatenate([envs[j].state.targets[chosen[j]] for j in live])
                cmd = drive_selected(driving, h, t, params).reshape(len(live), n_herd, 2)
                for row, j in enumerate(live):
                    envs[j].step(cmd[row])
                    r = reward_selection(envs[j].state, params, gains)
                    window[j] += r
                    ep_reward[j] += r
            rewards = np.repeat(window[:, None], n_herd, axis=1)
            dones = np.zeros((n_act, n_herd))
            for j, e in enumerate(envs):
                if e.done:
                    curve.append(float(ep_reward[j]))
                    ep_reward[j] = 0.0
                    dones[j] = 1.0
                    if e.truncated:
                        rewards[j] += hyper.gamma * forward(critic, observe(e)[0])[:, 0]
                    envs[j] = source.new()
            buf.add(obs, action.reshape(n_act, n_herd), logp.reshape(n_act, n_herd), rewards, value, dones)
        last_obs = np.stack([observe(e)[0] for e in envs]).reshape(n_act * n_herd, -1)
        buf.finish(forward(critic, last_obs)[:, 0].reshape(n_act, n_herd), hyper.gamma, hyper.gae_lambda)
        diag = ppo_update(actor, critic, buf.batch(), hyper, opt, shuffle_rng, "categorical")
        diag["episodes"] = len(curve)
        diagnostics.append(diag)
        log.info("selection update %d: episodes=%d %s", len(diagnostics), len(curve), diag)
        if progress:
            progress(len(curve), diag)
    return TrainResult(actor, critic, curve[: hyper.total_episodes], diagnostics, decision_steps, per_herder)
