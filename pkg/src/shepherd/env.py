"""Episode orchestration: observations, rewards, termination and the
containment metrics (captured fraction, settling time, path length)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import kernels
from .sim import RngStream, SimParams, WorldState, episode_streams, sample_initial

SUCCESS_LEVEL = 0.99


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 1200
    success_window: int = 200
    action_hold: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 <= self.success_window <= self.max_steps:
            raise ValueError("success_window must lie in [0, max_steps]")
        if self.action_hold < 1:
            raise ValueError("action_hold must be >= 1")


@dataclass(frozen=True)
class RewardGains:
    k1: float = 5e-2
    k2: float = 1e-1
    k3: float = 1.5e-2
    k4: float = 1e-2

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"reward gain {name} must be > 0")
        if not self.k3 < self.k1 < self.k2:
            warnings.warn("reward gains do not satisfy k3 < k1 < k2", RuntimeWarning, stacklevel=3)


@dataclass
class EpisodeRecord:
    success: bool
    settling_time: int | None
    path_length: float
    chi_trace: np.ndarray
    cumulative_reward: float
    steps: int
    seed: int | None = None
    params: SimParams | None = None
    herder_trace: np.ndarray | None = field(default=None, repr=False)
    target_trace: np.ndarray | None = field(default=None, repr=False)
    command_trace: np.ndarray | None = field(default=None, repr=False)


# -- metrics ---------------------------------------------------------------

def chi(state: WorldState, params: SimParams) -> float:
    return kernels.count_within(state.targets, params.buffered_radius) / params.num_targets


def settling_time(chi_trace: Sequence[float], n_t: int, n_h: int) -> int | None:
    """First step n with chi >= 0.99 on every step of [n, min(n + n_t, n_h)].

    ``chi_trace[k]`` is the captured fraction after k steps; windows that run past
    the end of the trace cannot be confirmed.
    """
    trace = np.asarray(chi_trace, dtype=float)
    if len(trace) > n_h + 1:
        raise ValueError(f"chi trace has {len(trace)} entries, more than n_h + 1 = {n_h + 1}")
    last = len(trace) - 1
    run_end = np.empty(len(trace), dtype=np.int64)
    # run_end[k]: last index of the run of successes starting at k (k-1 if chi[k] fails)
    nxt = last
    for k in range(last, -1, -1):
        if trace[k] >= SUCCESS_LEVEL:
            run_end[k] = nxt
        else:
            run_end[k] = k - 1
            nxt = k - 1
    for n in range(len(trace)):
        n_f = min(n + n_t, n_h)
        if n_f <= last and run_end[n] >= n_f:
            return n
    return None


def path_length(herder_traces, n: int) -> float:
    """Mean distance travelled per herder over the first n steps.

    ``herder_traces`` is a sequence of N position sequences (or an (N, K, 2) array).
    """
    traces = [np.asarray(tr, dtype=float) for tr in herder_traces]
    total = 0.0
    for tr in traces:
        if len(tr) < n + 1:
            raise ValueError(f"herder trace has {len(tr)} entries, need at least {n + 1}")
        step = np.diff(tr[: n + 1], axis=0)
        total += float(np.sum(np.sqrt(step[:, 0] * step[:, 0] + step[:, 1] * step[:, 1])))
    return total / len(traces)


# -- rewards ---------------------------------------------------------------

def reward_driving(state: WorldState, u, params: SimParams, gains: RewardGains) -> float:
    t = state.targets[0]
    h = state.herders[0]
    u = np.asarray(u, dtype=float)
    r_t = float(np.hypot(t[0], t[1]))
    r = -gains.k3 * float(np.hypot(u[0], u[1]))
    if r_t > params.goal_radius:
        r -= gains.k1 * float(np.hypot(t[0] - h[0], t[1] - h[1])) + gains.k2 * (r_t - params.goal_radius)
    return r


def reward_selection(state: WorldState, params: SimParams, gains: RewardGains) -> float:
    excess = np.hypot(state.targets[:, 0], state.targets[:, 1]) - params.goal_radius
    return -gains.k4 * float(np.sum(excess[excess > 0]))


def _trace_rewards(htrace, ttrace, utrace, params: SimParams, gains: RewardGains) -> np.ndarray:
    """Per-step rewards of a finished trajectory, scored on the post-step state."""
    t = ttrace[1:]
    r_t = np.hypot(t[..., 0], t[..., 1])
    if params.num_herders == 1 and params.num_targets == 1:
        h = htrace[1:, 0]
        outside = r_t[:, 0] > params.goal_radius
        dist = np.hypot(t[:, 0, 0] - h[:, 0], t[:, 0, 1] - h[:, 1])
        effort = np.hypot(utrace[:, 0, 0], utrace[:, 0, 1])
        return (-gains.k1 * dist * outside - gains.k2 * (r_t[:, 0] - params.goal_radius) * outside
                - gains.k3 * effort)
    excess = np.maximum(r_t - params.goal_radius, 0.0)
    return -gains.k4 * excess.sum(axis=1)


# -- observations ----------------------------------------------------------

def observe_driving(state: WorldState, params: SimParams, target: int = 0, herder: int = 0) -> np.ndarray:
    t = state.targets[target]
    h = state.herders[herder]
    return np.concatenate([t, t - h]) / params.arena_half_width


def driving_observations(herders: np.ndarray, targets: np.ndarray, scale: float) -> np.ndarray:
    """Row-wise driving inputs for paired (herder, target) rows."""
    return np.concatenate([targets, targets - herders], axis=1) / scale


def nearest_order(points: np.ndarray, origin: np.ndarray) -> np.ndarray:
    d = points - origin
    return np.argsort(np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]), kind="stable")


def selection_layout(state: WorldState, self_index: int, n_herders: int | None = None,
                     n_targets: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Global ids of the other herders and targets in observation order."""
    me = state.herders[self_index]
    others = np.delete(np.arange(len(state.herders)), self_index)
    others = others[nearest_order(state.herders[others], me)]
    targets = nearest_order(state.targets, me)
    if n_herders is not None:
        others = others[: n_herders - 1]
    if n_targets is not None:
        targets = targets[:n_targets]
    return others, targets


def observe_selection(state: WorldState, self_index: int, params: SimParams) -> np.ndarray:
    others, targets = selection_layout(state, self_index)
    block = np.concatenate([state.herders[[self_index]], state.herders[others], state.targets[targets]])
    return block.ravel() / params.arena_half_width


# -- episodes --------------------------------------------------------------

class Controller(Protocol):
    def reset(self, params: SimParams, rng: RngStream) -> None: ...

    def __call__(self, state: WorldState, params: SimParams) -> np.ndarray: ...


class Episode:
    """One seeded episode stepped by externally supplied herder commands."""

    def __init__(self, params: SimParams, config: EpisodeConfig, seed: int, initial: WorldState | None = None):
        streams = episode_streams(seed)
        self.params = params
        self.config = config
        self.seed = seed
        self.policy_rng = streams["policy"]
        self.state = sample_initial(params, streams["init"])
        if initial is not None:
            # scripted start; the init stream is still drawn so noise and policy streams are unaffected
            self.state = WorldState(np.array(initial.herders, dtype=float), np.array(initial.targets, dtype=float))
        self.noise = streams["noise"].standard_normal((config.max_steps, params.num_targets, 2))
        n_h = config.max_steps
        self.htrace = np.empty((n_h + 1, params.num_herders, 2))
        self.ttrace = np.empty((n_h + 1, params.num_targets, 2))
        self.utrace = np.empty((n_h, params.num_herders, 2))
        self.chi = np.empty(n_h + 1)
        self.htrace[0] = self.state.herders
        self.ttrace[0] = self.state.targets
        self.chi[0] = chi(self.state, params)
        self._run = 1 if self.chi[0] >= SUCCESS_LEVEL else 0

    @property
    def k(self) -> int:
        return self.state.step

    @property
    def succeeded(self) -> bool:
        return self._run > self.config.success_window

    @property
    def done(self) -> bool:
        return self.succeeded or self.k >= self.config.max_steps

    @property
    def truncated(self) -> bool:
        return self.k >= self.config.max_steps and not self.succeeded

    def step(self, commands: np.ndarray) -> np.ndarray:
        """Advance one step; returns the saturated commands actually applied."""
        if self.done:
            raise RuntimeError("episode already finished")
        p = self.params
        k = self.k
        u = kernels.saturate(np.asarray(commands, dtype=float).reshape(p.num_herders, 2), p.herder_max_speed)
        s = self.state
        targets = kernels.advance_targets(s.targets, s.herders, self.noise[k], p.dt * p.repulsion_gain,
                                          p.repulsion_range, p.noise_scale, p.arena_half_width)
        herders = kernels.advance_herders(s.herders, u, p.dt, p.arena_half_width)
        self.state = WorldState(herders, targets, k + 1)
        self.utrace[k] = u
        self.htrace[k + 1] = herders
        self.ttrace[k + 1] = targets
        self.chi[k + 1] = chi(self.state, p)
        self._run = self._run + 1 if self.chi[k + 1] >= SUCCESS_LEVEL else 0
        return u

    def record(self, gains: RewardGains | None = None, keep_traces: bool = False) -> EpisodeRecord:
        return make_record(self.k, self.chi[: self.k + 1], self.htrace[: self.k + 1], self.ttrace[: self.k + 1],
                           self.utrace[: self.k], self.params, self.config, gains, keep_traces, self.seed)


def make_record(steps, chi_trace, htrace, ttrace, utrace, params, config, gains, keep_traces, seed) -> EpisodeRecord:
    n_star = settling_time(chi_trace, config.success_window, config.max_steps)
    reward = float(_trace_rewards(htrace, ttrace, utrace, params, gains or RewardGains()).sum())
    return EpisodeRecord(
        success=n_star is not None,
        settling_time=n_star,
        path_length=path_length(htrace.transpose(1, 0, 2), steps),
        chi_trace=np.array(chi_trace),
        cumulative_reward=reward,
        steps=int(steps),
        seed=seed,
        params=params,
        herder_trace=np.array(htrace) if keep_traces else None,
        target_trace=np.array(ttrace) if keep_traces else None,
        command_trace=np.array(utrace) if keep_traces else None,
    )


def run_episode(controller, config: EpisodeConfig, params: SimParams, seed: int,
                gains: RewardGains | None = None, keep_traces: bool = False, fused: bool = True,
                initial: WorldState | None = None) -> EpisodeRecord:
    """Run one episode of ``controller`` from the initial condition fixed by ``seed``.

    Controllers exposing ``rollout`` (the heuristic) run inside a single compiled
    kernel when ``fused`` is set; the result is identical to the step loop.
    """
    ep = Episode(params, config, seed, initial)
    controller.reset(params, ep.policy_rng)
    if fused and hasattr(controller, "rollout"):
        steps, chi_trace, htrace, ttrace, utrace = controller.rollout(ep.state, ep.noise, params, config)
        return make_record(steps, chi_trace, htrace, ttrace, utrace, params, config, gains, keep_traces, seed)
    while not ep.done:
        ep.step(controller(ep.state, params))
    return ep.record(gains, keep_traces)
