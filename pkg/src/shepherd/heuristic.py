"""Model-based baseline: drive-from-behind proportional control plus the
furthest-target / closest-herder selection rule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .sim import RngStream, SimParams, WorldState


@dataclass(frozen=True)
class HeuristicParams:
    """Baseline constants.

    ``standoff`` is the distance kept behind the driven target; ``None`` means
    half the repulsion range of the simulated targets.  ``idle`` decides what a
    herder does once every target it owns is inside the buffered goal:
    ``"contain"`` keeps pushing the furthest of them, ``"hold"`` stops.
    """

    standoff: float | None = None
    gain: float = 10.0
    idle: str = "contain"

    def __post_init__(self):
        if self.standoff is not None and not self.standoff > 0:
            raise ValueError("standoff must be > 0")
        if not self.gain > 0:
            raise ValueError("gain must be > 0")
        if self.idle not in ("contain", "hold"):
            raise ValueError(f"idle must be 'contain' or 'hold', got {self.idle!r}")

    def standoff_for(self, params: SimParams) -> float:
        return params.repulsion_range / 2 if self.standoff is None else self.standoff


def heuristic_drive(h, t, params: SimParams, hp: HeuristicParams) -> np.ndarray:
    """Velocity steering ``h`` to the point ``standoff`` behind ``t`` (seen from the goal)."""
    h = np.asarray(h, dtype=float)[None, :]
    t = np.asarray(t, dtype=float)[None, :]
    sel = np.zeros(1, dtype=np.int64)
    return kernels.heuristic_commands(h, t, sel, params.herder_max_speed, hp.standoff_for(params), hp.gain)[0]


def heuristic_select(state: WorldState, self_index: int, params: SimParams,
                     hp: HeuristicParams = HeuristicParams()) -> int | None:
    """Index of the target herder ``self_index`` should drive, or None."""
    sel = kernels.heuristic_select(state.herders, state.targets, params.buffered_radius, hp.idle == "contain")
    a = int(sel[self_index])
    return None if a < 0 else a


class HeuristicController:
    def __init__(self, hp: HeuristicParams = HeuristicParams()):
        self.hp = hp

    def reset(self, params: SimParams, rng: RngStream | None = None) -> None:
        pass

    def __call__(self, state: WorldState, params: SimParams) -> np.ndarray:
        sel = kernels.heuristic_select(state.herders, state.targets, params.buffered_radius,
                                       self.hp.idle == "contain")
        return kernels.heuristic_commands(state.herders, state.targets, sel, params.herder_max_speed,
                                          self.hp.standoff_for(params), self.hp.gain)

    def rollout(self, state: WorldState, noise: np.ndarray, params: SimParams, config):
        p = params
        return kernels.heuristic_episode(
            state.herders, state.targets, noise, p.arena_half_width, p.herder_max_speed,
            p.dt * p.repulsion_gain, p.repulsion_range, p.dt, p.noise_scale,
            self.hp.standoff_for(p), self.hp.gain, p.buffered_radius, self.hp.idle == "contain",
            config.success_window, config.max_steps)
