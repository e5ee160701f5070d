"""Two-layer herder controller: shared target-selection network on top of the
frozen driving network, with optional topological (k-nearest) sensing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import observe_driving, selection_layout
from .nn import MlpParams, forward
from .sim import RngStream, SimParams, WorldState


@dataclass(frozen=True)
class SensingConfig:
    herders: int  # perceived herders, self included
    targets: int

    def check(self, params: SimParams) -> None:
        if not 1 <= self.herders <= params.num_herders:
            raise ValueError(f"sensed herders {self.herders} outside [1, {params.num_herders}]")
        if not 1 <= self.targets <= params.num_targets:
            raise ValueError(f"sensed targets {self.targets} outside [1, {params.num_targets}]")


def topological_observe(state: WorldState, self_index: int, sensing: SensingConfig | None,
                        params: SimParams) -> tuple[np.ndarray, np.ndarray]:
    """Selection input restricted to the nearest herders/targets, plus the global
    ids of the perceived targets in slot order."""
    n_h = None if sensing is None else sensing.herders
    n_t = None if sensing is None else sensing.targets
    others, targets = selection_layout(state, self_index, n_h, n_t)
    block = np.concatenate([state.herders[[self_index]], state.herders[others], state.targets[targets]])
    return block.ravel() / params.arena_half_width, targets


class HierarchicalPolicy:
    """Per-herder selection + driving.

    Every herder runs the same selection network on its own observation; no
    decision state is shared between herders.
    """

    def __init__(self, selection: MlpParams, driving: MlpParams, sensing: SensingConfig | None = None,
                 hold: int = 1, deterministic: bool = True):
        if hold < 1:
            raise ValueError("hold must be >= 1")
        if selection.output != "softmax":
            raise ValueError("selection network must have a softmax head")
        self.selection = selection
        self.driving = driving
        self.sensing = sensing
        self.hold = hold
        self.deterministic = deterministic
        self.hold_counter = np.zeros(0, dtype=np.int64)
        self.current = np.zeros(0, dtype=np.int64)
        self.rng: np.random.Generator | None = None

    def reset(self, params: SimParams, rng: RngStream | None = None) -> None:
        n_in = 2 * ((self.sensing.herders + self.sensing.targets) if self.sensing
                    else (params.num_herders + params.num_targets))
        if n_in != self.selection.sizes[0]:
            raise ValueError(f"selection network expects {self.selection.sizes[0]} inputs, sensing gives {n_in}")
        if self.sensing is not None:
            self.sensing.check(params)
        self.hold_counter = np.zeros(params.num_herders, dtype=np.int64)
        self.current = np.full(params.num_herders, -1, dtype=np.int64)
        self.rng = (rng or RngStream(0)).generator

    def select(self, state: WorldState, i: int, params: SimParams) -> int:
        obs, perceived = topological_observe(state, i, self.sensing, params)
        probs = forward(self.selection, obs)
        if self.deterministic:
            local = int(np.argmax(probs))
        else:
            local = int(min(np.searchsorted(np.cumsum(probs), self.rng.random(), side="right"), len(probs) - 1))
        if not 0 <= local < len(perceived):
            raise RuntimeError(f"selected slot {local} outside perceived set of {len(perceived)}")
        return int(perceived[local])

    def _perceives(self, state: WorldState, i: int, target: int) -> bool:
        if self.sensing is None or self.sensing.targets >= len(state.targets):
            return True
        _, perceived = selection_layout(state, i, None, self.sensing.targets)
        return bool(np.any(perceived == target))

    def act(self, state: WorldState, i: int, params: SimParams) -> np.ndarray:
        """Velocity command of herder ``i``."""
        if self.hold_counter[i] == 0 or not self._perceives(state, i, self.current[i]):
            self.current[i] = self.select(state, i, params)
            self.hold_counter[i] = 0
        obs = observe_driving(state, params, target=self.current[i], herder=i)
        mean = forward(self.driving, obs)
        if self.deterministic or self.driving.log_std is None:
            a = mean
        else:
            a = mean + np.exp(self.driving.log_std) * self.rng.standard_normal(mean.shape)
        self.hold_counter[i] = (self.hold_counter[i] + 1) % self.hold
        return params.herder_max_speed * a

    def __call__(self, state: WorldState, params: SimParams) -> np.ndarray:
        return np.stack([self.act(state, i, params) for i in range(params.num_herders)])


class DrivingController:
    """Learned driving policy alone (one herder, one target)."""

    def __init__(self, driving: MlpParams):
        self.driving = driving

    def reset(self, params: SimParams, rng: RngStream | None = None) -> None:
        if params.num_herders != 1 or params.num_targets != 1:
            raise ValueError("driving-only controller needs one herder and one target")

    def __call__(self, state: WorldState, params: SimParams) -> np.ndarray:
        return params.herder_max_speed * forward(self.driving, observe_driving(state, params))[None, :]
