"""Shepherding dynamics: harmonic herder-target repulsion, Brownian targets and
speed-limited single-integrator herders, integrated with Euler-Maruyama on the
square arena [-R, R]^2.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

OVERLAP_EPS = 1e-9


@dataclass(frozen=True)
class SimParams:
    """Physical constants of the herding model (defaults are the nominal set)."""

    goal_radius: float = 5.0
    arena_half_width: float = 25.0
    herder_max_speed: float = 8.0
    diffusion: float = 0.5
    repulsion_range: float = 2.5
    repulsion_gain: float = 3.0
    dt: float = 0.05
    buffer_fraction: float = 0.1
    num_herders: int = 1
    num_targets: int = 1
    # Perturbed parameter draws may break the speed condition; they are built
    # with strict=False and the violation is only logged.
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        positive = ("goal_radius", "arena_half_width", "herder_max_speed", "repulsion_range", "dt")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("diffusion", "repulsion_gain", "buffer_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.num_herders < 1 or self.num_targets < 1:
            raise ValueError("num_herders and num_targets must be >= 1")
        if not self.buffered_radius < self.arena_half_width:
            raise ValueError("buffered goal radius (1+buffer_fraction)*goal_radius must be < arena_half_width")
        if not self.herder_max_speed > self.target_escape_speed:
            msg = (f"herder_max_speed ({self.herder_max_speed}) must exceed repulsion_gain*repulsion_range "
                   f"({self.target_escape_speed})")
            if self.strict:
                raise ValueError(msg)
            log.warning("speed condition violated: %s", msg)
        if self.repulsion_gain * self.repulsion_range ** 2 < 10 * self.diffusion:
            warnings.warn("repulsion_gain*repulsion_range**2 is not >> diffusion; noise may dominate",
                          RuntimeWarning, stacklevel=3)

    @property
    def target_escape_speed(self) -> float:
        return self.repulsion_gain * self.repulsion_range

    @property
    def buffered_radius(self) -> float:
        return (1.0 + self.buffer_fraction) * self.goal_radius

    @property
    def noise_scale(self) -> float:
        return math.sqrt(2.0 * self.diffusion * self.dt)

    def with_agents(self, num_herders: int, num_targets: int) -> "SimParams":
        return replace(self, num_herders=num_herders, num_targets=num_targets)


@dataclass
class WorldState:
    herders: np.ndarray  # (N, 2)
    targets: np.ndarray  # (M, 2)
    step: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.herders.copy(), self.targets.copy(), self.step)


class RngStream:
    """Seeded numpy ``Generator`` wrapper; one stream per independent consumer."""

    def __init__(self, seed: int | np.random.SeedSequence):
        self.seed_sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed_sequence))

    @property
    def seed(self):
        return self.seed_sequence.entropy

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def random(self, shape) -> np.ndarray:
        return self.generator.random(shape)

    def normal(self, loc: float, scale: float) -> float:
        return float(self.generator.normal(loc, scale))

    def spawn(self, n: int) -> list["RngStream"]:
        return [RngStream(s) for s in self.seed_sequence.spawn(n)]


def episode_streams(seed: int) -> dict[str, RngStream]:
    """Independent per-episode streams derived from one seed.

    Initial conditions, target noise, parameter perturbation and policy sampling
    never share a stream, so the controller cannot desynchronise the noise.
    """
    init, noise, perturb, policy = RngStream(seed).spawn(4)
    return {"init": init, "noise": noise, "perturb": perturb, "policy": policy}


def repulsion(lam: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = math.sqrt(x[0] * x[0] + x[1] * x[1])
    if d < OVERLAP_EPS or d > lam:
        return np.zeros(2)
    return ((lam - d) / d) * x


def clamp_domain(p: np.ndarray, params: SimParams) -> np.ndarray:
    return np.clip(p, -params.arena_half_width, params.arena_half_width)


def _check_shape(state: WorldState, params: SimParams):
    if state.herders.shape != (params.num_herders, 2) or state.targets.shape != (params.num_targets, 2):
        raise ValueError(f"state shapes {state.herders.shape}/{state.targets.shape} do not match "
                         f"N={params.num_herders}, M={params.num_targets}")


def advance_targets(state: WorldState, params: SimParams, noise: np.ndarray) -> np.ndarray:
    """Target Euler-Maruyama step with an explicit (M, 2) standard-normal draw."""
    return kernels.advance_targets(state.targets, state.herders, noise, params.dt * params.repulsion_gain,
                                   params.repulsion_range, params.noise_scale, params.arena_half_width)


def step_targets(state: WorldState, params: SimParams, rng: RngStream) -> np.ndarray:
    _check_shape(state, params)
    return advance_targets(state, params, rng.standard_normal((params.num_targets, 2)))


def saturate(u: np.ndarray, vmax: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        return kernels.saturate(u[None, :], vmax)[0]
    return kernels.saturate(u, vmax)


def step_herder(h, u, params: SimParams) -> np.ndarray:
    h = np.asarray(h, dtype=float)[None, :]
    u = saturate(u, params.herder_max_speed)[None, :]
    return kernels.advance_herders(h, u, params.dt, params.arena_half_width)[0]


def sample_disk(n: int, radius: float, rng: RngStream) -> np.ndarray:
    u = rng.random((n, 2))
    r = radius * np.sqrt(u[:, 0])
    theta = 2.0 * np.pi * u[:, 1]
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def sample_initial(params: SimParams, rng: RngStream) -> WorldState:
    """Herders then targets, i.i.d. area-uniform on the disk of radius R."""
    pts = sample_disk(params.num_herders + params.num_targets, params.arena_half_width, rng)
    return WorldState(pts[: params.num_herders].copy(), pts[params.num_herders:].copy(), 0)
