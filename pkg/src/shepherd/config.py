"""YAML configuration: built-in nominal defaults, file values, then dotted
``key=value`` overrides.  The resolved config is echoed next to the outputs."""
from __future__ import annotations

import copy
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .env import EpisodeConfig, RewardGains
from .harness import ConfigError, ExperimentConfig, Perturbation
from .heuristic import HeuristicParams
from .hierarchy import SensingConfig
from .rl import PpoHyper
from .sim import SimParams

SCENARIO_SIZES = {"drive-1v1": (1, 1, 1200), "select-2v5": (2, 5, 3000)}

SIM_ALIASES = {
    "rho_G": "goal_radius", "rho_g": "goal_radius", "R": "arena_half_width", "v_H": "herder_max_speed",
    "vH": "herder_max_speed", "D": "diffusion", "lambda": "repulsion_range", "lam": "repulsion_range",
    "kT": "repulsion_gain", "k_T": "repulsion_gain", "eps": "buffer_fraction", "epsilon": "buffer_fraction",
    "N": "num_herders", "M": "num_targets",
}


def _hyper_dict(h: PpoHyper) -> dict:
    d = {f.name: getattr(h, f.name) for f in fields(h)}
    d["hidden"] = list(d["hidden"])
    return d


def defaults() -> dict:
    sim = {f.name: getattr(SimParams(), f.name) for f in fields(SimParams) if f.name != "strict"}
    sim["num_herders"] = None
    sim["num_targets"] = None
    return {
        "scenario": "drive-1v1",
        "controllers": ["heuristic"],
        "episodes": 1000,
        "seed": 0,
        "sim": sim,
        "episode": {"max_steps": None, "success_window": 200, "action_hold": 100, "eval_action_hold": 1},
        "gains": {f.name: getattr(RewardGains(), f.name) for f in fields(RewardGains)},
        "heuristic": {"standoff": None, "gain": 10.0, "idle": "contain"},
        "perturbation": {"enabled": False, "std_fraction": 0.3},
        "sensing": {"herders": 2, "targets": 5},
        "scale": {"num_herders": 10, "num_targets": 100},
        "ppo": _hyper_dict(PpoHyper()),
        "mappo": _hyper_dict(PpoHyper.mappo()),
        "checkpoints": {"driving": None, "selection": None},
    }


def _canonical(section: str, key: str) -> str:
    return SIM_ALIASES.get(key, key) if section == "sim" else key


def _merge(base: dict, extra: dict, prefix: str = "") -> None:
    for key, value in extra.items():
        key = _canonical(prefix, key)
        path = f"{prefix}.{key}" if prefix else key
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a mapping")
            _merge(base[key], value, path)
        else:
            base[key] = value


def apply_override(cfg: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    parts = key.strip().split(".")
    node = cfg
    for i, part in enumerate(parts):
        part = _canonical(parts[i - 1] if i else "", part)
        path = ".".join(parts[: i + 1])
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key {path!r}")
        if i == len(parts) - 1:
            if isinstance(node[part], dict):
                raise ConfigError(f"config key {path!r} is a section, not a value")
            try:
                node[part] = yaml.safe_load(raw)
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse value for {path!r}: {exc}") from exc
        else:
            node = node[part]


def resolve(cfg: dict) -> dict:
    """Fill scenario-dependent sizes so the echoed config is self-contained."""
    cfg = copy.deepcopy(cfg)
    scenario = cfg["scenario"]
    if scenario == "scale-NxM":
        n, m, steps = cfg["scale"]["num_herders"], cfg["scale"]["num_targets"], 3000
    elif scenario in SCENARIO_SIZES:
        n, m, steps = SCENARIO_SIZES[scenario]
    else:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of drive-1v1, select-2v5, scale-NxM")
    if cfg["sim"]["num_herders"] is None:
        cfg["sim"]["num_herders"] = n
    if cfg["sim"]["num_targets"] is None:
        cfg["sim"]["num_targets"] = m
    if cfg["episode"]["max_steps"] is None:
        cfg["episode"]["max_steps"] = steps
    return cfg


@dataclass
class Resolved:
    raw: dict
    experiment: ExperimentConfig
    ppo: PpoHyper
    mappo: PpoHyper
    sim: SimParams


def _build(section: str, factory, kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] settings: {exc}") from exc


def build(cfg: dict) -> Resolved:
    sim = _build("sim", SimParams, cfg["sim"])
    ep = cfg["episode"]
    episode = _build("episode", EpisodeConfig, {"max_steps": ep["max_steps"], "success_window": ep["success_window"],
                                                "action_hold": ep["action_hold"], "seed": cfg["seed"]})
    sensing = None
    if cfg["scenario"] == "scale-NxM":
        sensing = _build("sensing", SensingConfig, cfg["sensing"])
        try:
            sensing.check(sim)
        except ValueError as exc:
            raise ConfigError(f"invalid [sensing] settings: {exc}") from exc
    experiment = _build("experiment", ExperimentConfig, dict(
        scenario=cfg["scenario"],
        controllers=tuple(cfg["controllers"]),
        episodes=cfg["episodes"],
        base_seed=cfg["seed"],
        episode=episode,
        sim=sim,
        heuristic=_build("heuristic", HeuristicParams, cfg["heuristic"]),
        gains=_build("gains", RewardGains, cfg["gains"]),
        perturbation=_build("perturbation", Perturbation, cfg["perturbation"]),
        sensing=sensing,
        eval_hold=ep["eval_action_hold"],
        driving_checkpoint=cfg["checkpoints"]["driving"],
        selection_checkpoint=cfg["checkpoints"]["selection"],
    ))
    return Resolved(cfg, experiment, _build("ppo", PpoHyper, cfg["ppo"]), _build("mappo", PpoHyper, cfg["mappo"]),
                    sim)


def load_config(path=None, overrides=(), scenario: str | None = None) -> Resolved:
    """Defaults <- YAML file <- overrides, resolved and validated."""
    cfg = defaults()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        if data is not None:
            if not isinstance(data, dict):
                raise ConfigError(f"{p}: top level must be a mapping")
            _merge(cfg, data)
    if scenario is not None:
        cfg["scenario"] = scenario
    for assignment in overrides:
        apply_override(cfg, assignment)
    return build(resolve(cfg))


def dump_config(resolved: Resolved, path) -> None:
    Path(path).write_text(yaml.safe_dump(resolved.raw, sort_keys=True))
