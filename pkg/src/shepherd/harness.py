"""Seeded validation batches, parameter-perturbation sweeps and the large-scale
topological-sensing demo, with CSV/JSON result files."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from itertools import combinations
from pathlib import Path

import numpy as np

from .env import EpisodeConfig, EpisodeRecord, RewardGains, run_episode
from .heuristic import HeuristicController, HeuristicParams
from .hierarchy import DrivingController, HierarchicalPolicy, SensingConfig
from .nn import load_params
from .sim import SimParams, episode_streams
from .stats import mann_whitney_u, success_rate, summarize

log = logging.getLogger(__name__)

SCENARIOS = ("drive-1v1", "select-2v5", "scale-NxM")
CONTROLLERS = ("learned", "heuristic")
PERTURBED_FIELDS = ("diffusion", "repulsion_range", "repulsion_gain")
EPISODE_COLUMNS = ["episode_index", "seed", "controller", "success", "n_star", "path_length", "D", "lambda", "kT"]
SCALE_COLUMNS = ["step", "mean_radius", "std_radius", "min_radius", "max_radius", "chi"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Perturbation:
    enabled: bool = False
    std_fraction: float = 0.3

    def __post_init__(self):
        if not 0 <= self.std_fraction < 1:
            raise ValueError("perturbation std_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "drive-1v1"
    controllers: tuple[str, ...] = ("heuristic",)
    episodes: int = 1000
    base_seed: int = 0
    episode: EpisodeConfig = EpisodeConfig()
    sim: SimParams = SimParams()
    heuristic: HeuristicParams = HeuristicParams()
    gains: RewardGains = RewardGains()
    perturbation: Perturbation = Perturbation()
    sensing: SensingConfig | None = None
    eval_hold: int = 1
    driving_checkpoint: str | None = None
    selection_checkpoint: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        for c in self.controllers:
            if c not in CONTROLLERS:
                raise ValueError(f"unknown controller {c!r}")


@dataclass
class ValidationResult:
    records: dict[str, list[EpisodeRecord]]
    report: dict = field(default_factory=dict)


def perturbed_params(nominal: SimParams, perturbation: Perturbation, seed) -> SimParams:
    """Per-episode draw of D, lambda, kT ~ Normal(nominal, sigma_f * nominal), resampled until positive."""
    if not perturbation.enabled or perturbation.std_fraction == 0:
        return nominal
    rng = episode_streams(seed)["perturb"]
    values = {}
    for name in PERTURBED_FIELDS:
        nom = getattr(nominal, name)
        v = rng.normal(nom, perturbation.std_fraction * nom)
        while v <= 0:
            v = rng.normal(nom, perturbation.std_fraction * nom)
        values[name] = v
    return replace(nominal, strict=False, **values)


def _check_checkpoints(config: ExperimentConfig) -> None:
    if "learned" not in config.controllers:
        return
    needed = {"driving": config.driving_checkpoint}
    if config.scenario != "drive-1v1":
        needed["selection"] = config.selection_checkpoint
    for name, path in needed.items():
        if not path or not Path(path).is_file():
            raise ConfigError(f"learned controller needs a {name} checkpoint; not found: {path!r}")


def make_controller(name: str, config: ExperimentConfig):
    if name == "heuristic":
        return HeuristicController(config.heuristic)
    driving = load_params(config.driving_checkpoint)
    if config.scenario == "drive-1v1":
        return DrivingController(driving)
    return HierarchicalPolicy(load_params(config.selection_checkpoint), driving, config.sensing,
                              hold=config.eval_hold)


def _metric(records, name):
    if name == "n_star":
        return [r.settling_time for r in records if r.success]
    return [r.path_length for r in records]


def aggregate(records: dict[str, list[EpisodeRecord]]) -> dict:
    """Report numbers computed only from the episode records."""
    report: dict = {"controllers": {}, "comparisons": []}
    for name, recs in records.items():
        recs = sorted(recs, key=lambda r: r.seed)
        entry = {"episodes": len(recs), "success_rate": success_rate(recs),
                 "speed_violations": sum(1 for r in recs if r.params and
                                         not r.params.herder_max_speed > r.params.target_escape_speed)}
        for metric in ("n_star", "path_length"):
            vals = _metric(recs, metric)
            entry[metric] = asdict(summarize(vals)) if vals else None
        report["controllers"][name] = entry
    for a, b in combinations(records, 2):
        for metric in ("n_star", "path_length"):
            xa, xb = _metric(records[a], metric), _metric(records[b], metric)
            if xa and xb:
                res = mann_whitney_u(xa, xb)
                report["comparisons"].append({"metric": metric, "x": a, "y": b, "u": res.u, "p": res.p})
    return report


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_episodes_csv(path, records: dict[str, list[EpisodeRecord]], base_seed: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EPISODE_COLUMNS)
        for name, recs in records.items():
            for r in recs:
                p = r.params
                w.writerow([r.seed - base_seed, r.seed, name, int(r.success),
                            "" if r.settling_time is None else r.settling_time, _fmt(r.path_length),
                            _fmt(p.diffusion), _fmt(p.repulsion_range), _fmt(p.repulsion_gain)])


def write_report(out: Path, report: dict) -> None:
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    lines = []
    for name, e in report["controllers"].items():
        lines.append(f"{name}: episodes={e['episodes']} success_rate={e['success_rate']:.4f} "
                     f"speed_violations={e['speed_violations']}")
        for metric in ("n_star", "path_length"):
            s = e[metric]
            if s:
                lines.append(f"  {metric}: mean={s['mean']:.3f} median={s['median']:.3f} "
                             f"q1={s['q1']:.3f} q3={s['q3']:.3f} min={s['min']:.3f} max={s['max']:.3f}")
    for c in report["comparisons"]:
        lines.append(f"mann-whitney {c['metric']} {c['x']} vs {c['y']}: U={c['u']:.1f} p={c['p']:.3g}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")


def write_trajectory_csv(path, record: EpisodeRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "kind", "index", "x", "y"])
        for k in range(len(record.herder_trace)):
            for kind, trace in (("herder", record.herder_trace), ("target", record.target_trace)):
                for i, (x, y) in enumerate(trace[k]):
                    w.writerow([k, kind, i, repr(float(x)), repr(float(y))])


def run_validation(config: ExperimentConfig, out_dir=None, keep_traces: bool = False) -> ValidationResult:
    """Episode i of every controller uses seed base_seed + i (same start, same noise)."""
    _check_checkpoints(config)
    records: dict[str, list[EpisodeRecord]] = {}
    for name in config.controllers:
        controller = make_controller(name, config)
        recs = []
        for i in range(config.episodes):
            seed = config.base_seed + i
            params = perturbed_params(config.sim, config.perturbation, seed)
            recs.append(run_episode(controller, config.episode, params, seed, config.gains,
                                    keep_traces=keep_traces or i == 0))
        records[name] = recs
        log.info("%s: success rate %.4f over %d episodes", name, success_rate(recs), len(recs))
    report = aggregate(records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_episodes_csv(out / "episodes.csv", records, config.base_seed)
        write_report(out, report)
        for name, recs in records.items():
            write_trajectory_csv(out / f"trajectory_{name}.csv", recs[0])
    if not keep_traces:
        for recs in records.values():
            recs[0].herder_trace = recs[0].target_trace = recs[0].command_trace = None
    return ValidationResult(records, report)


def run_robustness(config: ExperimentConfig, out_dir=None) -> ValidationResult:
    if not config.perturbation.enabled:
        config = replace(config, perturbation=replace(config.perturbation, enabled=True))
    return run_validation(config, out_dir)


def scale_rows(record: EpisodeRecord) -> list[tuple]:
    t = record.target_trace
    radii = np.sqrt(t[..., 0] * t[..., 0] + t[..., 1] * t[..., 1])
    return [(k, float(r.mean()), float(r.std()), float(r.min()), float(r.max()), float(record.chi_trace[k]))
            for k, r in enumerate(radii)]


def run_scale_demo(config: ExperimentConfig, out_dir=None, controller: str = "learned") -> tuple[EpisodeRecord, list]:
    """One episode of the sensing-limited policy at scale; returns the record and the radius/chi trace."""
    config = replace(config, controllers=(controller,))
    _check_checkpoints(config)
    ctrl = make_controller(controller, config)
    record = run_episode(ctrl, config.episode, config.sim, config.base_seed, config.gains, keep_traces=True)
    rows = scale_rows(record)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "scale_trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCALE_COLUMNS)
            for row in rows:
                w.writerow([row[0], *(repr(v) for v in row[1:])])
    return record, rows
