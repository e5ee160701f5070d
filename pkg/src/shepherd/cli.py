"""``shepherd`` command line: training, validation, robustness, scale demo and plots.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .harness import ConfigError, run_robustness, run_scale_demo, run_validation
from .nn import load_params, save_params
from .plots import InputError, emit_plots
from .rl import write_learning_curve

log = logging.getLogger("shepherd")

SUBCOMMANDS = ("train-driving", "train-selection", "validate", "robustness", "scale", "plot")
SCENARIO_FOR = {"train-driving": "drive-1v1", "train-selection": "select-2v5", "scale": "scale-NxM"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shepherd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config merged over the built-in defaults")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted override, e.g. sim.D=0 (repeatable)")
        p.add_argument("--episodes", type=int, help="validation episodes, or training episodes for train-*")
        p.add_argument("--checkpoint", help="directory holding driving.ckpt / selection.ckpt")
        if name == "plot":
            p.add_argument("inputs", nargs="+", help="result CSV files or directories")
    return parser


def _overrides(args) -> list[str]:
    """Fold the convenience flags into dotted overrides so the echoed config captures them."""
    extra = []
    if args.seed is not None:
        extra.append(f"seed={args.seed}")
    if args.episodes is not None:
        key = {"train-driving": "ppo.total_episodes", "train-selection": "mappo.total_episodes"}
        extra.append(f"{key.get(args.command, 'episodes')}={args.episodes}")
    if args.checkpoint is not None:
        ckpt = Path(args.checkpoint).resolve()
        extra.append(f"checkpoints.driving={ckpt / 'driving.ckpt'}")
        if args.command != "train-selection":
            extra.append(f"checkpoints.selection={ckpt / 'selection.ckpt'}")
    return [*args.overrides, *extra]


def _train_driving(resolved, out: Path) -> None:
    from .rl import train_driving

    exp = resolved.experiment
    result = train_driving(resolved.ppo, resolved.sim, exp.episode, exp.base_seed, exp.gains)
    save_params(out / "driving.ckpt", result.actor)
    save_params(out / "driving_critic.ckpt", result.critic)
    write_learning_curve(out / "driving_curve.csv", result.episode_rewards, 200)


def _train_selection(resolved, out: Path) -> None:
    from .rl import train_selection

    exp = resolved.experiment
    path = exp.driving_checkpoint
    if not path or not Path(path).is_file():
        raise ConfigError(f"train-selection needs a driving checkpoint; not found: {path!r}")
    driving = load_params(path)
    result = train_selection(resolved.mappo, resolved.sim, exp.episode, driving, exp.base_seed, exp.gains)
    save_params(out / "selection.ckpt", result.actor)
    save_params(out / "selection_critic.ckpt", result.critic)
    write_learning_curve(out / "selection_curve.csv", result.episode_rewards, 2000)


def _scale(resolved, out: Path) -> None:
    exp = resolved.experiment
    record, _ = run_scale_demo(exp, out, controller=exp.controllers[0])
    log.info("scale demo: final chi %.3f after %d steps", record.chi_trace[-1], record.steps)


def _plot(resolved, out: Path, inputs) -> None:
    sim = resolved.sim
    written = emit_plots(inputs, out, sim.goal_radius, sim.buffer_fraction, sim.arena_half_width)
    for p in written:
        log.info("wrote %s", p)


def run(args) -> None:
    scenario = SCENARIO_FOR.get(args.command)
    resolved = cfgmod.load_config(args.config, _overrides(args), scenario=scenario)
    out = Path(args.out)
    if args.command == "plot":
        # plot often writes next to the results it reads, so its echo gets its own name;
        # it is written only after the figures so bad input leaves nothing behind
        _plot(resolved, out, args.inputs)
        cfgmod.dump_config(resolved, out / "plot_config.yaml")
        return
    out.mkdir(parents=True, exist_ok=True)
    echo = out / "config.yaml"
    if args.config and echo.exists() and echo.resolve() == Path(args.config).resolve():
        raise ConfigError(f"--out would overwrite the input config {args.config}; choose another directory")
    cfgmod.dump_config(resolved, echo)
    if args.command == "train-driving":
        _train_driving(resolved, out)
    elif args.command == "train-selection":
        _train_selection(resolved, out)
    elif args.command == "validate":
        run_validation(resolved.experiment, out)
        print((out / "report.txt").read_text(), end="")
    elif args.command == "robustness":
        run_robustness(resolved.experiment, out)
        print((out / "report.txt").read_text(), end="")
    elif args.command == "scale":
        _scale(resolved, out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"shepherd: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (ConfigError, InputError) as exc:
        print(f"shepherd: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"shepherd: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
