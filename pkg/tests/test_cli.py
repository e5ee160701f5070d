import subprocess
import sys

import pytest
import yaml

from shepherd.cli import main

TINY_EPISODE = ["--set", "episode.max_steps=60", "--set", "episode.success_window=20"]
TINY_PPO = ["--set", "ppo.hidden=[8]", "--set", "ppo.horizon=64", "--set", "ppo.minibatch_size=32",
            "--set", "ppo.num_actors=2", "--set", "ppo.epochs=2", "--episodes", "6"]
TINY_MAPPO = ["--set", "mappo.hidden=[8]", "--set", "mappo.horizon=16", "--set", "mappo.minibatch_size=16",
              "--set", "mappo.num_actors=2", "--set", "mappo.epochs=2", "--set", "episode.action_hold=10",
              "--episodes", "4"]


def csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def rerun_from_echo(tmp_path, command, first, extra=()):
    """Re-run ``command`` from the echoed config alone and compare every CSV byte for byte."""
    second = tmp_path / f"{first.name}_again"
    assert main([command, "--config", str(first / "config.yaml"), "--out", str(second), *extra]) == 0
    a, b = csv_bytes(first), csv_bytes(second)
    assert a and a == b
    return second


def test_validate_writes_results_and_reruns(tmp_path, capsys):
    out = tmp_path / "val"
    assert main(["validate", "--out", str(out), "--seed", "4", "--episodes", "3", *TINY_EPISODE]) == 0
    assert "heuristic: episodes=3" in capsys.readouterr().out
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert echoed["seed"] == 4 and echoed["episodes"] == 3 and echoed["episode"]["max_steps"] == 60
    assert {"episodes.csv", "report.json", "report.txt", "trajectory_heuristic.csv"} <= {p.name for p in out.iterdir()}
    rerun_from_echo(tmp_path, "validate", out)


def test_robustness_reruns(tmp_path):
    out = tmp_path / "rob"
    assert main(["robustness", "--out", str(out), "--episodes", "3", "--set", "scenario=select-2v5",
                 *TINY_EPISODE]) == 0
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert echoed["sim"]["num_targets"] == 5
    rerun_from_echo(tmp_path, "robustness", out)


def test_scale_reruns(tmp_path, random_checkpoints):
    ckpt = random_checkpoints[0].parent
    out = tmp_path / "scale"
    assert main(["scale", "--out", str(out), "--checkpoint", str(ckpt), "--set", "controllers=[learned]",
                 *TINY_EPISODE]) == 0
    lines = (out / "scale_trace.csv").read_text().splitlines()
    assert lines[0] == "step,mean_radius,std_radius,min_radius,max_radius,chi" and len(lines) == 62
    rerun_from_echo(tmp_path, "scale", out)


def test_train_driving_reruns(tmp_path):
    out = tmp_path / "drv"
    assert main(["train-driving", "--out", str(out), "--seed", "2", *TINY_PPO, *TINY_EPISODE]) == 0
    assert {"driving.ckpt", "driving_critic.ckpt", "driving_curve.csv"} <= {p.name for p in out.iterdir()}
    again = rerun_from_echo(tmp_path, "train-driving", out)
    assert (out / "driving.ckpt").read_bytes() == (again / "driving.ckpt").read_bytes()


def test_train_selection_reruns(tmp_path, random_checkpoints):
    ckpt = random_checkpoints[0].parent
    out = tmp_path / "sel"
    assert main(["train-selection", "--out", str(out), "--checkpoint", str(ckpt), *TINY_MAPPO,
                 *TINY_EPISODE]) == 0
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert echoed["checkpoints"]["selection"] is None
    again = rerun_from_echo(tmp_path, "train-selection", out)
    assert (out / "selection.ckpt").read_bytes() == (again / "selection.ckpt").read_bytes()


def test_plot_command(tmp_path):
    res = tmp_path / "val"
    assert main(["validate", "--out", str(res), "--episodes", "2", *TINY_EPISODE]) == 0
    figs = tmp_path / "figs"
    assert main(["plot", "--out", str(figs), str(res)]) == 0
    assert (figs / "episodes_boxes.svg").is_file() and (figs / "plot_config.yaml").is_file()


def test_inputs_untouched(tmp_path):
    cfg = tmp_path / "in.yaml"
    cfg.write_text("episodes: 2\nepisode:\n  max_steps: 40\n  success_window: 10\n")
    before = cfg.read_bytes()
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert cfg.read_bytes() == before
    # an output directory that holds the input config would overwrite it
    echo = tmp_path / "o" / "config.yaml"
    text = echo.read_bytes()
    assert main(["validate", "--config", str(echo), "--out", str(tmp_path / "o")]) == 1
    assert echo.read_bytes() == text


@pytest.mark.parametrize("argv", [
    [],
    ["validate"],
    ["fly", "--out", "x"],
    ["validate", "--out", "{tmp}/o", "--set", "sim.bogus=1"],
    ["validate", "--out", "{tmp}/o", "--set", "sim.kT=4"],
    ["validate", "--out", "{tmp}/o", "--config", "{tmp}/missing.yaml"],
    ["validate", "--out", "{tmp}/o", "--set", "controllers=[learned]"],
    ["train-selection", "--out", "{tmp}/o"],
    ["plot", "--out", "{tmp}/figs", "{tmp}/nothing.csv"],
])
def test_usage_and_config_errors_exit_1(tmp_path, argv, capsys):
    assert main([a.replace("{tmp}", str(tmp_path)) for a in argv]) == 1
    assert "error" in capsys.readouterr().err


def test_runtime_failure_exits_2(tmp_path):
    bad = tmp_path / "driving.ckpt"
    bad.write_bytes(b"garbage")
    argv = ["validate", "--out", str(tmp_path / "o"), "--set", "controllers=[learned]",
            "--set", f"checkpoints.driving={bad}", "--episodes", "1"]
    assert main(argv) == 2


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shepherd.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "train-driving" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "shepherd.cli", "validate"], capture_output=True, text=True)
    assert proc.returncode == 1
