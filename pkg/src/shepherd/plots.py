"""SVG figures from the CSV files written by training and the harness.

Every function reads a result file, checks its header and refuses to write
anything when the input is empty or has the wrong columns.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from .harness import EPISODE_COLUMNS, SCALE_COLUMNS  # noqa: E402
from .rl import moving_average  # noqa: E402

CURVE_COLUMNS = ["episode_index", "cumulative_reward", "moving_average"]
TRAJECTORY_COLUMNS = ["step", "kind", "index", "x", "y"]
CURVE_WINDOWS = {"driving": 200, "selection": 2000}

plt.rcParams["svg.hashsalt"] = "shepherd"
plt.rcParams["svg.fonttype"] = "none"  # keep labels as searchable text


class InputError(ValueError):
    """A result file is missing, empty or has an unexpected header."""


def read_table(path, columns: list[str]) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != columns:
            raise InputError(f"{path}: expected columns {columns}, found {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _save(fig, out) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def curve_window(path) -> int:
    """Moving-average window implied by a curve file name (driving 200, selection 2000)."""
    stem = Path(path).stem
    for name, window in CURVE_WINDOWS.items():
        if stem.startswith(name):
            return window
    return CURVE_WINDOWS["driving"]


def plot_learning_curve(path, out, window: int | None = None) -> Path:
    rows = read_table(path, CURVE_COLUMNS)
    window = window or curve_window(path)
    rewards = np.array([float(r["cumulative_reward"]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(rewards, color="0.8", lw=0.6, label="episode")
    ax.plot(moving_average(rewards, window), color="C0", lw=1.5, label=f"moving average ({window})")
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative reward")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, out)


def plot_boxes(path, out) -> Path:
    """Settling time and path length per controller, one panel each."""
    rows = read_table(path, EPISODE_COLUMNS)
    names = list(dict.fromkeys(r["controller"] for r in rows))
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.5))
    for ax, metric, label in zip(axes, ("n_star", "path_length"), ("settling time n*", "path length")):
        data = [[float(r[metric]) for r in rows if r["controller"] == n and r[metric] != ""] for n in names]
        ax.boxplot([d if d else [np.nan] for d in data], tick_labels=names)
        ax.set_ylabel(label)
    fig.tight_layout()
    return _save(fig, out)


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray]:
    """Herder and target positions as (steps, count, 2) arrays."""
    rows = read_table(path, TRAJECTORY_COLUMNS)
    steps = max(int(r["step"]) for r in rows) + 1
    counts = {}
    for r in rows:
        counts[r["kind"]] = max(counts.get(r["kind"], 0), int(r["index"]) + 1)
    if set(counts) != {"herder", "target"}:
        raise InputError(f"{path}: needs both herder and target rows")
    arrays = {k: np.full((steps, n, 2), np.nan) for k, n in counts.items()}
    for r in rows:
        arrays[r["kind"]][int(r["step"]), int(r["index"])] = float(r["x"]), float(r["y"])
    return arrays["herder"], arrays["target"]


def draw_goal(ax, goal_radius: float, buffer_fraction: float) -> tuple[Circle, Circle]:
    disk = Circle((0, 0), goal_radius, color="C2", alpha=0.2, lw=0)
    ring = Circle((0, 0), (1 + buffer_fraction) * goal_radius, fill=False, ls="--", color="C2")
    ax.add_patch(disk)
    ax.add_patch(ring)
    return disk, ring


def plot_trajectory(path, out, goal_radius: float = 5.0, buffer_fraction: float = 0.1,
                    arena_half_width: float = 25.0, snapshots: int = 4) -> Path:
    herders, targets = read_trajectory(path)
    n = len(herders)
    frames = sorted(set(np.linspace(0, n - 1, snapshots).round().astype(int)))
    fig, axes = plt.subplots(1, len(frames), figsize=(3 * len(frames), 3.2), squeeze=False)
    for ax, k in zip(axes[0], frames):
        draw_goal(ax, goal_radius, buffer_fraction)
        for i in range(herders.shape[1]):
            ax.plot(herders[: k + 1, i, 0], herders[: k + 1, i, 1], color="C0", lw=0.5, alpha=0.5)
        ax.scatter(targets[k, :, 0], targets[k, :, 1], marker="o", s=14, color="C3", label="targets")
        ax.scatter(herders[k, :, 0], herders[k, :, 1], marker="D", s=22, color="C0", label="herders")
        ax.set_xlim(-arena_half_width, arena_half_width)
        ax.set_ylim(-arena_half_width, arena_half_width)
        ax.set_aspect("equal")
        ax.set_title(f"step {k}")
    fig.tight_layout()
    return _save(fig, out)


def plot_radii(path, out, goal_radius: float = 5.0, buffer_fraction: float = 0.1) -> Path:
    """Distance of every target from the goal centre over time."""
    _, targets = read_trajectory(path)
    radii = np.hypot(targets[..., 0], targets[..., 1])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(radii, lw=0.8)
    ax.axhline(goal_radius, color="k", lw=0.8)
    ax.axhline((1 + buffer_fraction) * goal_radius, color="k", ls="--", lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("target radius")
    fig.tight_layout()
    return _save(fig, out)


def plot_scale_trace(path, out, goal_radius: float = 5.0) -> Path:
    rows = read_table(path, SCALE_COLUMNS)
    cols = {c: np.array([float(r[c]) for r in rows]) for c in SCALE_COLUMNS}
    fig, (ax, ax_chi) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    ax.fill_between(cols["step"], cols["min_radius"], cols["max_radius"], color="C0", alpha=0.15)
    ax.fill_between(cols["step"], cols["mean_radius"] - cols["std_radius"],
                    cols["mean_radius"] + cols["std_radius"], color="C0", alpha=0.3)
    ax.plot(cols["step"], cols["mean_radius"], color="C0")
    ax.axhline(goal_radius, color="k", lw=0.8)
    ax.set_ylabel("target radius")
    ax_chi.plot(cols["step"], cols["chi"], color="C1")
    ax_chi.set_ylim(-0.02, 1.02)
    ax_chi.set_xlabel("step")
    ax_chi.set_ylabel("chi")
    fig.tight_layout()
    return _save(fig, out)


def emit_plots(inputs, out_dir, goal_radius: float = 5.0, buffer_fraction: float = 0.1,
               arena_half_width: float = 25.0) -> list[Path]:
    """Plot every recognised result file among ``inputs`` (files or directories)."""
    files: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        elif p.is_file():
            files.append(p)
        else:
            raise InputError(f"no such file or directory: {p}")
    jobs = []
    stems = [f.stem for f in files]
    for f in files:
        # same-named results from several runs get their directory name as a prefix
        name = f.stem if stems.count(f.stem) == 1 else f"{f.parent.name}_{f.stem}"
        if f.stem.endswith("_curve"):
            jobs.append((CURVE_COLUMNS, lambda f=f, name=name: [plot_learning_curve(f, out / f"{name}.svg")]))
        elif f.stem == "episodes":
            jobs.append((EPISODE_COLUMNS, lambda f=f, name=name: [plot_boxes(f, out / f"{name}_boxes.svg")]))
        elif f.stem.startswith("trajectory"):
            jobs.append((TRAJECTORY_COLUMNS, lambda f=f, name=name: [
                plot_trajectory(f, out / f"{name}.svg", goal_radius, buffer_fraction, arena_half_width),
                plot_radii(f, out / f"{name}_radii.svg", goal_radius, buffer_fraction)]))
        elif f.stem == "scale_trace":
            jobs.append((SCALE_COLUMNS, lambda f=f, name=name: [plot_scale_trace(f, out / f"{name}.svg",
                                                                                 goal_radius)]))
        else:
            continue
        read_table(f, jobs[-1][0])  # fail on bad input before anything is written
    if not jobs:
        raise InputError("no recognised result files to plot")
    out = Path(out_dir)
    return [p for _, job in jobs for p in job()]
