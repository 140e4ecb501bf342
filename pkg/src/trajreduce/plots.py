"""Static SVG artifacts mirroring the usual corridor/footprint views."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .footprint import FootprintGrid  # noqa: E402
from .representative import WeightedTrajectory  # noqa: E402
from .trajectory_io import Trajectory  # noqa: E402

# deterministic SVG ids so identical runs produce identical bytes
matplotlib.rcParams["svg.hashsalt"] = "trajreduce"

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def plot_top_view(clusters: list[list[Trajectory]], path: Path,
                  representatives: list[WeightedTrajectory] | None = None) -> None:
    fig, ax = plt.subplots(figsize=(7, 7))
    for idx, cluster in enumerate(clusters):
        color = f"C{idx % 10}"
        for traj in cluster:
            ax.plot([p.east for p in traj.points], [p.north for p in traj.points],
                    color=color, alpha=0.25, linewidth=0.6)
    for rep in representatives or []:
        ax.plot(rep.points[:, 0], rep.points[:, 1], color="black", linewidth=0.9)
    ax.set_xlabel("east [m]")
    ax.set_ylabel("north [m]")
    ax.set_aspect("equal")
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_side_view(cluster: list[Trajectory], path: Path,
                   representatives: list[WeightedTrajectory] | None = None) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    for traj in cluster:
        ax.plot([p.east for p in traj.points], [p.altitude for p in traj.points],
                color="C0", alpha=0.25, linewidth=0.6)
    for rep in representatives or []:
        ax.plot(rep.points[:, 0], rep.points[:, 2], color="black", linewidth=0.9)
    ax.set_xlabel("east [m]")
    ax.set_ylabel("altitude [m]")
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_footprint(grid: FootprintGrid, path: Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(7, 6))
    e = grid.spec.east_centers()
    n = grid.spec.north_centers()
    half = grid.spec.cell / 2.0
    mesh = ax.imshow(
        grid.values.T, origin="lower", aspect="equal",
        extent=(e[0] - half, e[-1] + half, n[0] - half, n[-1] + half),
        cmap="viridis",
    )
    fig.colorbar(mesh, ax=ax, label="traffic within range [%]")
    ax.set_xlabel("east [m]")
    ax.set_ylabel("north [m]")
    if title:
        ax.set_title(title)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
