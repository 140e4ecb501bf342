"""Ground-level proximity footprints and their comparison statistics.

A footprint grid holds, per ground cell, the percentage of traffic passing
within a threat range (default 300 m) of the cell center. Proximity is the
3-D Euclidean distance from the ground-level cell center to the discrete
trajectory points, so overflights above the range contribute nothing.
Weighted representative trajectories contribute their chi-square weight
scaled by their cluster's share of the traffic.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .representative import WeightedTrajectory
from .trajectory_io import Trajectory


@dataclass(frozen=True)
class GridSpec:
    """Square-cell ground grid; origin is the center of cell (0, 0)."""

    origin: tuple[float, float]
    cell: float
    nx: int = 100
    ny: int = 100

    def __post_init__(self):
        if self.cell <= 0:
            raise ValueError("cell pitch must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be >= 1")

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + i * self.cell, self.origin[1] + j * self.cell)

    def east_centers(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.nx) * self.cell

    def north_centers(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny) * self.cell


def grid_from_trajectories(trajectories: list[Trajectory], range_m: float,
                           nx: int = 100, ny: int = 100) -> GridSpec:
    """Square-cell grid covering the tracks' ground box expanded by range_m."""
    if not trajectories:
        raise ValueError("need at least one trajectory to place the grid")
    easts = np.concatenate([[p.east for p in t.points] for t in trajectories])
    norths = np.concatenate([[p.north for p in t.points] for t in trajectories])
    e_lo, e_hi = easts.min() - range_m, easts.max() + range_m
    n_lo, n_hi = norths.min() - range_m, norths.max() + range_m
    cell = max((e_hi - e_lo) / nx, (n_hi - n_lo) / ny)
    if cell <= 0:
        cell = 1.0
    origin = (
        0.5 * (e_lo + e_hi) - 0.5 * (nx - 1) * cell,
        0.5 * (n_lo + n_hi) - 0.5 * (ny - 1) * cell,
    )
    return GridSpec(origin, cell, nx, ny)


@dataclass
class FootprintGrid:
    spec: GridSpec
    values: np.ndarray  # (nx, ny) percentages in [0, 100]
    range_m: float
    n_total: int = 0


def _coverage_mask(points: np.ndarray, spec: GridSpec, range_m: float) -> np.ndarray:
    """Cells whose ground center lies within range_m (3-D) of any point.

    Candidate windows are conservative; the inclusion test is the exact
    dx*dx + dy*dy + z*z <= range*range comparison so results match a plain
    per-cell scan bit for bit.
    """
    covered = np.zeros((spec.nx, spec.ny), dtype=bool)
    range_sq = range_m * range_m
    e0, n0 = spec.origin
    for x, y, z in points:
        if z * z > range_sq:
            continue
        i_lo = max(0, int(math.floor((x - range_m - e0) / spec.cell)) - 1)
        i_hi = min(spec.nx - 1, int(math.ceil((x + range_m - e0) / spec.cell)) + 1)
        j_lo = max(0, int(math.floor((y - range_m - n0) / spec.cell)) - 1)
        j_hi = min(spec.ny - 1, int(math.ceil((y + range_m - n0) / spec.cell)) + 1)
        if i_lo > i_hi or j_lo > j_hi:
            continue
        ge = e0 + np.arange(i_lo, i_hi + 1) * spec.cell
        gn = n0 + np.arange(j_lo, j_hi + 1) * spec.cell
        dx = ge - x
        dy = gn - y
        d2 = (dx * dx)[:, None] + (dy * dy)[None, :] + z * z
        covered[i_lo:i_hi + 1, j_lo:j_hi + 1] |= d2 <= range_sq
    return covered


def _trajectory_points(trajectory: Trajectory) -> np.ndarray:
    return np.array([[p.east, p.north, p.altitude] for p in trajectory.points])


def footprint_raw(trajectories: list[Trajectory], spec: GridSpec,
                  range_m: float = 300.0, n_total: int | None = None) -> FootprintGrid:
    """Percentage of trajectories passing within range_m of each cell.

    n_total defaults to the number of trajectories given; pass the full
    post-clustering count when evaluating a subset.
    """
    if range_m <= 0:
        raise ValueError("range_m must be positive")
    n_total = len(trajectories) if n_total is None else n_total
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    counts = np.zeros((spec.nx, spec.ny), dtype=np.int64)
    for trajectory in trajectories:
        counts += _coverage_mask(_trajectory_points(trajectory), spec, range_m)
    values = 100.0 * counts / n_total
    return FootprintGrid(spec, values, range_m, n_total)


def footprint_weighted(representatives: list[WeightedTrajectory],
                       cluster_sizes: dict[str, int], n_total: int,
                       spec: GridSpec, range_m: float = 300.0) -> FootprintGrid:
    """Weighted-representative footprint.

    Each representative contributes weight * cluster_share percentage points
    to every cell it comes within range of, at most once per trajectory.
    """
    if range_m <= 0:
        raise ValueError("range_m must be positive")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if sum(cluster_sizes.values()) > n_total:
        raise ValueError("cluster sizes exceed n_total")
    values = np.zeros((spec.nx, spec.ny))
    for rep in representatives:
        if rep.cluster not in cluster_sizes:
            raise ValueError(f"unknown cluster {rep.cluster!r} in representatives")
        share = cluster_sizes[rep.cluster] / n_total
        mask = _coverage_mask(rep.points, spec, range_m)
        values[mask] += 100.0 * rep.weight * share
    return FootprintGrid(spec, values, range_m, n_total)


@dataclass
class FootprintComparison:
    """Deviation statistics of a candidate grid against a reference.

    Deviations are candidate minus reference in percentage points, over the
    active cells (nonzero in either grid). The >5 thresholds are absolute
    percentage points, strict.
    """

    min_deviation: float
    max_deviation: float
    n_active: int
    n_under: int
    n_over: int
    n_under_gt5: int
    n_over_gt5: int


def compare_footprints(candidate: FootprintGrid, reference: FootprintGrid) -> FootprintComparison:
    if candidate.spec != reference.spec:
        raise ValueError("footprint grids have different specs")
    deviation = candidate.values - reference.values
    active = (candidate.values != 0.0) | (reference.values != 0.0)
    dev_active = deviation[active]
    if dev_active.size == 0:
        return FootprintComparison(0.0, 0.0, 0, 0, 0, 0, 0)
    return FootprintComparison(
        min_deviation=float(dev_active.min()),
        max_deviation=float(dev_active.max()),
        n_active=int(active.sum()),
        n_under=int(np.sum(dev_active < 0.0)),
        n_over=int(np.sum(dev_active > 0.0)),
        n_under_gt5=int(np.sum(dev_active < -5.0)),
        n_over_gt5=int(np.sum(dev_active > 5.0)),
    )


def serialize_grid(grid: FootprintGrid) -> str:
    """Row-major grid CSV: east_m,north_m,value_pct."""
    out = io.StringIO()
    out.write("east_m,north_m,value_pct\n")
    e0, n0 = grid.spec.origin
    for i in range(grid.spec.nx):
        for j in range(grid.spec.ny):
            out.write(f"{e0 + i * grid.spec.cell!r},{n0 + j * grid.spec.cell!r},"
                      f"{grid.values[i, j]!r}\n")
    return out.getvalue()


def serialize_comparison(comparison: FootprintComparison) -> str:
    """Key-value comparison report with counts and active-cell percentages."""
    c = comparison
    n = max(c.n_active, 1)
    lines = [
        f"grid-points active = {c.n_active}",
        f"minimum deviation = {c.min_deviation:.4f} %",
        f"maximum deviation = {c.max_deviation:.4f} %",
        f"grid-points underestimated = {c.n_under} ({100.0 * c.n_under / n:.2f} %)",
        f"grid-points overestimated = {c.n_over} ({100.0 * c.n_over / n:.2f} %)",
        f"grid-points underestimated (>5%) = {c.n_under_gt5} ({100.0 * c.n_under_gt5 / n:.2f} %)",
        f"grid-points overestimated (>5%) = {c.n_over_gt5} ({100.0 * c.n_over_gt5 / n:.2f} %)",
    ]
    return "\n".join(lines) + "\n"
