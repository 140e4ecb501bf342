"""Shared test helpers: independent oracles and tiny data builders."""

from __future__ import annotations

import math

import numpy as np

from trajreduce.trajectory_io import Trajectory, TrajectoryPoint


def make_trajectory(traj_id: str, coords, times=None) -> Trajectory:
    """Trajectory from an (M, 3) array of east/north/altitude."""
    coords = np.asarray(coords, dtype=float)
    if times is None:
        times = np.arange(len(coords), dtype=float)
    points = [
        TrajectoryPoint(float(t), float(e), float(n), float(a))
        for t, (e, n, a) in zip(times, coords)
    ]
    return Trajectory(traj_id, points)


def straight_trajectory(traj_id: str, start, end, n_points: int,
                        duration: float = 100.0) -> Trajectory:
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    fractions = np.linspace(0.0, 1.0, n_points)
    coords = start[None, :] + fractions[:, None] * (end - start)[None, :]
    return make_trajectory(traj_id, coords, times=fractions * duration)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Plain contingency-table ARI."""
    labels_a = list(labels_a)
    labels_b = list(labels_b)
    assert len(labels_a) == len(labels_b)
    n = len(labels_a)
    values_a = sorted(set(labels_a))
    values_b = sorted(set(labels_b))
    table = np.zeros((len(values_a), len(values_b)), dtype=np.int64)
    index_a = {v: i for i, v in enumerate(values_a)}
    index_b = {v: i for i, v in enumerate(values_b)}
    for a, b in zip(labels_a, labels_b):
        table[index_a[a], index_b[b]] += 1

    def comb2(x):
        return x * (x - 1) // 2

    sum_cells = sum(comb2(int(v)) for v in table.ravel())
    sum_rows = sum(comb2(int(v)) for v in table.sum(axis=1))
    sum_cols = sum(comb2(int(v)) for v in table.sum(axis=0))
    total = comb2(n)
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def dbscan_oracle(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Reference DBSCAN by transitive closure over the core adjacency graph.

    Core components are found by boolean closure; components are numbered
    by the input order of their first core point and border points join the
    lowest-numbered cluster with a core neighbor. Independent of the
    breadth-first production implementation.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    within = np.einsum("ijk,ijk->ij", diff, diff) <= eps * eps
    core = within.sum(axis=1) >= min_pts

    core_adj = within & core[:, None] & core[None, :]
    reach = core_adj.copy()
    np.fill_diagonal(reach, True)
    while True:
        grown = reach | (reach @ core_adj)
        if np.array_equal(grown, reach):
            break
        reach = grown

    labels = np.full(n, -1, dtype=int)
    cluster_id = 0
    for i in range(n):
        if core[i] and labels[i] == -1:
            members = np.flatnonzero(reach[i] & core)
            labels[members] = cluster_id
            cluster_id += 1
    for i in range(n):
        if core[i] or labels[i] != -1:
            continue
        core_neighbors = np.flatnonzero(within[i] & core)
        if core_neighbors.size:
            labels[i] = labels[core_neighbors].min()
    return labels


def footprint_oracle(trajectories, spec, range_m: float, n_total=None) -> np.ndarray:
    """Cell-by-trajectory double loop with the canonical distance expression."""
    n_total = len(trajectories) if n_total is None else n_total
    range_sq = range_m * range_m
    points_per_traj = [
        np.array([[p.east, p.north, p.altitude] for p in t.points])
        for t in trajectories
    ]
    values = np.zeros((spec.nx, spec.ny))
    for i in range(spec.nx):
        for j in range(spec.ny):
            ge = spec.origin[0] + i * spec.cell
            gn = spec.origin[1] + j * spec.cell
            hits = 0
            for pts in points_per_traj:
                dx = ge - pts[:, 0]
                dy = gn - pts[:, 1]
                z = pts[:, 2]
                d2 = dx * dx + dy * dy + z * z
                if np.any(d2 <= range_sq):
                    hits += 1
            values[i, j] = 100.0 * hits / n_total
    return values


def chi_square_pdf(dof: int, x: float) -> float:
    """Chi-square density straight from the gamma-form definition."""
    if x <= 0:
        return 0.0
    k = dof / 2.0
    return x ** (k - 1.0) * math.exp(-x / 2.0) / (2.0**k * math.gamma(k))


def canonical_partition(labels) -> list[frozenset]:
    """Order-free representation of a clustering (noise kept as singletons)."""
    groups: dict[int, set[int]] = {}
    noise = []
    for idx, lab in enumerate(labels):
        if lab == -1:
            noise.append(frozenset([idx]))
        else:
            groups.setdefault(int(lab), set()).add(idx)
    parts = [frozenset(g) for g in groups.values()] + noise
    return sorted(parts, key=lambda s: min(s))
