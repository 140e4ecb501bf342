"""Group trajectories sharing a flight path: resample, PCA, DBSCAN.

Each trajectory is resampled to a fixed number of steps per dimension
(index-uniform, linear interpolation), the concatenated east/north/altitude
feature vectors are standardized per coordinate and reduced with PCA, and
the projected points are clustered with DBSCAN. Clusters smaller than a
minimum size are discarded as outliers together with noise points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trajectory_io import Trajectory

NOISE = -1


@dataclass
class ClusteringParams:
    resample_steps: int = 30
    variance_retained: float = 0.95
    eps: float = 0.20
    min_pts: int = 5
    min_cluster_size: int = 25

    def __post_init__(self):
        if self.resample_steps < 2:
            raise ValueError("resample_steps must be >= 2")
        if not 0.0 < self.variance_retained <= 1.0:
            raise ValueError("variance_retained must be in (0, 1]")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")


@dataclass
class PcaModel:
    """Column mean, orthonormal principal directions and their variances."""

    mean: np.ndarray
    components: np.ndarray  # (n_features, d), orthonormal columns
    explained_variance: np.ndarray  # (d,), non-increasing
    degenerate: bool = False  # zero total variance in the input


@dataclass
class ClusterLabeling:
    """Per-point labels: cluster index 0..K-1 or NOISE (-1)."""

    labels: np.ndarray

    @property
    def n_clusters(self) -> int:
        non_noise = self.labels[self.labels != NOISE]
        return int(non_noise.max()) + 1 if non_noise.size else 0

    def cluster_sizes(self) -> list[int]:
        return [int(np.sum(self.labels == k)) for k in range(self.n_clusters)]


@dataclass
class ClusterResult:
    clusters: list[list[Trajectory]]
    outliers: list[Trajectory]
    labels: np.ndarray  # final label per input trajectory, NOISE for outliers
    pca: PcaModel | None = None
    warnings: list[str] = field(default_factory=list)


def resample(trajectory: Trajectory, steps: int) -> np.ndarray:
    """Index-uniform resampling to a 3*steps feature vector.

    Values are taken at fractional index positions i*(M-1)/(steps-1) with
    linear interpolation between neighboring samples; the east, north and
    altitude blocks are concatenated in that order.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    m = len(trajectory.points)
    coords = np.array([[p.east, p.north, p.altitude] for p in trajectory.points])
    positions = np.arange(steps) * ((m - 1) / (steps - 1))
    index = np.arange(m, dtype=float)
    blocks = [np.interp(positions, index, coords[:, dim]) for dim in range(3)]
    return np.concatenate(blocks)


def pca_fit(features: np.ndarray, variance_retained: float) -> PcaModel:
    """Fit PCA keeping the fewest components reaching the variance fraction.

    Components are eigenvectors of the sample covariance (descending
    eigenvalue order); at least one component is always kept. Zero total
    variance yields a single arbitrary unit component flagged degenerate.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need an N x F matrix with N >= 2")
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    mean = features.mean(axis=0)
    centered = features - mean
    cov = centered.T @ centered / (features.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = eigvals.sum()
    if total <= 0.0:
        first = np.zeros(features.shape[1])
        first[0] = 1.0
        return PcaModel(mean, first[:, None], np.zeros(1), degenerate=True)
    cumulative = np.cumsum(eigvals) / total
    d = int(np.searchsorted(cumulative, variance_retained - 1e-12) + 1)
    d = max(1, min(d, features.shape[1]))
    return PcaModel(mean, eigvecs[:, :d], eigvals[:d])


def pca_project(model: PcaModel, features: np.ndarray) -> np.ndarray:
    """Project one feature vector or an N x F matrix onto the components."""
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != model.mean.shape[0]:
        raise ValueError("feature length does not match PCA model")
    return (features - model.mean) @ model.components


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> ClusterLabeling:
    """Standard density clustering (Ester et al. semantics), deterministic.

    A point is core iff it has >= min_pts neighbors within Euclidean eps,
    counting itself. Points are scanned in input order and border points go
    to the first core cluster that reaches them.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    sq = np.sum(points**2, axis=1)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(dist2, 0.0, out=dist2)
    within = dist2 <= eps * eps
    neighbor_counts = within.sum(axis=1)
    is_core = neighbor_counts >= min_pts

    labels = np.full(n, NOISE, dtype=int)
    visited = np.zeros(n, dtype=bool)
    cluster_id = 0
    for seed in range(n):
        if visited[seed] or not is_core[seed]:
            continue
        # breadth-first expansion from this core point
        queue = [seed]
        visited[seed] = True
        labels[seed] = cluster_id
        head = 0
        while head < len(queue):
            current = queue[head]
            head += 1
            if not is_core[current]:
                continue
            for neighbor in np.flatnonzero(within[current]):
                if labels[neighbor] == NOISE:
                    labels[neighbor] = cluster_id
                if not visited[neighbor]:
                    visited[neighbor] = True
                    queue.append(neighbor)
        cluster_id += 1
    return ClusterLabeling(labels)


def standardize(features: np.ndarray) -> np.ndarray:
    """Per-coordinate z-scoring; coordinates with std < 1e-12 keep unit scale."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return (features - mean) / std


def cluster_pipeline(trajectories: list[Trajectory],
                     params: ClusteringParams | None = None) -> ClusterResult:
    """Resample, standardize, PCA-project and DBSCAN-cluster trajectories.

    Clusters with fewer than min_cluster_size members are pruned into the
    outliers along with DBSCAN noise. Surviving clusters are renumbered
    0..K-1 preserving discovery order. Every input trajectory ends up in
    exactly one cluster or in outliers.
    """
    params = params or ClusteringParams()
    if not trajectories:
        return ClusterResult([], [], np.zeros(0, dtype=int))
    features = np.stack([resample(t, params.resample_steps) for t in trajectories])
    scaled = standardize(features)
    pca = pca_fit(scaled, params.variance_retained)
    projected = pca_project(pca, scaled)
    labeling = dbscan(projected, params.eps, params.min_pts)
    labels = labeling.labels.copy()

    warnings = []
    if pca.degenerate:
        warnings.append("PCA input had zero total variance")

    remap: dict[int, int] = {}
    for original in range(labeling.n_clusters):
        size = int(np.sum(labels == original))
        if size >= params.min_cluster_size:
            remap[original] = len(remap)
    final = np.full(len(trajectories), NOISE, dtype=int)
    for i, lab in enumerate(labels):
        if lab != NOISE and lab in remap:
            final[i] = remap[lab]

    clusters: list[list[Trajectory]] = [[] for _ in range(len(remap))]
    outliers: list[Trajectory] = []
    for traj, lab in zip(trajectories, final):
        if lab == NOISE:
            outliers.append(traj)
        else:
            clusters[lab].append(traj)
    return ClusterResult(clusters, outliers, final, pca, warnings)
