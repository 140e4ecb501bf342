"""Seeded synthetic departure corridors for pipeline evaluation.

Real radar archives cannot ship with the library, so experiments run on
synthetic data: each corridor is a ground-truth weight-space Gaussian
(mean weights, weight covariance, noise precision) over the shared basis,
built from a nominal climb-out path. Trajectories are drawn by sampling
weights, evaluating them on a per-track tau grid and adding measurement
noise; scattered wandering tracks are mixed in as outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gp_model import BasisSet, NormalizationTransform
from .trajectory_io import AirportGeometry, Runway, Trajectory, TrajectoryPoint


@dataclass
class CorridorTruth:
    """Ground-truth generative model for one corridor."""

    basis: BasisSet
    mu: np.ndarray       # (3J,) weight-space mean, normalized coordinates
    sigma: np.ndarray    # (3J, 3J) weight covariance
    beta: float          # measurement noise precision, normalized units
    transform: NormalizationTransform

    def mean_path(self, taus: np.ndarray) -> np.ndarray:
        scalar = self.basis.scalar_eval(taus)
        j = self.basis.J
        blocks = [scalar @ self.mu[d * j:(d + 1) * j] for d in range(3)]
        return self.transform.denormalize(np.column_stack(blocks))


def _fit_weights(basis: BasisSet, taus: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Ridge-stabilized least-squares basis weights for one coordinate."""
    g = basis.scalar_eval(taus)
    gram = g.T @ g + 1e-9 * np.eye(basis.J)
    return np.linalg.solve(gram, g.T @ values)


def make_corridor_truth(start: tuple[float, float], heading_deg: float,
                        length: float = 12000.0, turn_deg: float = 0.0,
                        climb_altitude: float = 1200.0,
                        lateral_sigma: float = 150.0,
                        vertical_sigma: float = 60.0,
                        beta: float = 4.0e4,
                        basis: BasisSet | None = None) -> CorridorTruth:
    """Build a climb-out corridor truth from simple geometry.

    The nominal path leaves ``start`` at ``heading_deg`` (compass-style,
    0 = north, 90 = east), optionally turning by ``turn_deg`` over its
    length, while climbing linearly to ``climb_altitude``. Dispersion
    sigmas are real-space metres at a typical point of the path.
    """
    basis = basis or BasisSet.uniform()
    dense = np.linspace(0.0, 1.0, 256)
    heading = np.radians(heading_deg + turn_deg * dense)
    # unit step per sample along the (possibly turning) track
    step = length / (dense.size - 1)
    de = np.concatenate([[0.0], np.cumsum(np.sin(heading[:-1]) * step)])
    dn = np.concatenate([[0.0], np.cumsum(np.cos(heading[:-1]) * step)])
    path = np.column_stack([
        start[0] + de,
        start[1] + dn,
        climb_altitude * dense,
    ])

    margin = 4.0 * max(lateral_sigma, vertical_sigma)
    lo = path.min(axis=0) - margin
    hi = path.max(axis=0) + margin
    transform = NormalizationTransform(lo, np.where(hi - lo < 1e-12, 1.0, hi - lo))

    normalized = transform.normalize(path)
    mu = np.concatenate([_fit_weights(basis, dense, normalized[:, d]) for d in range(3)])

    # per-dimension weight scale giving the requested real-space dispersion
    g = basis.scalar_eval(dense)
    gain = math.sqrt(float(np.mean(np.sum(g * g, axis=1))))
    sigmas_real = np.array([lateral_sigma, lateral_sigma, vertical_sigma])
    weight_scales = sigmas_real / transform.scale / gain
    diag = np.concatenate([np.full(basis.J, s * s) for s in weight_scales])
    return CorridorTruth(basis, mu, np.diag(diag), beta, transform)


def sample_corridor(truth: CorridorTruth, n: int, rng: np.random.Generator,
                    id_prefix: str = "traj",
                    points_range: tuple[int, int] = (30, 80),
                    duration_range: tuple[float, float] = (120.0, 300.0)) -> list[Trajectory]:
    """Draw n trajectories from a corridor truth."""
    chol = np.linalg.cholesky(truth.sigma)
    noise_sigma = 1.0 / math.sqrt(truth.beta)
    j = truth.basis.J
    out = []
    for i in range(n):
        m = int(rng.integers(points_range[0], points_range[1] + 1))
        duration = float(rng.uniform(*duration_range))
        taus = np.linspace(0.0, 1.0, m)
        w = truth.mu + chol @ rng.standard_normal(3 * j)
        scalar = truth.basis.scalar_eval(taus)
        coords = np.column_stack([scalar @ w[d * j:(d + 1) * j] for d in range(3)])
        coords += noise_sigma * rng.standard_normal((m, 3))
        real = truth.transform.denormalize(coords)
        points = [
            TrajectoryPoint(float(taus[k] * duration), float(real[k, 0]),
                            float(real[k, 1]), float(real[k, 2]))
            for k in range(m)
        ]
        out.append(Trajectory(f"{id_prefix}{i:04d}", points))
    return out


def sample_outliers(n: int, rng: np.random.Generator, area: float = 15000.0,
                    id_prefix: str = "out",
                    points_range: tuple[int, int] = (30, 80)) -> list[Trajectory]:
    """Wandering tracks spread over the area, unrelated to any corridor."""
    out = []
    for i in range(n):
        m = int(rng.integers(points_range[0], points_range[1] + 1))
        start = rng.uniform(-area, area, size=2)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(60.0, 140.0)
        dt = rng.uniform(2.0, 6.0)
        altitude = rng.uniform(100.0, 450.0)
        east, north = float(start[0]), float(start[1])
        points = []
        for k in range(m):
            points.append(TrajectoryPoint(k * dt, east, north,
                                          altitude + float(rng.normal(0.0, 15.0))))
            heading += float(rng.normal(0.0, 0.25))
            east += speed * math.sin(heading) * dt
            north += speed * math.cos(heading) * dt
        out.append(Trajectory(f"{id_prefix}{i:04d}", points))
    return out


@dataclass
class SynthConfig:
    n_corridors: int = 4
    per_corridor: int = 200
    n_outliers: int = 30
    corridor_length: float = 12000.0
    climb_altitude: float = 1200.0
    lateral_sigma: float = 150.0
    vertical_sigma: float = 60.0
    beta: float = 4.0e4
    points_range: tuple[int, int] = (30, 80)
    duration_range: tuple[float, float] = (120.0, 300.0)
    runway_half_length: float = 1500.0
    seed: int = 0


@dataclass
class SynthResult:
    trajectories: list[Trajectory]
    geometry: AirportGeometry
    truth_labels: dict[str, int] = field(default_factory=dict)  # -1 for outliers
    truths: list[CorridorTruth] = field(default_factory=list)


def generate_dataset(config: SynthConfig) -> SynthResult:
    """Seeded multi-corridor departure scenario around a single runway."""
    rng = np.random.default_rng(config.seed)
    half = config.runway_half_length
    geometry = AirportGeometry((0.0, 0.0), [
        Runway("09", (-half, 0.0), (half, 0.0)),
        Runway("27", (half, 0.0), (-half, 0.0)),
    ])

    headings = [360.0 * k / config.n_corridors + 30.0 for k in range(config.n_corridors)]
    trajectories: list[Trajectory] = []
    labels: dict[str, int] = {}
    truths = []
    for c, heading in enumerate(headings):
        turn = float(rng.uniform(-25.0, 25.0))
        truth = make_corridor_truth(
            (half, 0.0), heading, length=config.corridor_length, turn_deg=turn,
            climb_altitude=config.climb_altitude,
            lateral_sigma=config.lateral_sigma,
            vertical_sigma=config.vertical_sigma, beta=config.beta,
        )
        truths.append(truth)
        tracks = sample_corridor(truth, config.per_corridor, rng,
                                 id_prefix=f"c{c}_", points_range=config.points_range,
                                 duration_range=config.duration_range)
        for t in tracks:
            labels[t.id] = c
        trajectories.extend(tracks)

    outliers = sample_outliers(config.n_outliers, rng,
                               area=1.5 * config.corridor_length,
                               points_range=config.points_range)
    for t in outliers:
        labels[t.id] = -1
    trajectories.extend(outliers)
    return SynthResult(trajectories, geometry, labels, truths)
