"""Weighted representative trajectories from a fitted corridor model.

At each of a fixed number of normalized times the model induces a 3-D
Gaussian whose constant-Mahalanobis surfaces are ellipsoids. A plane is
placed perpendicular to the mean path and intersected with every ellipsoid
along the path; evaluating the resulting 2-D ellipses at a fixed in-plane
angle and keeping the farthest point from the mean traces one
representative trajectory per (Mahalanobis radius, angle) pair. Each
trajectory carries the share of the distribution its ring captures,
computed from closed-form chi-square CDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gp_model import TrajectoryModel, model_section_real

GLOBAL_UP = np.array([0.0, 0.0, 1.0])
GLOBAL_EAST = np.array([1.0, 0.0, 0.0])


def chi_square_cdf(dof: int, value: float) -> float:
    """Closed-form chi-square CDF for 1 or 2 degrees of freedom."""
    if value < 0:
        raise ValueError("chi-square value must be >= 0")
    if dof == 1:
        return math.erf(math.sqrt(value) / math.sqrt(2.0))
    if dof == 2:
        return 1.0 - math.exp(-value / 2.0)
    raise ValueError("dof must be 1 or 2")


def chi_square_ring_weight(dof: int, a: float, b: float, count: int) -> float:
    """Probability mass of the Mahalanobis ring [a^2, b^2] split over count.

    a and b are unsquared Mahalanobis radii with 0 <= a < b; count is the
    number of representative trajectories sharing the ring.
    """
    if a < 0 or b <= a:
        raise ValueError("need 0 <= a < b")
    if count < 1:
        raise ValueError("count must be >= 1")
    return (chi_square_cdf(dof, b * b) - chi_square_cdf(dof, a * a)) / count


@dataclass
class Ellipsoid:
    """Constant-Mahalanobis surface MD(p) = radius^2 of a 3-D Gaussian."""

    center: np.ndarray  # (3,)
    shape: np.ndarray   # (3, 3) SPD covariance
    radius: float

    def mahalanobis_sq(self, point: np.ndarray) -> float:
        diff = np.asarray(point, dtype=float) - self.center
        return float(diff @ np.linalg.solve(self.shape, diff))


@dataclass
class EigenFrame:
    """Orthonormal eigenvectors (columns of R) and eigenvalues, descending."""

    R: np.ndarray
    eigenvalues: np.ndarray


def eigendecompose(shape: np.ndarray) -> EigenFrame:
    """Eigendecomposition R diag(lambda) R^T of an SPD 3x3 matrix."""
    shape = np.asarray(shape, dtype=float)
    if not np.allclose(shape, shape.T, atol=1e-9):
        raise ValueError("shape matrix is not symmetric")
    eigvals, eigvecs = np.linalg.eigh(shape)
    if eigvals[0] <= 0:
        raise ValueError("shape matrix is not positive definite")
    order = np.argsort(eigvals)[::-1]
    return EigenFrame(eigvecs[:, order], eigvals[order])


@dataclass
class SectionPlane:
    """Plane perpendicular to the mean path with an anchored 2-D frame.

    Angle 0 deg points along u_lateral, 90 deg along u_vertical.
    """

    point: np.ndarray
    normal: np.ndarray
    u_lateral: np.ndarray
    u_vertical: np.ndarray

    def to_3d(self, coords2: np.ndarray) -> np.ndarray:
        return self.point + coords2[0] * self.u_lateral + coords2[1] * self.u_vertical

    def to_plane(self, point3: np.ndarray) -> np.ndarray:
        diff = np.asarray(point3, dtype=float) - self.point
        return np.array([diff @ self.u_lateral, diff @ self.u_vertical])


def section_plane(model: TrajectoryModel, tau: float, d_tau: float = 1e-4) -> SectionPlane:
    """Plane normal to the real-space mean path at tau.

    The normal is the finite difference of the mean over d_tau, central and
    clamped one-sided at the interval endpoints. The in-plane frame anchors
    angle 0 to the horizontal lateral direction via the global up-vector,
    falling back to global east for vertical flight.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if not 0.0 < d_tau <= 0.1:
        raise ValueError("d_tau must lie in (0, 0.1]")
    lo = max(0.0, tau - d_tau / 2.0)
    hi = min(1.0, tau + d_tau / 2.0)
    diff = model_section_real(model, hi).mean - model_section_real(model, lo).mean
    norm = np.linalg.norm(diff)
    if norm < 1e-12:
        raise ValueError(f"stationary mean at tau={tau}")
    normal = diff / norm
    lateral = np.cross(normal, GLOBAL_UP)
    lat_norm = np.linalg.norm(lateral)
    if lat_norm < 1e-12:
        lateral = GLOBAL_EAST.copy()
    else:
        lateral = lateral / lat_norm
    vertical = np.cross(normal, lateral)
    point = model_section_real(model, tau).mean
    return SectionPlane(point, normal, lateral, vertical)


@dataclass
class PlaneEllipse:
    """Intersection ellipse in plane coordinates.

    Points are center + basis @ (cos phi, sin phi); the basis columns are
    conjugate semi-diameters, not necessarily orthogonal.
    """

    center: np.ndarray  # (2,)
    basis: np.ndarray   # (2, 2)

    DEGENERATE_TOL = 1e-12

    def semi_axes(self) -> np.ndarray:
        """Principal semi-axis lengths, descending."""
        return np.linalg.svd(self.basis, compute_uv=False)

    def boundary_point(self, phi: float) -> np.ndarray:
        return self.center + self.basis @ np.array([math.cos(phi), math.sin(phi)])

    @property
    def degenerate(self) -> bool:
        scale = max(1.0, float(np.abs(self.basis).max()))
        return self.semi_axes()[-1] < self.DEGENERATE_TOL * scale

    def ray_exit(self, direction: np.ndarray) -> float | None:
        """Largest s >= 0 with s*direction on the ellipse boundary, if any.

        The ray starts at the plane origin (the mean path point).
        """
        direction = np.asarray(direction, dtype=float)
        if self.degenerate:
            s = float(self.center @ direction)
            if s < 0:
                return None
            offside = self.center - s * direction
            if np.linalg.norm(offside) > 1e-9 * max(1.0, float(np.linalg.norm(self.center))):
                return None
            return s
        p = np.linalg.solve(self.basis, direction)
        q0 = np.linalg.solve(self.basis, self.center)
        pp = float(p @ p)
        pq = float(p @ q0)
        disc = pq * pq - pp * (float(q0 @ q0) - 1.0)
        if disc < 0:
            return None
        s = (pq + math.sqrt(disc)) / pp
        return s if s >= 0 else None


def plane_ellipsoid_intersection(ellipsoid: Ellipsoid, plane: SectionPlane,
                                 chol: np.ndarray | None = None) -> PlaneEllipse | None:
    """Intersect an ellipsoid with a plane, in the plane's 2-D coordinates.

    Whitening approach: the map x = L^-1 (p - center), with L the Cholesky
    factor of the shape, turns the ellipsoid into the radius-r sphere; the
    transformed plane cuts that sphere in a circle which maps back to the
    intersection ellipse. Returns None when the plane's Mahalanobis
    distance from the center exceeds the radius.
    """
    if ellipsoid.radius <= 0:
        raise ValueError("ellipsoid radius must be positive")
    lower = np.linalg.cholesky(ellipsoid.shape) if chol is None else chol
    g = lower.T @ plane.normal
    g_norm = float(np.linalg.norm(g))
    delta = float(plane.normal @ (plane.point - ellipsoid.center)) / g_norm
    if abs(delta) > ellipsoid.radius:
        return None
    nu = g / g_norm
    rho = math.sqrt(max(ellipsoid.radius**2 - delta * delta, 0.0))

    # orthonormal complement of nu, seeded from the least-aligned global axis
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(nu)))] = 1.0
    e1 = np.cross(nu, seed)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nu, e1)

    center3 = ellipsoid.center + lower @ (delta * nu)
    a1 = lower @ e1
    a2 = lower @ e2
    center2 = plane.to_plane(center3)
    basis = rho * np.column_stack([
        [a1 @ plane.u_lateral, a1 @ plane.u_vertical],
        [a2 @ plane.u_lateral, a2 @ plane.u_vertical],
    ])
    return PlaneEllipse(center2, basis)


@dataclass
class EllipsoidField:
    """Real-space sections of a model precomputed on a tau grid."""

    taus: np.ndarray
    means: np.ndarray  # (n, 3)
    shapes: np.ndarray  # (n, 3, 3)
    chols: np.ndarray   # (n, 3, 3) lower Cholesky factors

    @classmethod
    def from_model(cls, model: TrajectoryModel, taus: np.ndarray) -> "EllipsoidField":
        taus = np.asarray(taus, dtype=float)
        sections = [model_section_real(model, float(t)) for t in taus]
        means = np.stack([s.mean for s in sections])
        shapes = np.stack([s.cov for s in sections])
        chols = np.linalg.cholesky(shapes)
        return cls(taus, means, shapes, chols)


def representative_point(model: TrajectoryModel, tau: float, r: float,
                         angle_deg: float, search_taus: np.ndarray | None = None,
                         d_tau: float = 1e-4,
                         field: EllipsoidField | None = None) -> np.ndarray:
    """Real-space point of the radius-r ellipse at one angle and tau.

    The section plane at tau is intersected with the radius-r ellipsoid of
    every search tau whose surface reaches the plane; the intersection
    ellipses are evaluated along the in-plane ray at angle_deg and the
    point farthest from the mean path is kept. r=0 returns the mean.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    if r == 0:
        return model_section_real(model, tau).mean
    if field is None:
        taus = np.array([tau]) if search_taus is None else np.asarray(search_taus, dtype=float)
        field = EllipsoidField.from_model(model, taus)
    plane = section_plane(model, tau, d_tau)
    theta = math.radians(angle_deg)
    direction = np.array([math.cos(theta), math.sin(theta)])

    best_s = None
    for i in range(field.taus.size):
        ellipsoid = Ellipsoid(field.means[i], field.shapes[i], r)
        ellipse = plane_ellipsoid_intersection(ellipsoid, plane, chol=field.chols[i])
        if ellipse is None:
            continue
        s = ellipse.ray_exit(direction)
        if s is not None and (best_s is None or s > best_s):
            best_s = s
    if best_s is None:
        raise RuntimeError(
            f"no ellipsoid intersection at tau={tau}; search grid must include tau"
        )
    return plane.to_3d(best_s * direction)


@dataclass
class Ring:
    """One Mahalanobis ring of a representative scheme."""

    radius: float
    lower: float
    upper: float
    angles_deg: list[float]

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("ring radius must be >= 0")
        if not self.lower <= self.radius <= self.upper:
            raise ValueError("ring radius must lie within [lower, upper]")
        if self.lower < 0 or self.upper <= self.lower:
            raise ValueError("need 0 <= lower < upper")
        if not self.angles_deg:
            raise ValueError("ring needs at least one angle")
        if self.radius == 0 and len(self.angles_deg) != 1:
            raise ValueError("the center ring holds exactly one trajectory")


@dataclass
class RepresentativeScheme:
    """Ring layout and chi-square dof defining a representative set."""

    name: str
    dof: int
    rings: list[Ring]

    def __post_init__(self):
        if self.dof not in (1, 2):
            raise ValueError("dof must be 1 or 2")
        if not self.rings:
            raise ValueError("scheme needs at least one ring")
        ordered = sorted(self.rings, key=lambda ring: ring.lower)
        if ordered[0].lower != 0.0:
            raise ValueError("rings must start at 0")
        for a, b in zip(ordered, ordered[1:]):
            if b.lower != a.upper:
                raise ValueError("rings must partition the radius range without gaps")
        self.rings = ordered

    @property
    def n_trajectories(self) -> int:
        return sum(len(ring.angles_deg) for ring in self.rings)

    def total_weight(self) -> float:
        return sum(
            chi_square_ring_weight(self.dof, ring.lower, ring.upper, len(ring.angles_deg))
            * len(ring.angles_deg)
            for ring in self.rings
        )

    @classmethod
    def flat(cls) -> "RepresentativeScheme":
        """Lateral dispersion only: 5 trajectories at offsets 0, +-1, +-2 sigma."""
        return cls("flat", 1, [
            Ring(0.0, 0.0, 0.5, [0.0]),
            Ring(1.0, 0.5, 1.5, [0.0, 180.0]),
            Ring(2.0, 1.5, 2.5, [0.0, 180.0]),
        ])

    @classmethod
    def round(cls) -> "RepresentativeScheme":
        """Lateral and vertical dispersion: 17 trajectories on two rings of 8."""
        eight = [45.0 * i for i in range(8)]
        return cls("round", 2, [
            Ring(0.0, 0.0, 0.5, [0.0]),
            Ring(1.0, 0.5, 1.5, list(eight)),
            Ring(2.0, 1.5, 2.5, list(eight)),
        ])


@dataclass
class WeightedTrajectory:
    """A representative polyline with its probability weight and origin."""

    points: np.ndarray  # (steps, 3) real-space
    weight: float
    radius: float
    angle_deg: float
    cluster: str = ""

    def __post_init__(self):
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("weight must lie in (0, 1]")


def generate_representatives(model: TrajectoryModel, scheme: RepresentativeScheme,
                             steps: int = 100, d_tau: float = 1e-4,
                             search_taus: np.ndarray | None = None,
                             cluster: str = "") -> list[WeightedTrajectory]:
    """Trace every (radius, angle) trajectory of the scheme over the tau grid.

    Representative points are evaluated at steps uniformly spaced taus. The
    search grid for the largest-deviation sweep defaults to the same grid.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    taus = np.linspace(0.0, 1.0, steps)
    search = taus if search_taus is None else np.asarray(search_taus, dtype=float)
    sweep = EllipsoidField.from_model(model, search)

    result = []
    for ring in scheme.rings:
        weight = chi_square_ring_weight(scheme.dof, ring.lower, ring.upper, len(ring.angles_deg))
        for angle in ring.angles_deg:
            points = np.stack([
                representative_point(model, float(t), ring.radius, angle,
                                     d_tau=d_tau, field=sweep)
                for t in taus
            ])
            result.append(WeightedTrajectory(points, weight, ring.radius, angle, cluster))
    return result
