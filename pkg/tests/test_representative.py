import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import chi_square_pdf
from trajreduce.gp_model import BasisSet, NormalizationTransform, TrajectoryModel
from trajreduce.representative import (
    EllipsoidField,
    Ellipsoid,
    RepresentativeScheme,
    Ring,
    SectionPlane,
    WeightedTrajectory,
    chi_square_cdf,
    chi_square_ring_weight,
    eigendecompose,
    generate_representatives,
    plane_ellipsoid_intersection,
    representative_point,
    section_plane,
)
from trajreduce.gp_model import model_section_real

# paper table values, percent: (dof, a, b, count, per-trajectory)
TABLE_ROWS = [
    (1, 0.0, 0.5, 1, 38.29),
    (1, 0.5, 1.5, 2, 24.17),
    (1, 1.5, 2.5, 2, 6.06),
    (2, 0.0, 0.5, 1, 11.75),
    (2, 0.5, 1.5, 8, 6.97),
    (2, 1.5, 2.5, 8, 3.51),
]


@pytest.mark.parametrize("dof,a,b,count,expected", TABLE_ROWS)
def test_chi_square_table_entries(dof, a, b, count, expected):
    weight = chi_square_ring_weight(dof, a, b, count)
    assert 100.0 * weight == pytest.approx(expected, abs=0.01)


def test_chi_square_totals():
    assert 100.0 * chi_square_cdf(1, 2.5**2) == pytest.approx(98.76, abs=0.01)
    assert 100.0 * chi_square_cdf(2, 2.5**2) == pytest.approx(95.61, abs=0.01)


def test_chi_square_against_quadrature():
    for dof in (1, 2):
        for bound in (0.25, 1.0, 2.25, 6.25):
            numeric, _ = quad(lambda x: chi_square_pdf(dof, x), 0.0, bound)
            assert chi_square_cdf(dof, bound) == pytest.approx(numeric, abs=1e-6)


def test_chi_square_ring_weight_validation():
    with pytest.raises(ValueError):
        chi_square_ring_weight(1, 1.0, 0.5, 1)
    with pytest.raises(ValueError):
        chi_square_ring_weight(3, 0.0, 1.0, 1)
    with pytest.raises(ValueError):
        chi_square_ring_weight(1, 0.0, 1.0, 0)


# ------------------------------------------------------------ eigendecompose

def test_eigendecompose_diagonal():
    frame = eigendecompose(np.diag([4.0, 1.0, 0.25]))
    np.testing.assert_allclose(frame.eigenvalues, [4.0, 1.0, 0.25])
    np.testing.assert_allclose(np.abs(frame.R), np.eye(3), atol=1e-12)


def test_eigendecompose_rotated():
    rng = np.random.default_rng(50)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    shape = q @ np.diag([9.0, 4.0, 1.0]) @ q.T
    frame = eigendecompose(shape)
    np.testing.assert_allclose(frame.eigenvalues, [9.0, 4.0, 1.0], rtol=1e-9)
    for idx in range(3):
        dots = np.abs(q.T @ frame.R[:, idx])
        assert dots.max() == pytest.approx(1.0, abs=1e-9)
    recon = frame.R @ np.diag(frame.eigenvalues) @ frame.R.T
    np.testing.assert_allclose(recon, shape, atol=1e-9)
    np.testing.assert_allclose(frame.R.T @ frame.R, np.eye(3), atol=1e-9)


def test_eigendecompose_identity():
    frame = eigendecompose(np.eye(3))
    np.testing.assert_allclose(frame.eigenvalues, [1.0, 1.0, 1.0])
    recon = frame.R @ np.diag(frame.eigenvalues) @ frame.R.T
    np.testing.assert_allclose(recon, np.eye(3), atol=1e-9)


def test_eigendecompose_rejects_bad_input():
    with pytest.raises(ValueError):
        eigendecompose(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        eigendecompose(np.array([[1.0, 0.5, 0], [0, 1, 0], [0, 0, 1.0]]))


# ------------------------------------------------------------ model builders

def line_model(velocity=(10000.0, 0.0, 0.0), base=(0.0, 0.0, 500.0),
               weight_var=(1e-18, 1e-18, 1e-18), beta=1e6, n_rbf=9,
               scale=(1.0, 1.0, 1.0)):
    """Model whose mean path approximates base + tau*velocity (real space).

    Weight covariance is block-diagonal per dimension: weight_var[d] * I.
    """
    basis = BasisSet.uniform(n_rbf)
    j = basis.J
    taus = np.linspace(0.0, 1.0, 400)
    scalar = basis.scalar_eval(taus)
    scale = np.asarray(scale, dtype=float)
    mu = []
    for dim in range(3):
        target = (base[dim] + taus * velocity[dim]) / scale[dim]
        weights, *_ = np.linalg.lstsq(scalar, target, rcond=None)
        mu.append(weights)
    sigma = np.diag(np.concatenate([np.full(j, weight_var[d]) for d in range(3)]))
    return TrajectoryModel(
        mu=np.concatenate(mu), sigma=sigma, beta=beta, basis=basis,
        transform=NormalizationTransform(np.zeros(3), scale),
        n_trajectories=1,
    )


# ------------------------------------------------------------ section plane

def test_section_plane_eastbound_level():
    model = line_model()
    plane = section_plane(model, 0.5)
    np.testing.assert_allclose(plane.normal, [1.0, 0.0, 0.0], atol=1e-6)
    assert abs(plane.u_lateral @ np.array([0.0, 1.0, 0.0])) == pytest.approx(1.0, abs=1e-6)
    assert abs(plane.u_vertical @ np.array([0.0, 0.0, 1.0])) == pytest.approx(1.0, abs=1e-6)
    # orthonormal frame
    np.testing.assert_allclose(plane.u_lateral @ plane.normal, 0.0, atol=1e-12)
    np.testing.assert_allclose(plane.u_vertical @ plane.normal, 0.0, atol=1e-12)
    np.testing.assert_allclose(plane.u_lateral @ plane.u_vertical, 0.0, atol=1e-12)


def test_section_plane_climbing_45_degrees():
    model = line_model(velocity=(7000.0, 0.0, 7000.0), base=(0.0, 0.0, 0.0))
    plane = section_plane(model, 0.5)
    assert plane.normal[0] == pytest.approx(plane.normal[2], rel=1e-4)
    assert abs(plane.normal[1]) < 1e-6
    assert abs(plane.u_lateral @ np.array([0.0, 1.0, 0.0])) == pytest.approx(1.0, abs=1e-6)
    assert abs(plane.u_lateral[2]) < 1e-9  # lateral axis is horizontal


def test_section_plane_vertical_flight_fallback():
    model = line_model(velocity=(0.0, 0.0, 5000.0), base=(100.0, 50.0, 0.0))
    plane = section_plane(model, 0.5)
    np.testing.assert_allclose(np.abs(plane.normal), [0.0, 0.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(plane.u_lateral, [1.0, 0.0, 0.0], atol=1e-12)


def test_section_plane_finite_difference_order():
    # curved mean path with nonzero third derivative along north
    basis = BasisSet.uniform(9)
    j = basis.J
    taus = np.linspace(0, 1, 400)
    scalar = basis.scalar_eval(taus)
    east, *_ = np.linalg.lstsq(scalar, taus, rcond=None)
    north, *_ = np.linalg.lstsq(scalar, 0.3 * np.sin(2 * np.pi * taus), rcond=None)
    alt, *_ = np.linalg.lstsq(scalar, 0.2 + 0.1 * taus, rcond=None)
    model = TrajectoryModel(
        mu=np.concatenate([east, north, alt]), sigma=1e-18 * np.eye(3 * j),
        beta=1e6, basis=basis,
        transform=NormalizationTransform(np.zeros(3), np.ones(3)), n_trajectories=1,
    )
    reference = section_plane(model, 0.5, d_tau=1e-4).normal
    error_coarse = np.linalg.norm(section_plane(model, 0.5, d_tau=0.04).normal - reference)
    error_fine = np.linalg.norm(section_plane(model, 0.5, d_tau=0.02).normal - reference)
    assert error_fine < error_coarse / 2.5  # roughly quadratic shrinkage
    assert error_coarse > 1e-8  # far from the noise floor, the ratio is meaningful


def test_section_plane_stationary_mean_error():
    model = line_model(velocity=(0.0, 0.0, 0.0), base=(5.0, 5.0, 5.0))
    with pytest.raises(ValueError, match="stationary"):
        section_plane(model, 0.5)


# ------------------------------------------------------------ intersections

def axis_plane(point=(0.0, 0.0, 0.0)):
    return SectionPlane(np.asarray(point, dtype=float), np.array([1.0, 0.0, 0.0]),
                        np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))


def test_intersection_sphere_through_center():
    ellipse = plane_ellipsoid_intersection(Ellipsoid(np.zeros(3), np.eye(3), 2.0), axis_plane())
    np.testing.assert_allclose(ellipse.semi_axes(), [2.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(ellipse.center, [0.0, 0.0], atol=1e-12)


def test_intersection_tangent_sphere():
    ellipsoid = Ellipsoid(np.array([2.0, 0.5, -0.25]), np.eye(3), 2.0)
    ellipse = plane_ellipsoid_intersection(ellipsoid, axis_plane())
    assert ellipse.degenerate
    np.testing.assert_allclose(ellipse.center, [0.5, -0.25], atol=1e-9)


def test_intersection_no_contact():
    ellipsoid = Ellipsoid(np.array([2.5, 0.0, 0.0]), np.eye(3), 2.0)
    assert plane_ellipsoid_intersection(ellipsoid, axis_plane()) is None


def test_intersection_axis_aligned_analytic():
    ellipsoid = Ellipsoid(np.zeros(3), np.diag([4.0, 1.0, 0.25]), 1.0)
    ellipse = plane_ellipsoid_intersection(ellipsoid, axis_plane())
    np.testing.assert_allclose(ellipse.semi_axes(), [1.0, 0.5], atol=1e-8)


def test_intersection_points_lie_on_surface_and_plane():
    rng = np.random.default_rng(51)
    for _ in range(25):
        a = rng.normal(size=(3, 3))
        shape = a @ a.T + 0.1 * np.eye(3)
        center = rng.normal(scale=2.0, size=3)
        radius = float(rng.uniform(0.5, 3.0))
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        lateral = np.cross(normal, rng.normal(size=3))
        lateral /= np.linalg.norm(lateral)
        vertical = np.cross(normal, lateral)
        point = center + rng.normal(scale=0.3, size=3)
        plane = SectionPlane(point, normal, lateral, vertical)
        ellipsoid = Ellipsoid(center, shape, radius)
        ellipse = plane_ellipsoid_intersection(ellipsoid, plane)
        if ellipse is None:
            continue
        for phi in np.linspace(0, 2 * math.pi, 17):
            p3 = plane.to_3d(ellipse.boundary_point(phi))
            md = ellipsoid.mahalanobis_sq(p3)
            assert md == pytest.approx(radius**2, abs=1e-8)
            assert abs(plane.normal @ (p3 - plane.point)) < 1e-9


def test_intersection_rejects_zero_radius():
    with pytest.raises(ValueError):
        plane_ellipsoid_intersection(Ellipsoid(np.zeros(3), np.eye(3), 0.0), axis_plane())


# ------------------------------------------------------------ representative points

def test_representative_point_zero_radius_is_mean():
    model = line_model()
    for tau in (0.0, 0.4, 1.0):
        point = representative_point(model, tau, 0.0, 0.0)
        np.testing.assert_allclose(point, model_section_real(model, tau).mean, atol=1e-12)


def test_representative_point_self_window_matches_direct_section():
    model = line_model(weight_var=(1e-18, 4e-4, 1e-4), beta=1e4)
    tau, r, angle = 0.5, 2.0, 30.0
    point = representative_point(model, tau, r, angle, search_taus=np.array([tau]))
    plane = section_plane(model, tau)
    section = model_section_real(model, tau)
    ellipse = plane_ellipsoid_intersection(Ellipsoid(section.mean, section.cov, r), plane)
    theta = math.radians(angle)
    s = ellipse.ray_exit(np.array([math.cos(theta), math.sin(theta)]))
    expected = plane.to_3d(s * np.array([math.cos(theta), math.sin(theta)]))
    np.testing.assert_allclose(point, expected, atol=1e-9)


def test_representative_point_constant_spherical_model():
    # nearly constant spherical covariance: the self-section dominates
    model = line_model(weight_var=(1e-18, 1e-18, 1e-18), beta=400.0)
    taus = np.linspace(0, 1, 41)
    tau, r = 0.5, 2.0
    sigma_noise = 1.0 / math.sqrt(model.beta)
    plane = section_plane(model, tau)
    for angle in (0.0, 90.0, 215.0):
        point = representative_point(model, tau, r, angle, search_taus=taus)
        theta = math.radians(angle)
        direction = math.cos(theta) * plane.u_lateral + math.sin(theta) * plane.u_vertical
        expected = model_section_real(model, tau).mean + r * sigma_noise * direction
        np.testing.assert_allclose(point, expected, atol=1e-6 * r * sigma_noise + 1e-9)


def test_representative_point_takes_largest_deviation():
    # one narrow basis bump inflates the covariance around tau=0.6
    basis = BasisSet.uniform(19)
    j = basis.J
    taus_fit = np.linspace(0, 1, 400)
    scalar = basis.scalar_eval(taus_fit)
    east, *_ = np.linalg.lstsq(scalar, taus_fit, rcond=None)
    variances = np.full(3 * j, 1e-10)
    bump = 1 + int(np.argmin(np.abs(basis.centers - 0.6)))  # column of that rbf
    for dim in range(3):
        variances[dim * j + bump] = 4e-2
    model = TrajectoryModel(
        mu=np.concatenate([east, np.zeros(j), np.zeros(j)]),
        sigma=np.diag(variances), beta=1e4, basis=basis,
        transform=NormalizationTransform(np.zeros(3), np.ones(3)), n_trajectories=1,
    )
    tau = 0.5
    search = np.linspace(0, 1, 101)
    wide = representative_point(model, tau, 1.0, 0.0, search_taus=search)
    self_only = representative_point(model, tau, 1.0, 0.0, search_taus=np.array([tau]))
    plane = section_plane(model, tau)
    dev_wide = np.linalg.norm(wide - plane.point)
    dev_self = np.linalg.norm(self_only - plane.point)
    assert dev_wide > dev_self * 1.5
    # the winning point sits on the surface of an inflated off-tau ellipsoid
    field = EllipsoidField.from_model(model, search)
    residuals = [
        abs(Ellipsoid(field.means[i], field.shapes[i], 1.0).mahalanobis_sq(wide) - 1.0)
        for i in range(search.size)
    ]
    assert abs(search[int(np.argmin(residuals))] - tau) > 0.02


def test_representative_point_subset_never_increases_deviation():
    rng = np.random.default_rng(52)
    model = line_model(weight_var=(1e-8, 3e-4, 2e-4), beta=1e4)
    full = np.linspace(0, 1, 51)
    tau = 0.48
    plane_point = model_section_real(model, tau).mean
    for angle in (0.0, 45.0, 180.0):
        dev_full = np.linalg.norm(
            representative_point(model, tau, 2.0, angle, search_taus=full) - plane_point
        )
        keep = np.sort(rng.choice(full, size=11, replace=False))
        subset = np.unique(np.append(keep, tau))
        dev_subset = np.linalg.norm(
            representative_point(model, tau, 2.0, angle, search_taus=subset) - plane_point
        )
        assert dev_subset <= dev_full + 1e-12


def test_representative_point_md_invariant():
    model = line_model(weight_var=(1e-10, 5e-4, 2e-4), beta=2e4)
    search = np.linspace(0, 1, 61)
    field = EllipsoidField.from_model(model, search)
    for tau in (0.1, 0.5, 0.9):
        for r in (1.0, 2.0):
            for angle in (0.0, 90.0, 135.0):
                point = representative_point(model, tau, r, angle, field=field)
                best = min(
                    abs(Ellipsoid(field.means[i], field.shapes[i], r).mahalanobis_sq(point) - r * r)
                    for i in range(search.size)
                )
                assert best < 1e-6


# ------------------------------------------------------------ schemes

def test_scheme_definitions():
    flat = RepresentativeScheme.flat()
    assert flat.dof == 1
    assert flat.n_trajectories == 5
    assert flat.total_weight() == pytest.approx(0.9876, abs=5e-4)
    round_scheme = RepresentativeScheme.round()
    assert round_scheme.dof == 2
    assert round_scheme.n_trajectories == 17
    assert round_scheme.total_weight() == pytest.approx(0.9561, abs=5e-4)


def test_scheme_validation():
    with pytest.raises(ValueError):
        RepresentativeScheme("bad", 1, [Ring(1.0, 0.5, 1.5, [0.0])])  # gap at 0
    with pytest.raises(ValueError):
        RepresentativeScheme("bad", 1, [
            Ring(0.0, 0.0, 0.5, [0.0]), Ring(1.0, 0.7, 1.5, [0.0]),
        ])
    with pytest.raises(ValueError):
        Ring(0.0, 0.0, 0.5, [0.0, 180.0])  # center ring must hold one trajectory
    with pytest.raises(ValueError):
        Ring(2.0, 0.5, 1.5, [0.0])  # radius outside ring


def test_generate_flat_counts_and_weights():
    model = line_model(weight_var=(1e-10, 4e-4, 1e-4), beta=1e4)
    reps = generate_representatives(model, RepresentativeScheme.flat(), steps=30)
    assert len(reps) == 5
    weights = sorted((round(t.weight, 4) for t in reps), reverse=True)
    assert weights == [0.3829, 0.2417, 0.2417, 0.0606, 0.0606]
    assert sum(t.weight for t in reps) == pytest.approx(0.9876, abs=5e-4)
    assert all(t.points.shape == (30, 3) for t in reps)


def test_generate_round_counts_and_weights():
    model = line_model(weight_var=(1e-10, 4e-4, 1e-4), beta=1e4)
    reps = generate_representatives(model, RepresentativeScheme.round(), steps=20)
    assert len(reps) == 17
    weights = [round(t.weight, 4) for t in reps]
    assert weights.count(0.1175) == 1
    assert weights.count(0.0697) == 8
    assert weights.count(0.0351) == 8
    assert sum(t.weight for t in reps) == pytest.approx(0.9561, abs=5e-4)


def test_generate_zero_radius_reproduces_mean_path():
    model = line_model(weight_var=(1e-10, 4e-4, 1e-4), beta=1e4)
    reps = generate_representatives(model, RepresentativeScheme.flat(), steps=25)
    center = next(t for t in reps if t.radius == 0.0)
    taus = np.linspace(0, 1, 25)
    means = np.stack([model_section_real(model, float(t)).mean for t in taus])
    np.testing.assert_allclose(center.points, means, atol=1e-9)


def test_generate_flat_mirror_symmetry():
    # covariance symmetric about the lateral axis: no lateral/vertical cross terms
    model = line_model(weight_var=(1e-12, 6e-4, 2e-4), beta=1e5,
                       scale=(10000.0, 8000.0, 600.0))
    reps = generate_representatives(model, RepresentativeScheme.flat(), steps=20)
    taus = np.linspace(0, 1, 20)
    means = np.stack([model_section_real(model, float(t)).mean for t in taus])
    for radius in (1.0, 2.0):
        plus = next(t for t in reps if t.radius == radius and t.angle_deg == 0.0)
        minus = next(t for t in reps if t.radius == radius and t.angle_deg == 180.0)
        np.testing.assert_allclose(plus.points + minus.points, 2.0 * means, atol=1e-6)


def test_weighted_trajectory_validation():
    with pytest.raises(ValueError):
        WeightedTrajectory(np.zeros((5, 3)), 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        WeightedTrajectory(np.zeros((5, 3)), 1.5, 1.0, 0.0)
