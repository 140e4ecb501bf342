"""Per-cluster probabilistic trajectory model fitted by EM.

Each cluster is normalized so every coordinate lies on [0, 1] and every
track runs over normalized time tau in [0, 1]. A track is modelled as
``y(tau) = Phi(tau) w + noise`` where Phi stacks a shared scalar basis
(bias plus uniformly spaced Gaussian bumps) block-diagonally over the three
coordinates, ``w ~ N(mu, Sigma)`` varies per track and the residual noise
has precision beta. EM alternates posterior expectations of the per-track
weights with closed-form maximum-likelihood updates of (mu, Sigma, beta).
The fitted model yields a 3-D Gaussian section (mean and covariance) at any
tau, in normalized or real coordinates.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .trajectory_io import Trajectory, TrajectoryError

BETA_RESIDUAL_FLOOR = 1e-12
SYMMETRY_TOL = 1e-9


class NotSPDError(ValueError):
    """A matrix required to be symmetric positive-definite is not."""


@dataclass
class NormalizationTransform:
    """Affine map between real-space metres and the unit-cube fit space."""

    offset: np.ndarray  # (3,)
    scale: np.ndarray   # (3,), strictly positive

    def normalize(self, coords: np.ndarray) -> np.ndarray:
        return (coords - self.offset) / self.scale

    def denormalize(self, coords: np.ndarray) -> np.ndarray:
        return coords * self.scale + self.offset

    def denormalize_cov(self, cov: np.ndarray) -> np.ndarray:
        return cov * np.outer(self.scale, self.scale)


@dataclass
class NormalizedTrajectory:
    """One track in fit space: per-point tau and unit-cube coordinates."""

    taus: np.ndarray    # (M,), strictly increasing, taus[0]=0, taus[-1]=1
    coords: np.ndarray  # (M, 3)
    traj_id: str = ""


def normalize_cluster(cluster: list[Trajectory]) -> tuple[list[NormalizedTrajectory], NormalizationTransform]:
    """Rescale a cluster to the unit cube and assign per-point normalized time.

    Offsets are the cluster-wide per-dimension minima, scales the ranges
    (unit scale when a dimension is degenerate). tau runs 0..1 linearly in
    time within each trajectory.
    """
    if not cluster:
        raise ValueError("cluster is empty")
    all_coords = np.concatenate(
        [np.array([[p.east, p.north, p.altitude] for p in t.points]) for t in cluster]
    )
    lo = all_coords.min(axis=0)
    hi = all_coords.max(axis=0)
    scale = np.where(hi - lo < 1e-12, 1.0, hi - lo)
    transform = NormalizationTransform(lo, scale)

    normalized = []
    for traj in cluster:
        times = np.array([p.time for p in traj.points])
        duration = times[-1] - times[0]
        if duration <= 0:
            raise TrajectoryError(f"trajectory {traj.id!r} has zero duration")
        taus = (times - times[0]) / duration
        coords = np.array([[p.east, p.north, p.altitude] for p in traj.points])
        normalized.append(NormalizedTrajectory(taus, transform.normalize(coords), traj.id))
    return normalized, transform


@dataclass
class BasisSet:
    """Bias plus J-1 Gaussian bumps with uniformly spaced centers on [0, 1]."""

    centers: np.ndarray
    width: float
    includes_bias: bool = True

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        if self.centers.size < 1:
            raise ValueError("need at least one radial basis center")
        if np.any(np.diff(self.centers) <= 0):
            raise ValueError("centers must be strictly increasing")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if not self.includes_bias:
            raise ValueError("the bias column is part of the model")

    @property
    def J(self) -> int:
        return self.centers.size + 1

    @classmethod
    def uniform(cls, n_rbf: int = 17) -> "BasisSet":
        """n_rbf bumps spread over [0,1]; width equals the center spacing."""
        if n_rbf < 1:
            raise ValueError("n_rbf must be >= 1")
        centers = np.linspace(0.0, 1.0, n_rbf)
        width = 1.0 / (n_rbf - 1) if n_rbf > 1 else 1.0
        return cls(centers, width)

    def scalar_eval(self, taus: np.ndarray) -> np.ndarray:
        """(M, J) scalar basis values: bias column then the Gaussian bumps."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        bumps = np.exp(-((taus[:, None] - self.centers[None, :]) ** 2)
                       / (2.0 * self.width**2))
        return np.hstack([np.ones((taus.size, 1)), bumps])


def basis_eval(basis: BasisSet, tau: float) -> np.ndarray:
    """Block-diagonal (3, 3J) design row-block at one tau.

    Output dimension d reads only the weight slice d*J..(d+1)*J-1; all three
    dimensions share the same J scalar basis values.
    """
    row = basis.scalar_eval(np.array([tau]))[0]
    j = basis.J
    out = np.zeros((3, 3 * j))
    for dim in range(3):
        out[dim, dim * j:(dim + 1) * j] = row
    return out


@dataclass
class StackedDesign:
    """Design matrix, stacked observations and point count for one track.

    ``m_points`` is the declared sample count entering the 3*M_total noise
    denominator; for trajectory data the row count is 3*m_points.
    """

    phi: np.ndarray  # (rows, n_weights)
    y: np.ndarray    # (rows,)
    m_points: int
    phi_t_phi: np.ndarray = field(init=False)
    phi_t_y: np.ndarray = field(init=False)
    y_t_y: float = field(init=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.phi.shape[0] != self.y.shape[0]:
            raise ValueError("phi and y row counts differ")
        self.phi_t_phi = self.phi.T @ self.phi
        self.phi_t_y = self.phi.T @ self.y
        self.y_t_y = float(self.y @ self.y)

    @classmethod
    def from_trajectory(cls, basis: BasisSet, track: NormalizedTrajectory) -> "StackedDesign":
        scalar = basis.scalar_eval(track.taus)  # (M, J)
        m, j = scalar.shape
        phi = np.zeros((3 * m, 3 * j))
        for dim in range(3):
            phi[dim::3, dim * j:(dim + 1) * j] = scalar
        y = track.coords.reshape(-1)  # point-major, dimension-minor
        return cls(phi, y, m)


@dataclass
class Expectation:
    """Posterior moments of one track's weights given current parameters."""

    e_w: np.ndarray     # (n_weights,)
    e_wwt: np.ndarray   # (n_weights, n_weights)
    s_n: np.ndarray     # posterior covariance (n_weights, n_weights)


def _spd_factor(matrix: np.ndarray, what: str):
    if not np.allclose(matrix, matrix.T, atol=SYMMETRY_TOL):
        raise NotSPDError(f"{what} is not symmetric")
    try:
        return cho_factor(matrix, lower=True)
    except LinAlgError as exc:
        raise NotSPDError(f"{what} is not positive definite") from exc


def e_step(mu: np.ndarray, sigma: np.ndarray, beta: float,
           designs: list[StackedDesign]) -> list[Expectation]:
    """Posterior weight moments per track.

    S_n = (Sigma^-1 + beta Phi_n^T Phi_n)^-1,
    E[w_n] = S_n (beta Phi_n^T y_n + Sigma^-1 mu),
    E[w_n w_n^T] = S_n + E[w_n] E[w_n]^T.
    All solves go through Cholesky factorizations.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    mu = np.asarray(mu, dtype=float)
    k = mu.shape[0]
    sigma_cho = _spd_factor(np.asarray(sigma, dtype=float), "Sigma")
    sigma_inv = cho_solve(sigma_cho, np.eye(k))
    sigma_inv_mu = cho_solve(sigma_cho, mu)

    expectations = []
    for design in designs:
        s_inv = sigma_inv + beta * design.phi_t_phi
        s_cho = _spd_factor(s_inv, "S_n^-1")
        s_n = cho_solve(s_cho, np.eye(k))
        e_w = cho_solve(s_cho, beta * design.phi_t_y + sigma_inv_mu)
        e_wwt = s_n + np.outer(e_w, e_w)
        expectations.append(Expectation(e_w, e_wwt, s_n))
    return expectations


@dataclass
class MStepResult:
    mu: np.ndarray
    sigma: np.ndarray
    beta: float
    ridge_applied: bool = False


def m_step(expectations: list[Expectation], designs: list[StackedDesign]) -> MStepResult:
    """Closed-form likelihood maximization given posterior moments.

    mu is the mean of E[w_n]; Sigma the symmetrized second moment about the
    fresh mu; 1/beta the mean squared residual over all 3*M_total scalar
    observations, floored at 1e-12. A small ridge proportional to the mean
    eigenvalue is added if Sigma fails its Cholesky factorization.
    """
    if not expectations:
        raise ValueError("need at least one trajectory")
    n = len(expectations)
    k = expectations[0].e_w.shape[0]
    mu = sum(e.e_w for e in expectations) / n

    sigma = np.zeros((k, k))
    for e in expectations:
        sigma += e.e_wwt - np.outer(e.e_w, mu) - np.outer(mu, e.e_w) + np.outer(mu, mu)
    sigma /= n
    sigma = 0.5 * (sigma + sigma.T)

    m_total = sum(d.m_points for d in designs)
    residual = 0.0
    for e, d in zip(expectations, designs):
        residual += d.y_t_y - 2.0 * (d.phi_t_y @ e.e_w) + np.trace(d.phi_t_phi @ e.e_wwt)
    inv_beta = max(residual / (3.0 * m_total), BETA_RESIDUAL_FLOOR)
    beta = 1.0 / inv_beta

    ridged = False
    try:
        cho_factor(sigma, lower=True)
    except LinAlgError:
        ridge = 1e-10 * np.trace(sigma) / k
        sigma = sigma + max(ridge, 1e-300) * np.eye(k)
        ridged = True
    return MStepResult(mu, sigma, beta, ridged)


def neg_log_likelihood(mu: np.ndarray, sigma: np.ndarray, beta: float,
                       expectations: list[Expectation],
                       designs: list[StackedDesign]) -> float:
    """Expected complete-data negative log-likelihood (constants dropped)."""
    n = len(designs)
    k = np.asarray(mu).shape[0]
    m_total = sum(d.m_points for d in designs)
    sigma_cho = _spd_factor(np.asarray(sigma, dtype=float), "Sigma")
    log_det_sigma = 2.0 * float(np.sum(np.log(np.diag(sigma_cho[0]))))
    sigma_inv = cho_solve(sigma_cho, np.eye(k))

    data_term = 0.0
    prior_term = 0.0
    for e, d in zip(expectations, designs):
        data_term += d.y_t_y - 2.0 * (d.phi_t_y @ e.e_w) + np.trace(d.phi_t_phi @ e.e_wwt)
        second_moment = e.e_wwt - 2.0 * np.outer(e.e_w, mu) + np.outer(mu, mu)
        prior_term += np.trace(sigma_inv @ second_moment)
    return float(
        -1.5 * m_total * math.log(beta)
        + 0.5 * beta * data_term
        + 0.5 * n * log_det_sigma
        + 0.5 * prior_term
    )


def marginal_log_likelihood(mu: np.ndarray, sigma: np.ndarray, beta: float,
                            designs: list[StackedDesign]) -> float:
    """Exact log of prod_n N(y_n; Phi_n mu, Phi_n Sigma Phi_n^T + I/beta).

    Evaluated through the weight-space factorization so no row-by-row
    covariance matrix is ever formed.
    """
    mu = np.asarray(mu, dtype=float)
    k = mu.shape[0]
    sigma_cho = _spd_factor(np.asarray(sigma, dtype=float), "Sigma")
    log_det_sigma = 2.0 * float(np.sum(np.log(np.diag(sigma_cho[0]))))
    sigma_inv = cho_solve(sigma_cho, np.eye(k))

    total = 0.0
    for d in designs:
        rows = d.phi.shape[0]
        s_inv = sigma_inv + beta * d.phi_t_phi
        s_cho = _spd_factor(s_inv, "S_n^-1")
        log_det_s = -2.0 * float(np.sum(np.log(np.diag(s_cho[0]))))
        log_det_c = -rows * math.log(beta) + log_det_sigma - log_det_s
        resid_sq = d.y_t_y - 2.0 * (d.phi_t_y @ mu) + mu @ d.phi_t_phi @ mu
        phi_t_resid = d.phi_t_y - d.phi_t_phi @ mu
        quad = beta * resid_sq - beta**2 * (phi_t_resid @ cho_solve(s_cho, phi_t_resid))
        total += -0.5 * (rows * math.log(2.0 * math.pi) + log_det_c + quad)
    return float(total)


@dataclass
class FitParams:
    prior_scale: float = 1e3   # initial Sigma = prior_scale * I
    beta_init: float = 1e3
    tol: float = 1e-3          # absolute change of the negative log-likelihood
    max_iterations: int = 500

    def __post_init__(self):
        if self.prior_scale <= 0 or self.beta_init <= 0:
            raise ValueError("prior_scale and beta_init must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class TrajectoryModel:
    """Fitted corridor model: weight-space Gaussian, basis and scaling."""

    mu: np.ndarray
    sigma: np.ndarray
    beta: float
    basis: BasisSet
    transform: NormalizationTransform
    n_trajectories: int
    nll_trace: list[float] = field(default_factory=list)
    marginal_ll_trace: list[float] = field(default_factory=list)
    converged: bool = True
    n_iterations: int = 0
    ridge_applied: bool = False


@dataclass
class GaussianSection:
    """3-D Gaussian the model induces at a single tau."""

    mean: np.ndarray  # (3,)
    cov: np.ndarray   # (3, 3) SPD


def em_fit(normalized: list[NormalizedTrajectory], basis: BasisSet,
           transform: NormalizationTransform,
           params: FitParams | None = None) -> TrajectoryModel:
    """Fit (mu, Sigma, beta) by EM from the flat high-variance start.

    Starts at mu=0, Sigma=prior_scale*I, beta=beta_init and alternates
    posterior expectations with the closed-form updates until the expected
    complete-data negative log-likelihood changes by at most tol, or the
    iteration cap is hit (converged flag False). The exact marginal
    log-likelihood is recorded at the start and after every update.
    """
    if not normalized:
        raise ValueError("cluster is empty")
    params = params or FitParams()
    designs = [StackedDesign.from_trajectory(basis, track) for track in normalized]
    k = 3 * basis.J
    mu = np.zeros(k)
    sigma = params.prior_scale * np.eye(k)
    beta = params.beta_init

    nll_trace: list[float] = []
    marginal_trace = [marginal_log_likelihood(mu, sigma, beta, designs)]
    converged = False
    ridged_ever = False
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        expectations = e_step(mu, sigma, beta, designs)
        update = m_step(expectations, designs)
        mu, sigma, beta = update.mu, update.sigma, update.beta
        ridged_ever = ridged_ever or update.ridge_applied
        marginal_trace.append(marginal_log_likelihood(mu, sigma, beta, designs))
        nll = neg_log_likelihood(mu, sigma, beta, expectations, designs)
        nll_trace.append(nll)
        if len(nll_trace) >= 2 and abs(nll_trace[-2] - nll) <= params.tol:
            converged = True
            break

    return TrajectoryModel(
        mu=mu, sigma=sigma, beta=beta, basis=basis, transform=transform,
        n_trajectories=len(normalized), nll_trace=nll_trace,
        marginal_ll_trace=marginal_trace, converged=converged,
        n_iterations=iterations, ridge_applied=ridged_ever,
    )


def fit_cluster(cluster: list[Trajectory], basis: BasisSet | None = None,
                params: FitParams | None = None) -> TrajectoryModel:
    """Normalize a cluster of raw trajectories and fit the EM model."""
    basis = basis or BasisSet.uniform()
    normalized, transform = normalize_cluster(cluster)
    return em_fit(normalized, basis, transform, params)


def model_section(model: TrajectoryModel, tau: float) -> GaussianSection:
    """Normalized-space mean Phi(tau) mu and covariance Phi Sigma Phi^T + I/beta."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    phi = basis_eval(model.basis, tau)
    mean = phi @ model.mu
    cov = phi @ model.sigma @ phi.T + np.eye(3) / model.beta
    return GaussianSection(mean, 0.5 * (cov + cov.T))


def model_section_real(model: TrajectoryModel, tau: float) -> GaussianSection:
    """Same section expressed in real-space metres."""
    section = model_section(model, tau)
    return GaussianSection(
        model.transform.denormalize(section.mean),
        model.transform.denormalize_cov(section.cov),
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_model(model: TrajectoryModel, path: Path | str) -> None:
    Path(path).write_text(serialize_model(model), encoding="utf-8")


def serialize_model(model: TrajectoryModel) -> str:
    """Self-describing text format, exact to 17 significant digits."""
    out = io.StringIO()
    out.write("format = trajreduce-model-v1\n")
    out.write(f"J = {model.basis.J}\n")
    out.write("centers = " + ",".join(_fmt(c) for c in model.basis.centers) + "\n")
    out.write(f"width = {_fmt(model.basis.width)}\n")
    out.write("offset = " + ",".join(_fmt(v) for v in model.transform.offset) + "\n")
    out.write("scale = " + ",".join(_fmt(v) for v in model.transform.scale) + "\n")
    out.write(f"n_trajectories = {model.n_trajectories}\n")
    out.write(f"beta = {_fmt(model.beta)}\n")
    out.write(f"converged = {str(model.converged).lower()}\n")
    out.write(f"n_iterations = {model.n_iterations}\n")
    out.write("mu = " + " ".join(_fmt(v) for v in model.mu) + "\n")
    for row in model.sigma:
        out.write(" ".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def load_model(source: str | Path) -> TrajectoryModel:
    text = source.read_text(encoding="utf-8") if isinstance(source, Path) else source
    lines = text.splitlines()
    header: dict[str, str] = {}
    idx = 0
    while idx < len(lines) and "=" in lines[idx]:
        key, _, value = lines[idx].partition("=")
        key = key.strip()
        if key == "mu":
            break
        header[key] = value.strip()
        idx += 1
    if header.get("format") != "trajreduce-model-v1":
        raise ValueError("not a trajreduce model file")
    if idx >= len(lines) or not lines[idx].startswith("mu ="):
        raise ValueError("model file missing mu row")

    j = int(header["J"])
    basis = BasisSet(
        np.array([float(v) for v in header["centers"].split(",")]),
        float(header["width"]),
    )
    if basis.J != j:
        raise ValueError("center count inconsistent with J")
    transform = NormalizationTransform(
        np.array([float(v) for v in header["offset"].split(",")]),
        np.array([float(v) for v in header["scale"].split(",")]),
    )
    mu = np.array([float(v) for v in lines[idx].partition("=")[2].split()])
    if mu.shape[0] != 3 * j:
        raise ValueError("mu length inconsistent with J")
    sigma_rows = lines[idx + 1:idx + 1 + 3 * j]
    if len(sigma_rows) != 3 * j:
        raise ValueError("Sigma row count inconsistent with J")
    sigma = np.array([[float(v) for v in row.split()] for row in sigma_rows])
    return TrajectoryModel(
        mu=mu, sigma=sigma, beta=float(header["beta"]), basis=basis,
        transform=transform, n_trajectories=int(header["n_trajectories"]),
        converged=header.get("converged", "true") == "true",
        n_iterations=int(header.get("n_iterations", "0")),
    )
