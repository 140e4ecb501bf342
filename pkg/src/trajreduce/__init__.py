"""Reduce historical 3-D flight tracks to weighted representative trajectories."""

from .clustering import (
    ClusteringParams,
    ClusterLabeling,
    ClusterResult,
    NOISE,
    PcaModel,
    cluster_pipeline,
    dbscan,
    pca_fit,
    pca_project,
    resample,
)
from .footprint import (
    FootprintComparison,
    FootprintGrid,
    GridSpec,
    compare_footprints,
    footprint_raw,
    footprint_weighted,
    grid_from_trajectories,
)
from .gp_model import (
    BasisSet,
    FitParams,
    GaussianSection,
    NormalizationTransform,
    StackedDesign,
    TrajectoryModel,
    basis_eval,
    e_step,
    em_fit,
    fit_cluster,
    load_model,
    m_step,
    marginal_log_likelihood,
    model_section,
    model_section_real,
    neg_log_likelihood,
    normalize_cluster,
    save_model,
)
from .representative import (
    EigenFrame,
    Ellipsoid,
    EllipsoidField,
    PlaneEllipse,
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
from .trajectory_io import (
    AirportGeometry,
    ParseResult,
    Phase,
    Runway,
    Trajectory,
    TrajectoryError,
    TrajectoryPoint,
    assign_runway,
    classify_phase,
    filter_altitude,
    load_airport_geometry,
    parse_trajectories,
    serialize_trajectories,
)

__version__ = "0.1.0"
