"""Whittle-Matern Gaussian random fields on metric graphs.

C++ core with point- and line-supported observations, FEM discretization,
and empirical-Bayes fitting; see the README for the CLI.
"""

from ._core import (  # noqa: F401
    AmbiguousChainError,
    BrokenChainError,
    CholeskyFactor,
    Dataset,
    DegenerateEdgeError,
    DisconnectedGraphError,
    FitResult,
    GraphLocation,
    GraphPath,
    HyperParams,
    IntegrationScheme,
    InterEdgeInterval,
    LineObs,
    LineScale,
    Link,
    Mesh,
    MetricGraph,
    ModelSpec,
    NoiseModel,
    NotPositiveDefiniteError,
    Observations,
    OptimizerOptions,
    PointObs,
    PointOffGraphError,
    PriorSpec,
    SparseDesign,
    SparseSym,
    Support,
    assemble_mass,
    assemble_stiffness,
    average_covariate,
    average_speed_estimand,
    build_graph,
    build_mesh,
    coverage,
    crps_gaussian,
    desk_segments,
    evaluate_field,
    fit_linear,
    fit_nonlinear,
    generate_covariate,
    line_matrix,
    log_marginal,
    marginal_variances,
    midpoint,
    path_from_polyline,
    path_from_waypoints,
    point_matrix,
    posterior_sample,
    precision,
    predict,
    rmse,
    sample_field,
    simpson_scheme,
    simulate_observations,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
