"""Ensemble spatial interpolation.

Estimates a spatial variable at unmeasured locations by averaging many
weak interpolations, each computed inside the cells of an independently
sampled random partition of the domain. The per-partition samples are
kept as a cube, so estimates can be re-aggregated and their precision
quantified without re-running the ensemble.
"""

from . import aggregation, precision
from .engine import (
    EsiConfig,
    EstimationResult,
    esi_griddata,
    esi_nongriddata,
    generate_cube,
    re_estimate,
)
from .errors import EsikitError, OutOfDomainError, SchemaError, UnsupportedCombination
from .geometry import (
    ConditioningData,
    Domain,
    GridSpec,
    LocationSet,
    enclosing_domain,
    flatten_grid,
)
from .idw_baseline import GlobalIdwParams, IdwResult, idw_griddata, idw_nongriddata
from .interpolators import (
    IdwParams,
    KrigingParams,
    covariance,
    idw_estimate,
    kriging_estimate,
    kriging_weights,
)
from .partition import (
    Forest,
    MondrianTree,
    VoronoiPartition,
    cell_ids,
    forest_to_json,
    lambda_mondrian,
    lambda_voronoi,
    sample_forest,
    sample_mondrian,
    sample_trained_mondrian,
    sample_voronoi,
)
from .precision import (
    LossFunction,
    OperationalErrorLoss,
    loss,
    mae_cube,
    mae_loss,
    make_loss,
    mse_cube,
    mse_loss,
    operational_error_loss,
    resolve_loss,
)
from .search import (
    CvErrorReport,
    IdwSearchGrid,
    SearchGrid,
    SearchRecord,
    SearchResult,
    esi_hparams_search,
    idw_hparams_search,
)
from .synthetic import benchmark_grid, benchmark_surface, sample_surface, surface_on_grid

__version__ = "0.1.0"

__all__ = [
    "aggregation",
    "precision",
    "EsiConfig",
    "EstimationResult",
    "esi_griddata",
    "esi_nongriddata",
    "generate_cube",
    "re_estimate",
    "EsikitError",
    "OutOfDomainError",
    "SchemaError",
    "UnsupportedCombination",
    "ConditioningData",
    "Domain",
    "GridSpec",
    "LocationSet",
    "enclosing_domain",
    "flatten_grid",
    "GlobalIdwParams",
    "IdwResult",
    "idw_griddata",
    "idw_nongriddata",
    "IdwParams",
    "KrigingParams",
    "covariance",
    "idw_estimate",
    "kriging_estimate",
    "kriging_weights",
    "Forest",
    "MondrianTree",
    "VoronoiPartition",
    "cell_ids",
    "forest_to_json",
    "lambda_mondrian",
    "lambda_voronoi",
    "sample_forest",
    "sample_mondrian",
    "sample_trained_mondrian",
    "sample_voronoi",
    "LossFunction",
    "OperationalErrorLoss",
    "loss",
    "mae_cube",
    "mae_loss",
    "make_loss",
    "mse_cube",
    "mse_loss",
    "operational_error_loss",
    "resolve_loss",
    "CvErrorReport",
    "IdwSearchGrid",
    "SearchGrid",
    "SearchRecord",
    "SearchResult",
    "esi_hparams_search",
    "idw_hparams_search",
    "benchmark_grid",
    "benchmark_surface",
    "sample_surface",
    "surface_on_grid",
    "__version__",
]
