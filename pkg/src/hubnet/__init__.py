"""Latent hub networks from time series of directed flow matrices."""

from .analysis import (
    ClusterResult,
    HubNetwork,
    PlotData,
    RollingResult,
    WindowResult,
    export_plot_data,
    hub_network,
    normalize_fit,
    rolling_fit,
    truncate_loadings,
    ward_cluster,
)
from .errors import HubnetError
from .estimator import AUTO, ModelFamily, ModelFit, fit_model1, fit_model2, residuals, variance_explained
from .moments import Mode, Orientation, Path, SymmetricAccumulator, build_m_matrix, lagged_cross_moment
from .rotation import AlignmentMap, align_hubs, sum_one_normalize, varimax
from .series import (
    MatrixSeries,
    YearMonth,
    export_long_csv,
    ingest_long_csv,
    mirror_impute,
    three_month_average,
    window,
)
from .simgen import GroundTruth, make_truth, simulate, subspace_distance
from .spectral import LoadingMatrix, LoadingState, ratio_rank, scree_rank, sym_eigen

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
