"""Score-variance tests for the appropriate level of clustering."""

from .data import ClusterNesting, Partition, RegressionData, load_csv, validate_nesting
from .kernels import BACKEND
from .regression import OlsFit, PartialedDesign, ScoreSet, build_scores, delete_cluster_fit, ols, partial_out
from .statistics import (
    SvStatistic,
    asym_pvalue,
    elimination_matrix,
    sigma_hat,
    tau_sigma,
    tau_Sigma,
    theta_contrast,
    var_theta,
)

__version__ = "0.1.0"
