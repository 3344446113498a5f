"""Locally interpretable surrogate models via supervised partitioning.

Response trees with linear node models, derivative trees with constant node
models, k-means clustering baselines, a synthetic benchmark generator, and
an evaluation harness comparing them globally and per partition.
"""

from limesup._kernels import BACKEND as kernel_backend
from limesup.data import Dataset, StandardizationParams, load_csv, split_dataset, standardize, write_csv
from limesup.dtree import ScaledDerivatives, dtree_response_models, grow_dtree, scale_derivatives, terminal_coefficients
from limesup.evalx import MetricsReport, PartitionReport, global_metrics, partition_comparison
from limesup.exceptions import DataError, NumericError
from limesup.klime import KMeansModel, assign_clusters, build_transform, klime_fit, klime_predict, kmeans
from limesup.linmod import ConstantModel, LinearModel, fit_constant, fit_lasso, fit_ols, predict, select_lambda
from limesup.simgen import SimConfig, analytic_derivatives, eq1_logit, simulate_eq1
from limesup.suptree import (
    GrowthConfig,
    Node,
    SplitSpec,
    Tree,
    assign_partition,
    exhaustive_split_search,
    fluctuation_filter,
    grow_tree,
    load_tree,
    predict_tree,
    prune_tree,
    refit_terminals_lasso,
    save_tree,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
