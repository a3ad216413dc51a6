"""Gaussian-process fitting for large spatial datasets.

Fits GP regression models by ordered nearest-neighbor conditioning:
each observation's likelihood contribution involves only a small local
covariance matrix, so the whole evaluation runs as independent
per-observation kernels under interchangeable parallel backends.
Covariance parameters are estimated by Fisher scoring with profiled
mean parameters; prediction is nearest-neighbor kriging.
"""

from .covariance import covariance_registry
from .engine import VecchiaParts, active_core_name, process_observation, run
from .inference import assemble, default_start, fisher_step, fit
from .model import CovarianceParameters, Dataset, FitResult, ModelSpec, validate_dataset
from .oracle import dense_loglik_profiled, fd_gradient, simulate_gp
from .predict import krige, rmse
from .preprocess import (
    NeighborArray,
    Ordering,
    find_ordered_neighbors,
    identity_ordering,
    lonlat_to_xyz,
    random_permutation,
    reorder_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceParameters",
    "Dataset",
    "FitResult",
    "ModelSpec",
    "NeighborArray",
    "Ordering",
    "VecchiaParts",
    "active_core_name",
    "assemble",
    "covariance_registry",
    "default_start",
    "dense_loglik_profiled",
    "fd_gradient",
    "find_ordered_neighbors",
    "fisher_step",
    "fit",
    "identity_ordering",
    "krige",
    "lonlat_to_xyz",
    "process_observation",
    "random_permutation",
    "reorder_dataset",
    "rmse",
    "run",
    "simulate_gp",
    "validate_dataset",
    "__version__",
]
