"""Dataset and model-description types shared by every other module.

All numeric storage is 64-bit floating point, row-major, so that each
observation's data is one contiguous slice. Instances are treated as
immutable after construction and may be shared read-only across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .errors import DimensionMismatch, EmptyData, NonFiniteValue

BACKENDS = ("sequential", "task", "nested", "staged")

_BACKEND_ALIASES = {
    "seq": "sequential",
    "sequential": "sequential",
    "task": "task",
    "task-per-observation": "task",
    "nested": "nested",
    "staged": "staged",
    "staged-batched": "staged",
}


def normalize_backend(name: str) -> str:
    try:
        return _BACKEND_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}") from None


def _as_float_matrix(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


@dataclass(frozen=True)
class Dataset:
    """Response vector, design matrix and coordinates in one fixed row order.

    y : (n,) response; X : (n, p) design matrix (first column is
    conventionally an all-ones intercept); locs : (n, d) coordinates,
    either Euclidean or lon/lat degrees for the sphere family.
    """

    y: np.ndarray
    X: np.ndarray
    locs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.ascontiguousarray(self.y, dtype=np.float64).ravel())
        object.__setattr__(self, "X", _as_float_matrix(self.X))
        object.__setattr__(self, "locs", _as_float_matrix(self.locs))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.locs.shape[1]


def validate_dataset(ds: Dataset) -> None:
    """Check every Dataset invariant, raising on the first violation.

    Raises
    ------
    EmptyData
        If there are no rows.
    DimensionMismatch
        If y, X and locs do not share one row count.
    NonFiniteValue
        If any entry is NaN or infinite.
    """
    if ds.n == 0 or ds.X.shape[0] == 0 or ds.locs.shape[0] == 0:
        raise EmptyData("dataset has no rows")
    if ds.X.shape[1] == 0 or ds.locs.shape[1] == 0:
        raise EmptyData("dataset has an empty X or locs column set")
    if not (ds.y.shape[0] == ds.X.shape[0] == ds.locs.shape[0]):
        raise DimensionMismatch(
            f"row counts differ: y has {ds.y.shape[0]}, X has "
            f"{ds.X.shape[0]}, locs has {ds.locs.shape[0]}"
        )
    for name, arr in (("y", ds.y), ("X", ds.X), ("locs", ds.locs)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"non-finite entry in {name}")


@dataclass(frozen=True)
class CovarianceParameters:
    """A covariance family name plus its parameter vector.

    theta layout is family specific: [variance, range, relative nugget]
    for the isotropic families, [variance, range_1..range_d, relative
    nugget] for the anisotropic one. The nugget is relative: the noise
    variance equals nugget * variance.
    """

    family: str
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "theta", np.ascontiguousarray(self.theta, dtype=np.float64).ravel()
        )

    @property
    def nparms(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: covariance start values, neighbor count, ordering, backend."""

    covariance: CovarianceParameters
    m: int
    ordering: str = "random"
    seed: int = 0
    backend: str = "task"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("neighbor count m must be >= 1")
        if self.ordering not in ("identity", "random"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        object.__setattr__(self, "backend", normalize_backend(self.backend))


@dataclass
class FitResult:
    """Everything a fit produces.

    loglik_trace is non-decreasing (the scoring loop only accepts steps
    that do not lower the log-likelihood); fisher_info is symmetric.
    phase_timings maps phase names to milliseconds.
    """

    theta_hat: CovarianceParameters
    beta_hat: np.ndarray
    beta_cov: np.ndarray
    loglik_trace: list
    fisher_info: np.ndarray
    iterations: int
    converged: bool
    phase_timings: dict = field(default_factory=dict)

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])
