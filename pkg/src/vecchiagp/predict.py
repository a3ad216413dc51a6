"""Nearest-neighbor kriging with profiled mean, plus evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from .covariance import covariance_registry
from .errors import LengthMismatch, NotPositiveDefinite
from .model import Dataset, FitResult

DEFAULT_M_PRED = 60


@dataclass(frozen=True)
class PredictionSet:
    """Per-point conditional means and standard deviations."""

    locs_star: np.ndarray
    X_star: np.ndarray
    mean: np.ndarray
    sd: np.ndarray | None = None


def _nearest_training(work_train, point, m_pred):
    diff = work_train - point
    d2 = (diff * diff).sum(axis=1)
    take = min(m_pred, work_train.shape[0])
    order = np.lexsort((np.arange(work_train.shape[0]), d2))
    return order[:take]


def krige(
    fit: FitResult,
    train: Dataset,
    locs_star,
    X_star,
    m_pred: int = DEFAULT_M_PRED,
    latent: bool = False,
    with_sd: bool = True,
) -> PredictionSet:
    """Conditional mean (and sd) at new locations from the m_pred nearest
    training observations.

    Each point is predicted independently: gather its nearest training
    rows by an exhaustive scan, factor their joint covariance at the
    fitted parameters and combine. By default the noisy process is
    predicted (the nugget contributes to the variance); `latent=True`
    predicts the noise-free field instead. The cross-covariance vector
    never includes the nugget.
    """
    cov = fit.theta_hat
    family = covariance_registry(cov.family)
    theta = cov.theta
    locs_star = np.atleast_2d(np.asarray(locs_star, dtype=np.float64))
    X_star = np.atleast_2d(np.asarray(X_star, dtype=np.float64))
    if locs_star.shape[0] != X_star.shape[0]:
        raise LengthMismatch(
            f"{locs_star.shape[0]} prediction locations but {X_star.shape[0]} covariate rows"
        )
    if m_pred < 1 or m_pred > train.n:
        raise ValueError(f"m_pred must be in [1, n]={train.n}, got {m_pred}")

    work_train = family.prepare_locs(train.locs)
    work_star = family.prepare_locs(locs_star)
    beta = fit.beta_hat
    resid = train.y - train.X @ beta
    sigma2 = theta[0]
    tau2 = theta[-1]
    prior_var = sigma2 if latent else sigma2 * (1.0 + tau2)

    q = locs_star.shape[0]
    mean = np.empty(q)
    sd = np.empty(q) if with_sd else None
    for t in range(q):
        nbrs = _nearest_training(work_train, work_star[t], m_pred)
        K = family.matrix(theta, train.locs[nbrs])
        kvec = family.cross(theta, train.locs[nbrs], locs_star[t : t + 1])[:, 0]
        try:
            L = cholesky(K, lower=True)
        except LinAlgError:
            raise NotPositiveDefinite(pivot=-1) from None
        half_k = solve_triangular(L, kvec, lower=True)
        half_r = solve_triangular(L, resid[nbrs], lower=True)
        mean[t] = X_star[t] @ beta + half_k @ half_r
        if with_sd:
            sd[t] = np.sqrt(max(prior_var - half_k @ half_k, 0.0))
    return PredictionSet(locs_star=locs_star, X_star=X_star, mean=mean, sd=sd)


def rmse(pred, actual) -> float:
    """Root mean squared difference between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape[0] != actual.shape[0]:
        raise LengthMismatch(
            f"prediction length {pred.shape[0]} != actual length {actual.shape[0]}"
        )
    diff = pred - actual
    return float(np.sqrt(np.mean(diff * diff)))
