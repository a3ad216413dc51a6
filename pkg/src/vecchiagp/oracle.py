"""Dense exact-GP reference implementations and simulators.

Everything here is O(n^2) memory or worse and guarded accordingly; the
rest of the package never calls it on the hot path. It exists to
validate the approximate results and to generate synthetic data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from .covariance import covariance_registry
from .errors import NotPositiveDefinite, SizeGuardExceeded
from .model import CovarianceParameters, Dataset

DENSE_GUARD = 5000

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DenseEvaluation:
    loglik: float
    beta_hat: np.ndarray
    grad: np.ndarray | None = None


def _dense_chol(cov: CovarianceParameters, locs) -> np.ndarray:
    family = covariance_registry(cov.family)
    sigma = family.matrix(cov.theta, locs)
    try:
        return cholesky(sigma, lower=True)
    except LinAlgError:
        raise NotPositiveDefinite(pivot=-1) from None


def dense_loglik_profiled(
    cov: CovarianceParameters, ds: Dataset, with_gradient: bool = False
) -> DenseEvaluation:
    """Exact profiled Gaussian log-likelihood from the full covariance.

    Builds the n x n covariance, factors it, profiles the mean by GLS
    and returns -(n log 2pi + log det + r' Sigma^-1 r) / 2. Guarded to
    n <= 5000. The optional gradient is by central finite differences.
    """
    n = ds.n
    if n > DENSE_GUARD:
        raise SizeGuardExceeded(f"dense oracle guarded to n <= {DENSE_GUARD}, got {n}")
    L = _dense_chol(cov, ds.locs)
    half_X = solve_triangular(L, ds.X, lower=True)
    half_y = solve_triangular(L, ds.y, lower=True)
    xtx = half_X.T @ half_X
    beta = np.linalg.solve(xtx, half_X.T @ half_y)
    resid = half_y - half_X @ beta
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    loglik = -0.5 * (n * LOG_2PI + logdet + resid @ resid)
    grad = None
    if with_gradient:
        grad = fd_gradient(
            lambda th: dense_loglik_profiled(
                CovarianceParameters(cov.family, th), ds
            ).loglik,
            cov.theta,
        )
    return DenseEvaluation(loglik=float(loglik), beta_hat=beta, grad=grad)


def fd_gradient(f, theta, h_rel: float = 1e-6) -> np.ndarray:
    """Central finite differences with per-coordinate step h_rel * theta_j."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty(theta.shape[0])
    for j in range(theta.shape[0]):
        h = h_rel * theta[j]
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (f(up) - f(dn)) / (2.0 * h)
    return grad


def simulate_gp(cov: CovarianceParameters, beta, locs, X, seed: int) -> np.ndarray:
    """Exact draw y = X beta + chol(Sigma) xi with a PCG64-seeded xi.

    Guarded to n <= 5000; for larger synthetic fields use
    simulate_nn_gp, which samples the neighbor-conditioned model.
    """
    locs = np.atleast_2d(np.asarray(locs, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = locs.shape[0]
    if n > DENSE_GUARD:
        raise SizeGuardExceeded(f"simulator guarded to n <= {DENSE_GUARD}, got {n}")
    L = _dense_chol(cov, locs)
    rng = np.random.Generator(np.random.PCG64(seed))
    xi = rng.standard_normal(n)
    return X @ np.atleast_1d(beta) + L @ xi


def simulate_nn_gp(cov: CovarianceParameters, beta, locs, X, nn, seed: int) -> np.ndarray:
    """Sequential conditional draw from the neighbor-conditioned model.

    Each y_i is sampled from its conditional given the already-drawn
    values of its conditioning set, which is exactly the joint
    distribution the approximation defines, at O(n m^3) cost. Used for
    synthetic fields too large for the dense simulator.
    """
    family = covariance_registry(cov.family)
    locs = np.atleast_2d(np.asarray(locs, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    work = family.prepare_locs(locs)
    theta = cov.theta
    n = locs.shape[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    xi = rng.standard_normal(n)
    mean = X @ np.atleast_1d(beta)
    y = np.empty(n)
    if cov.family == "exponential_anisotropic":
        from .covariance import exponential_anisotropic as kfun
    else:
        from .covariance import exponential_isotropic as kfun
    for i in range(n):
        row = nn.idx[i]
        row = row[row >= 0]
        nbrs = row[1:][::-1]
        k = nbrs.shape[0]
        var_prior = theta[0] * (1.0 + theta[-1])
        if k == 0:
            y[i] = mean[i] + np.sqrt(var_prior) * xi[i]
            continue
        pts = np.vstack([work[nbrs], work[i]])
        K = kfun(theta, pts)
        L = cholesky(K[:k, :k], lower=True)
        w = solve_triangular(L, K[:k, k], lower=True)
        cond_mean = mean[i] + w @ solve_triangular(L, y[nbrs] - mean[nbrs], lower=True)
        cond_var = var_prior - w @ w
        y[i] = cond_mean + np.sqrt(max(cond_var, 0.0)) * xi[i]
    return y
