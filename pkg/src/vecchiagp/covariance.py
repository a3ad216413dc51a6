"""Exponential covariance families and their parameter derivatives.

Three families are registered:

``exponential_isotropic``
    theta = [variance, range, nugget]; one shared range for all axes.
``exponential_anisotropic``
    theta = [variance, range_1..range_d, nugget]; per-axis ranges.
``exponential_sphere``
    theta = [variance, range, nugget]; lon/lat degree inputs embedded on
    the unit sphere, then the isotropic kernel on the chordal distance.

The nugget parameter is relative: the noise variance added to the
diagonal is nugget * variance, so every diagonal entry equals
variance * (1 + nugget).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownFamily
from .model import CovarianceParameters

FAMILY_NAMES = (
    "exponential_isotropic",
    "exponential_anisotropic",
    "exponential_sphere",
)

# kernel codes understood by the engine cores
KERNEL_ISOTROPIC = 0
KERNEL_ANISOTROPIC = 1


def _pairwise_dist(locs_a, locs_b=None):
    a = np.asarray(locs_a, dtype=np.float64)
    b = a if locs_b is None else np.asarray(locs_b, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def exponential_isotropic(theta, locsub) -> np.ndarray:
    """Dense local covariance for the shared-range exponential kernel.

    Off-diagonal entries are variance * exp(-dist / range); diagonal
    entries are variance * (1 + nugget).
    """
    sigma2, rho, tau2 = theta
    locsub = np.atleast_2d(np.asarray(locsub, dtype=np.float64))
    K = sigma2 * np.exp(-_pairwise_dist(locsub) / rho)
    np.fill_diagonal(K, sigma2 * (1.0 + tau2))
    return K


def _scaled_dist(theta, locsub, locs_b=None):
    d = locsub.shape[1]
    rho = np.asarray(theta[1 : 1 + d], dtype=np.float64)
    a = locsub / rho
    b = a if locs_b is None else locs_b / rho
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def exponential_anisotropic(theta, locsub) -> np.ndarray:
    """Dense local covariance with one range parameter per coordinate axis."""
    locsub = np.atleast_2d(np.asarray(locsub, dtype=np.float64))
    sigma2 = theta[0]
    tau2 = theta[-1]
    K = sigma2 * np.exp(-_scaled_dist(theta, locsub))
    np.fill_diagonal(K, sigma2 * (1.0 + tau2))
    return K


def d_exponential(theta, locsub, family) -> np.ndarray:
    """Analytic parameter derivatives of the local covariance.

    Returns a (nparms, k, k) stack: one symmetric matrix per parameter,
    ordered exactly as theta. The variance derivative is K / variance;
    the nugget derivative is variance * I; range derivatives vanish on
    the diagonal.
    """
    locsub = np.atleast_2d(np.asarray(locsub, dtype=np.float64))
    k, d = locsub.shape
    theta = np.asarray(theta, dtype=np.float64)
    if family == "exponential_isotropic" or family == "exponential_sphere":
        sigma2, rho, tau2 = theta
        r = _pairwise_dist(locsub)
        decay = np.exp(-r / rho)
        D = np.empty((3, k, k))
        D[0] = decay
        np.fill_diagonal(D[0], 1.0 + tau2)
        D[1] = sigma2 * decay * r / rho**2
        np.fill_diagonal(D[1], 0.0)
        D[2] = sigma2 * np.eye(k)
        return D
    if family == "exponential_anisotropic":
        sigma2 = theta[0]
        tau2 = theta[-1]
        rho = theta[1 : 1 + d]
        s = _scaled_dist(theta, locsub)
        decay = np.exp(-s)
        D = np.empty((d + 2, k, k))
        D[0] = decay
        np.fill_diagonal(D[0], 1.0 + tau2)
        with np.errstate(invalid="ignore", divide="ignore"):
            for axis in range(d):
                delta2 = (locsub[:, None, axis] - locsub[None, :, axis]) ** 2
                grad = sigma2 * decay * delta2 / (rho[axis] ** 3 * s)
                grad[s == 0.0] = 0.0
                D[1 + axis] = grad
        D[-1] = sigma2 * np.eye(k)
        return D
    raise UnknownFamily(f"no derivative rule for family {family!r}")


def _embed_degrees(locs):
    from .preprocess import embed_lonlat

    return embed_lonlat(locs)


@dataclass(frozen=True)
class CovarianceFamily:
    """Registry handle: evaluators plus arity metadata for one family.

    ``prepare_locs`` maps raw coordinates to the space the kernel is
    evaluated in (the identity except for the sphere embedding); the
    engine and the kriging code call it once per run, so all distance
    computations and the kernel agree on the working coordinates.
    """

    name: str
    kernel_code: int

    def nparms(self, d: int) -> int:
        if self.name == "exponential_anisotropic":
            return d + 2
        return 3

    def prepare_locs(self, locs) -> np.ndarray:
        locs = np.ascontiguousarray(locs, dtype=np.float64)
        if self.name == "exponential_sphere":
            if locs.shape[1] != 2:
                raise ValueError(
                    "exponential_sphere expects lon/lat input with d=2, "
                    f"got d={locs.shape[1]}"
                )
            return _embed_degrees(locs)
        return locs

    def matrix(self, theta, locs) -> np.ndarray:
        """Full covariance (nugget included on the diagonal) at raw coordinates."""
        work = self.prepare_locs(np.atleast_2d(locs))
        if self.name == "exponential_anisotropic":
            return exponential_anisotropic(theta, work)
        return exponential_isotropic(theta, work)

    def derivatives(self, theta, locs) -> np.ndarray:
        work = self.prepare_locs(np.atleast_2d(locs))
        if self.name == "exponential_anisotropic":
            return d_exponential(theta, work, "exponential_anisotropic")
        return d_exponential(theta, work, "exponential_isotropic")

    def cross(self, theta, locs_a, locs_b) -> np.ndarray:
        """Cross covariance between two location sets, nugget excluded."""
        a = self.prepare_locs(np.atleast_2d(locs_a))
        b = self.prepare_locs(np.atleast_2d(locs_b))
        sigma2 = theta[0]
        if self.name == "exponential_anisotropic":
            return sigma2 * np.exp(-_scaled_dist(theta, a, b))
        rho = theta[1]
        return sigma2 * np.exp(-_pairwise_dist(a, b) / rho)


_REGISTRY = {
    "exponential_isotropic": CovarianceFamily("exponential_isotropic", KERNEL_ISOTROPIC),
    "exponential_anisotropic": CovarianceFamily(
        "exponential_anisotropic", KERNEL_ANISOTROPIC
    ),
    "exponential_sphere": CovarianceFamily("exponential_sphere", KERNEL_ISOTROPIC),
}


def covariance_registry(name: str) -> CovarianceFamily:
    """Look up a family handle by its exact name.

    Raises UnknownFamily for anything not registered (notably "matern",
    which this package does not provide).
    """
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownFamily(
            f"unknown covariance family {name!r}; available: {', '.join(FAMILY_NAMES)}"
        ) from None


def validate_parameters(params: CovarianceParameters, d: int) -> CovarianceFamily:
    """Check positivity and arity of a parameter vector against a dataset dimension."""
    family = covariance_registry(params.family)
    expected = family.nparms(d)
    if params.nparms != expected:
        raise ValueError(
            f"{params.family} with d={d} needs {expected} parameters, "
            f"got {params.nparms}"
        )
    theta = params.theta
    if not np.all(np.isfinite(theta)):
        raise ValueError("covariance parameters must be finite")
    if np.any(theta[:-1] <= 0.0):
        raise ValueError("variance and range parameters must be strictly positive")
    if theta[-1] < 0.0:
        raise ValueError("nugget must be >= 0")
    return family
