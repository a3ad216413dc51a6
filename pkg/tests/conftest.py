import numpy as np
import pytest

from vecchiagp import CovarianceParameters, Dataset, engine, oracle

CORES = list(engine.available_cores())


@pytest.fixture(params=CORES)
def core(request):
    """Run a test once per available execution core."""
    return request.param


def make_instance(seed, n=50, d=2, p=1, family="exponential_isotropic", theta=None):
    """Random dataset simulated exactly from the requested model."""
    rng = np.random.default_rng(seed)
    if family == "exponential_sphere":
        lon = rng.uniform(-180.0, 180.0, n)
        lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, n)))
        locs = np.column_stack([lon, lat])
        d = 2
    else:
        locs = rng.uniform(0.0, 1.0, (n, d))
    X = np.ones((n, p))
    if p > 1:
        X[:, 1:] = rng.normal(size=(n, p - 1))
    if theta is None:
        if family == "exponential_anisotropic":
            theta = np.concatenate([[1.5], rng.uniform(0.1, 0.5, d), [0.1]])
        elif family == "exponential_sphere":
            theta = np.array([1.5, 0.3, 0.1])
        else:
            theta = np.array([1.5, 0.25, 0.1])
    cov = CovarianceParameters(family, np.asarray(theta, dtype=np.float64))
    beta = rng.normal(size=p)
    y = oracle.simulate_gp(cov, beta, locs, X, seed=seed + 1)
    return Dataset(y=y, X=X, locs=locs), cov


def parts_tuple(parts):
    return (
        parts.logdet,
        parts.ysy,
        parts.xsx,
        parts.ysx,
        parts.dlogdet,
        parts.dysy,
        parts.dysx,
        parts.dxsx,
        parts.ainfo,
    )


def parts_equal(a, b):
    for x, y in zip(parts_tuple(a), parts_tuple(b)):
        if not np.array_equal(np.asarray(x), np.asarray(y)):
            return False
    return True


def parts_close(a, b, rtol=1e-10):
    for x, y in zip(parts_tuple(a), parts_tuple(b)):
        np.testing.assert_allclose(np.asarray(x), np.asarray(y), rtol=rtol, atol=1e-12)
