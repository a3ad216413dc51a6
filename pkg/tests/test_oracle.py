import math

import numpy as np
import pytest

from vecchiagp import CovarianceParameters, Dataset, find_ordered_neighbors, oracle
from vecchiagp.errors import SizeGuardExceeded

LOG_2PI = math.log(2 * math.pi)


class TestDenseLoglik:
    def test_single_point(self):
        sigma2, tau2 = 1.5, 0.3
        ds = Dataset(y=[0.4], X=[[1.0]], locs=[[0.0]])
        cov = CovarianceParameters("exponential_isotropic", [sigma2, 1.0, tau2])
        out = oracle.dense_loglik_profiled(cov, ds)
        assert out.loglik == pytest.approx(
            -0.5 * (LOG_2PI + math.log(sigma2 * (1 + tau2))), rel=1e-14
        )
        assert out.beta_hat[0] == pytest.approx(0.4)

    def test_two_point_closed_form(self):
        # theta=(1,1,0), locations {0,1} on a line, X = ones, y = (1,-1):
        # Sigma = [[1, c],[c, 1]] with c = e^-1, so beta = 0 and
        # y' Sigma^-1 y = (y1^2 - 2 c y1 y2 + y2^2) / (1 - c^2) = 2/(1-c)
        c = math.exp(-1.0)
        ds = Dataset(y=[1.0, -1.0], X=np.ones((2, 1)), locs=[[0.0], [1.0]])
        cov = CovarianceParameters("exponential_isotropic", [1.0, 1.0, 0.0])
        out = oracle.dense_loglik_profiled(cov, ds)
        expected = -0.5 * (2 * LOG_2PI + math.log(1 - c**2) + 2.0 / (1.0 - c))
        assert out.beta_hat[0] == pytest.approx(0.0, abs=1e-14)
        assert out.loglik == pytest.approx(expected, rel=1e-12)
        # cross-check the closed form numerically
        sigma = np.array([[1.0, c], [c, 1.0]])
        quad = ds.y @ np.linalg.solve(sigma, ds.y)
        assert quad == pytest.approx(2.0 / (1.0 - c), rel=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        n = 40
        ds = Dataset(
            y=rng.normal(size=n),
            X=np.column_stack([np.ones(n), rng.normal(size=n)]),
            locs=rng.uniform(0, 1, (n, 2)),
        )
        cov = CovarianceParameters("exponential_isotropic", [1.2, 0.3, 0.1])
        base = oracle.dense_loglik_profiled(cov, ds)
        perm = rng.permutation(n)
        shuffled = Dataset(y=ds.y[perm], X=ds.X[perm], locs=ds.locs[perm])
        out = oracle.dense_loglik_profiled(cov, shuffled)
        assert out.loglik == pytest.approx(base.loglik, rel=1e-10)

    def test_size_guard(self):
        n = 5001
        ds = Dataset(y=np.zeros(n), X=np.ones((n, 1)), locs=np.zeros((n, 1)))
        cov = CovarianceParameters("exponential_isotropic", [1.0, 1.0, 0.1])
        with pytest.raises(SizeGuardExceeded):
            oracle.dense_loglik_profiled(cov, ds)

    def test_with_gradient_matches_fd_of_itself(self):
        rng = np.random.default_rng(1)
        n = 25
        ds = Dataset(y=rng.normal(size=n), X=np.ones((n, 1)), locs=rng.uniform(0, 1, (n, 2)))
        cov = CovarianceParameters("exponential_isotropic", [1.0, 0.3, 0.1])
        out = oracle.dense_loglik_profiled(cov, ds, with_gradient=True)
        assert out.grad is not None and out.grad.shape == (3,)


class TestFdGradient:
    def test_constant_function(self):
        np.testing.assert_array_equal(
            oracle.fd_gradient(lambda th: 3.0, np.array([1.0, 2.0])), np.zeros(2)
        )

    def test_quadratic(self):
        theta = np.array([0.5, 1.5, 2.5])
        grad = oracle.fd_gradient(lambda th: float((th**2).sum()), theta)
        np.testing.assert_allclose(grad, 2 * theta, rtol=1e-6)


class TestSimulate:
    def test_fixed_seed_reproducible(self):
        locs = np.random.default_rng(0).uniform(0, 1, (30, 2))
        X = np.ones((30, 1))
        cov = CovarianceParameters("exponential_isotropic", [1.0, 0.3, 0.1])
        a = oracle.simulate_gp(cov, [0.5], locs, X, seed=9)
        b = oracle.simulate_gp(cov, [0.5], locs, X, seed=9)
        np.testing.assert_array_equal(a, b)
        c = oracle.simulate_gp(cov, [0.5], locs, X, seed=10)
        assert not np.array_equal(a, c)

    def test_degenerate_variance_returns_mean(self):
        locs = np.random.default_rng(1).uniform(0, 1, (20, 2))
        X = np.column_stack([np.ones(20), locs[:, 0]])
        cov = CovarianceParameters("exponential_isotropic", [1e-12, 0.3, 0.0])
        y = oracle.simulate_gp(cov, [2.0, -1.0], locs, X, seed=0)
        np.testing.assert_allclose(y, X @ np.array([2.0, -1.0]), atol=1e-5)

    def test_marginal_variance_monte_carlo(self):
        # single location, 200 replicates: sample variance of y - X beta
        # is sigma^2 (1 + tau^2) within 15 percent
        sigma2, tau2 = 1.4, 0.3
        cov = CovarianceParameters("exponential_isotropic", [sigma2, 0.3, tau2])
        draws = np.array(
            [
                oracle.simulate_gp(cov, [1.0], [[0.0, 0.0]], [[1.0]], seed=s)[0]
                for s in range(200)
            ]
        )
        target = sigma2 * (1 + tau2)
        assert abs(np.var(draws - 1.0) - target) / target < 0.15

    def test_size_guard(self):
        with pytest.raises(SizeGuardExceeded):
            oracle.simulate_gp(
                CovarianceParameters("exponential_isotropic", [1.0, 1.0, 0.0]),
                [0.0],
                np.zeros((5001, 1)),
                np.ones((5001, 1)),
                seed=0,
            )

    def test_nn_simulator_matches_dense_at_full_conditioning(self):
        # with every predecessor in the conditioning set the sequential
        # sampler factorizes the exact joint, so for matched noise draws
        # the two simulators agree up to roundoff
        rng = np.random.default_rng(2)
        n = 25
        locs = rng.uniform(0, 1, (n, 2))
        X = np.ones((n, 1))
        cov = CovarianceParameters("exponential_isotropic", [1.3, 0.4, 0.2])
        nn = find_ordered_neighbors(locs, n - 1)
        y_nn = oracle.simulate_nn_gp(cov, [0.7], locs, X, nn, seed=5)
        y_dense = oracle.simulate_gp(cov, [0.7], locs, X, seed=5)
        np.testing.assert_allclose(y_nn, y_dense, rtol=1e-8, atol=1e-10)
