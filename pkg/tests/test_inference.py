import math

import numpy as np
import pytest

from conftest import make_instance

from vecchiagp import (
    CovarianceParameters,
    Dataset,
    ModelSpec,
    engine,
    find_ordered_neighbors,
    oracle,
)
from vecchiagp.errors import DegenerateInformation, SingularDesign
from vecchiagp.inference import (
    assemble,
    default_start,
    evaluate,
    fisher_step,
    fit,
    to_log_scale,
)

LOG_2PI = math.log(2 * math.pi)


class TestAssemble:
    def test_single_observation_closed_form(self):
        sigma2, tau2 = 1.3, 0.2
        v = sigma2 * (1 + tau2)
        ds = Dataset(y=[0.7], X=[[1.0]], locs=[[0.0]])
        nn = find_ordered_neighbors(ds.locs, 1)
        cov = CovarianceParameters("exponential_isotropic", [sigma2, 1.0, tau2])
        ev = assemble(engine.run(ds, nn, cov, backend="sequential"), 1)
        assert ev.beta_hat[0] == pytest.approx(0.7, rel=1e-14)
        assert ev.loglik == pytest.approx(-0.5 * (LOG_2PI + math.log(v)), rel=1e-14)

    def test_matches_dense_oracle_at_full_conditioning(self, core):
        ds, cov = make_instance(seed=40, n=60, d=2, p=3)
        nn = find_ordered_neighbors(ds.locs, 59)
        ev = assemble(engine.run(ds, nn, cov, backend="task", core=core), ds.n)
        dense = oracle.dense_loglik_profiled(cov, ds)
        assert ev.loglik == pytest.approx(dense.loglik, rel=1e-8)
        np.testing.assert_allclose(ev.beta_hat, dense.beta_hat, rtol=1e-8)

    def test_gradient_matches_finite_differences(self, core):
        ds, cov = make_instance(seed=41, n=80, d=2, p=2)
        nn = find_ordered_neighbors(ds.locs, 7)
        ev = evaluate(ds, nn, cov, backend="sequential", core=core)

        def ll(th):
            return evaluate(
                ds, nn, CovarianceParameters(cov.family, th), backend="sequential", core=core
            ).loglik

        fd = oracle.fd_gradient(ll, cov.theta)
        np.testing.assert_allclose(ev.grad, fd, rtol=1e-5, atol=1e-7)

    def test_backend_invariance(self, core):
        ds, cov = make_instance(seed=42, n=50)
        nn = find_ordered_neighbors(ds.locs, 6)
        outs = [
            assemble(engine.run(ds, nn, cov, backend=b, deterministic=True, core=core), ds.n)
            for b in ("sequential", "task", "nested", "staged")
        ]
        assert len({o.loglik for o in outs}) == 1
        for o in outs[1:]:
            np.testing.assert_array_equal(o.grad, outs[0].grad)

    def test_singular_design_detected(self):
        rng = np.random.default_rng(0)
        n = 20
        x = rng.normal(size=n)
        X = np.column_stack([x, x])  # exactly collinear
        ds = Dataset(y=rng.normal(size=n), X=X, locs=rng.uniform(0, 1, (n, 2)))
        nn = find_ordered_neighbors(ds.locs, 4)
        cov = CovarianceParameters("exponential_isotropic", [1.0, 0.3, 0.1])
        with pytest.raises(SingularDesign):
            assemble(engine.run(ds, nn, cov, backend="sequential"), n)


class TestFisherStep:
    def test_zero_gradient_is_fixed_point(self):
        gamma = np.log([1.0, 2.0, 3.0])
        out = fisher_step(gamma, np.zeros(3), np.eye(3))
        np.testing.assert_array_equal(out, gamma)

    def test_identity_information_steps_by_gradient(self):
        gamma = np.zeros(2)
        g = np.array([0.3, -0.2])
        np.testing.assert_allclose(fisher_step(gamma, g, np.eye(2)), g, rtol=1e-14)

    def test_diagonal_solve(self):
        out = fisher_step(np.zeros(2), np.array([2.0, 4.0]), np.diag([2.0, 4.0]))
        np.testing.assert_allclose(out, [1.0, 1.0], rtol=1e-14)

    def test_damping_rescues_indefinite_information(self):
        info = np.diag([1.0, -0.5])
        out = fisher_step(np.zeros(2), np.array([1.0, 0.0]), info)
        assert np.all(np.isfinite(out))

    def test_degenerate_information_raises(self):
        info = -np.eye(2) * 1e6
        with pytest.raises(DegenerateInformation):
            fisher_step(np.zeros(2), np.array([0.0, 1.0]), info)

    def test_log_scale_transform(self):
        theta = np.array([2.0, 0.5])
        grad = np.array([1.0, -2.0])
        info = np.array([[4.0, 1.0], [1.0, 3.0]])
        g, i = to_log_scale(theta, grad, info)
        np.testing.assert_allclose(g, [2.0, -1.0])
        np.testing.assert_allclose(i, info * np.outer(theta, theta))


@pytest.fixture(scope="module")
def fitted():
    ds, cov = make_instance(seed=50, n=500, d=2, p=1, theta=np.array([2.0, 0.2, 0.1]))
    nn = find_ordered_neighbors(ds.locs, 10)
    start = default_start(ds, "exponential_isotropic")
    spec = ModelSpec(covariance=start, m=10, backend="task")
    return ds, nn, fit(ds, nn, spec)


class TestFit:
    def test_converges_within_cap(self, fitted):
        _, _, res = fitted
        assert res.converged
        assert 1 <= res.iterations <= 40

    def test_trace_monotone(self, fitted):
        _, _, res = fitted
        trace = res.loglik_trace
        assert all(b >= a for a, b in zip(trace, trace[1:]))

    def test_recovers_parameters(self, fitted):
        _, _, res = fitted
        theta_star = np.array([2.0, 0.2, 0.1])
        info_log = res.fisher_info * np.outer(res.theta_hat.theta, res.theta_hat.theta)
        se = np.sqrt(np.diag(np.linalg.inv(info_log)))
        err = np.abs(np.log(res.theta_hat.theta) - np.log(theta_star))
        assert np.all(err <= 3.5 * se)

    def test_restart_at_optimum_converges_immediately(self, fitted):
        ds, nn, res = fitted
        spec = ModelSpec(covariance=res.theta_hat, m=10, backend="task")
        again = fit(ds, nn, spec)
        assert again.iterations == 1
        assert again.converged
        assert len(again.loglik_trace) == 1

    def test_phase_timings_recorded(self, fitted):
        _, _, res = fitted
        assert res.phase_timings["fit_ms"] > 0
        assert res.phase_timings["evaluate_ms"] > 0

    def test_beta_cov_is_xsx_inverse(self, fitted):
        ds, nn, res = fitted
        parts = engine.run(ds, nn, res.theta_hat, backend="task")
        np.testing.assert_allclose(res.beta_cov, np.linalg.inv(parts.xsx), rtol=1e-8)


def test_default_start_is_scale_aware():
    ds, _ = make_instance(seed=51, n=100, d=2)
    start = default_start(ds, "exponential_isotropic")
    assert start.theta[0] > 0
    diag = np.sqrt(((ds.locs.max(axis=0) - ds.locs.min(axis=0)) ** 2).sum())
    assert start.theta[1] == pytest.approx(0.25 * diag)
    assert start.theta[2] == 0.1
    aniso = default_start(ds, "exponential_anisotropic")
    assert aniso.theta.shape[0] == 4
