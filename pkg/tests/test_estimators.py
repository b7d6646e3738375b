import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablehf import estimators as es
from stablehf import fisher
from stablehf import likelihood as lk
from stablehf import stable_dist as sd
from stablehf.errors import DomainError, EstimationError
from stablehf.norming import rate_beta_oriented, rate_sigma_oriented

THETA = lk.Theta(1.6, 1.2, 0.0)


def make_data(theta, n, h, seed):
    eps = sd.sample_standard(theta.beta, n, seed=seed)
    return lk.IncrementSeries.from_deltas(theta.mu * h + theta.sigma * h ** (1 / theta.beta) * eps, h)


class TestMedianDrift:
    def test_small_example(self):
        assert es.median_drift(lk.IncrementSeries.from_deltas([1, 5, 3], 1.0)) == 3.0

    def test_constant(self):
        data = lk.IncrementSeries.from_deltas(np.full(9, 0.25), 0.125)
        assert es.median_drift(data) == 2.0

    def test_even_drops_last(self):
        diag = {}
        data = lk.IncrementSeries.from_deltas([1.0, 2.0, 3.0, 100.0], 1.0)
        assert es.median_drift(data, diag) == 2.0
        assert diag["dropped_last_increment"]


class TestEmpiricalMoments:
    def test_log_two_terms(self):
        # the median term (0) is excluded, leaving |x| = e twice
        data = lk.IncrementSeries.from_deltas([-math.e, 0.0, math.e], 1.0)
        np.testing.assert_allclose(es.empirical_g_moments(data, 0.0, 1.3, es.MomentSpec.log()), [1.0, 1.0])

    def test_power_half(self):
        data = lk.IncrementSeries.from_deltas([-1.0, 0.0, 4.0], 1.0)
        np.testing.assert_allclose(es.empirical_g_moments(data, 0.0, 1.3, es.MomentSpec.power(0.25)),
                                   [(1 + 4**0.25) / 2, (1 + 2) / 2])
        spec = es.MomentSpec(es.MomentKind.POWER, 0.3)
        got = es.empirical_g_moments(data, 0.0, 1.3, spec)
        np.testing.assert_allclose(got, [(1 + 4**0.3) / 2, (1 + 4**0.6) / 2])

    def test_scaling_invariance(self):
        raw = sd.sample_standard(1.4, 101, seed=1)
        h = 1 / 101
        data = lk.IncrementSeries.from_deltas(raw * h ** (1 / 1.4), h)
        k = np.argsort(raw, kind="stable")[50]
        expected = np.log(np.abs(np.delete(raw, k) - np.median(raw)))
        got = es.empirical_g_moments(data, np.median(data.deltas) / h, 1.4, es.MomentSpec.log())
        np.testing.assert_allclose(got, [expected.mean(), (expected**2).mean()], rtol=1e-12)

    def test_ties_excluded_and_counted(self):
        diag = {}
        data = lk.IncrementSeries.from_deltas([0.0, 0.0, 0.0, 1.0, -2.0], 1.0)
        got = es.empirical_g_moments(data, 0.0, 1.0, es.MomentSpec.log(), diag)
        assert diag["zero_terms_excluded"] == 2
        np.testing.assert_allclose(got[0], math.log(2) / 2)

    def test_power_spec_validation(self):
        with pytest.raises(DomainError):
            es.MomentSpec.power(0.0)
        with pytest.raises(DomainError):
            es.MomentSpec.power(0.4)
        assert es.MomentSpec.power(0.1).beta_range == pytest.approx((0.601, 1.999))


class TestMomentMap:
    def test_cauchy_log(self):
        np.testing.assert_allclose(es.moment_map(1.0, 1.0, es.MomentSpec.log()), [0.0, math.pi**2 / 4], atol=1e-15)

    def test_power_against_quadrature(self):
        # C(1, 0.1) and C(1, 0.2) by quadrature of |y|**q against the Cauchy density
        np.testing.assert_allclose(
            es.moment_map(1.0, 1.0, es.MomentSpec.power(0.1)), [1.0124651257880166, 1.0514622242382956], rtol=1e-10
        )

    def test_log_determinant(self):
        for beta in (0.5, 1.0, 1.6, 1.9):
            for sigma in (0.5, 2.0):
                J = _numeric_gamma0(beta, sigma, es.MomentSpec.log())
                assert np.linalg.det(J) == pytest.approx(-(math.pi**2) / (3 * beta**3), rel=1e-7)
                assert es.moment_jacobian_det(beta, sigma, es.MomentSpec.log()) == pytest.approx(np.linalg.det(J), rel=1e-7)

    def test_power_determinant(self):
        spec = es.MomentSpec.power(0.1)
        for beta in np.linspace(0.7, 1.95, 8):
            J = _numeric_gamma0(beta, 1.3, spec)
            det = es.moment_jacobian_det(beta, 1.3, spec)
            assert det == pytest.approx(np.linalg.det(J), rel=1e-6)
            assert det != 0.0


def _numeric_gamma0(beta, sigma, spec, step=1e-6):
    # columns: d/dbeta G0 and -sigma d/dsigma G0, by central differences
    db = (es.moment_map(beta + step, sigma, spec) - es.moment_map(beta - step, sigma, spec)) / (2 * step)
    ds = (es.moment_map(beta, sigma + step, spec) - es.moment_map(beta, sigma - step, spec)) / (2 * step)
    return np.column_stack([db, -sigma * ds])


class TestSolvers:
    @pytest.mark.parametrize("beta,sigma", [(1.6, 1.2), (1.0, 1.0), (0.8, 0.3), (1.9, 5.0)])
    def test_log_fixed_point(self, beta, sigma):
        h = 1 / 512
        L = -math.log(h)
        g1, g2 = es.moment_map(beta, sigma, es.MomentSpec.log())
        # raw moments of the unscaled increments: shift log by -L/beta
        r1 = g1 - L / beta
        r2 = g2 - 2 * g1 * L / beta + (L / beta) ** 2
        fit = es.log_moments_to_params(r1, r2, L)
        assert fit.beta == pytest.approx(beta, abs=1e-10)
        assert fit.sigma == pytest.approx(sigma, rel=1e-10)
        assert not fit.boundary

    @pytest.mark.parametrize("beta,sigma,q", [(1.6, 1.2, 0.1), (1.0, 1.0, 0.1), (1.9, 0.4, 0.05), (0.9, 2.0, 0.12)])
    def test_power_fixed_point(self, beta, sigma, q):
        h = 1 / 1000
        g1, g2 = es.moment_map(beta, sigma, es.MomentSpec.power(q))
        fit = es.power_moments_to_params(h ** (q / beta) * g1, h ** (2 * q / beta) * g2, q, -math.log(h))
        assert fit.beta == pytest.approx(beta, abs=1e-8)
        assert fit.sigma == pytest.approx(sigma, rel=1e-8)
        assert fit.diagnostics["sign_changes"] == 1

    def test_log_boundary(self):
        fit = es.log_moments_to_params(0.0, 0.5, 5.0)  # variance below the beta < 2 range
        assert fit.boundary and fit.beta == 1.95
        fit = es.log_moments_to_params(0.0, 1e4, 5.0)
        assert fit.boundary and fit.beta == 0.05

    def test_power_boundary(self):
        fit = es.power_moments_to_params(1.0, 1.0, 0.1, 5.0)
        assert fit.boundary and fit.beta == pytest.approx(1.999)

    def test_degenerate_data(self):
        data = lk.IncrementSeries.from_deltas(np.full(11, 0.3), 1 / 11)
        with pytest.raises(EstimationError):
            es.solve_moments_log(data, es.median_drift(data))

    def test_log_consistency(self):
        n = 4097
        rows = []
        for r in range(100):
            data = make_data(THETA, n, 1 / n, seed=1000 + r)
            b, s = es.solve_moments_log(data, es.median_drift(data))
            rows.append(math.sqrt(n) * (b - 1.6))
        q75, q25 = np.percentile(rows, [75, 25])
        assert q75 - q25 < 20
        assert abs(np.median(rows)) < 3


class TestEquivariance:
    def test_scale(self):
        data = make_data(THETA, 513, 1 / 513, seed=3)
        base = es.moment_estimate(data, es.MomentSpec.power(0.1)).theta_hat
        for a in (0.5, 3.0, 2.0**-7):
            scaled = lk.IncrementSeries.from_deltas(a * data.deltas, data.h)
            t = es.moment_estimate(scaled, es.MomentSpec.power(0.1)).theta_hat
            assert t.beta == pytest.approx(base.beta, abs=1e-12)
            assert t.sigma == pytest.approx(a * base.sigma, rel=1e-12)
            assert t.mu == pytest.approx(a * base.mu, rel=1e-12)

    def test_scale_by_power_of_two_is_exact(self):
        data = make_data(THETA, 513, 1 / 513, seed=3)
        base = es.moment_estimate(data, es.MomentSpec.power(0.1)).theta_hat
        t = es.moment_estimate(lk.IncrementSeries.from_deltas(4.0 * data.deltas, data.h), es.MomentSpec.power(0.1)).theta_hat
        assert t.beta == base.beta

    def test_shift(self):
        data = make_data(THETA, 513, 1 / 513, seed=4)
        b = 2.5
        shifted = lk.IncrementSeries.from_deltas(data.deltas + data.h * b, data.h)
        mu0, mu1 = es.median_drift(data), es.median_drift(shifted)
        assert mu1 == pytest.approx(mu0 + b, rel=1e-12)
        for spec in (es.MomentSpec.log(), es.MomentSpec.power(0.1)):
            m0 = es.empirical_g_moments(data, mu0, 1.6, spec)
            m1 = es.empirical_g_moments(shifted, mu1, 1.6, spec)
            np.testing.assert_allclose(m1, m0, rtol=1e-12)
        f0 = es.solve_moments_log(data, mu0)
        f1 = es.solve_moments_log(shifted, mu0 + b)
        assert f1.beta == pytest.approx(f0.beta, rel=1e-12)


class TestAdaptive:
    def test_split_sizes(self):
        assert es.default_split(2**10) / 2**10 > es.default_split(2**14) / 2**14
        data = make_data(THETA, 2000, 1 / 2000, seed=5)
        rep = es.adaptive_q_estimate(data)
        assert rep.diagnostics["m"] == math.ceil(2000**0.6)
        assert rep.diagnostics["q_hat"] == pytest.approx(0.8 * rep.diagnostics["pilot_beta"] / 6)

    def test_uses_only_later_increments(self):
        data = make_data(THETA, 2000, 1 / 2000, seed=6)
        m = es.default_split(2000)
        rep = es.adaptive_q_estimate(data)
        d = data.deltas.copy()
        d[m:] = make_data(THETA, 2000, 1 / 2000, seed=7).deltas[m:]
        other = es.adaptive_q_estimate(lk.IncrementSeries.from_deltas(d, data.h))
        assert other.diagnostics["q_hat"] == rep.diagnostics["q_hat"]
        assert other.theta_hat != rep.theta_hat
        d2 = data.deltas.copy()
        d2[:m] = 0.5 * d2[:m]
        third = es.adaptive_q_estimate(lk.IncrementSeries.from_deltas(d2, data.h), eps=0.2)
        # the pilot beta is scale free
        assert third.diagnostics["q_hat"] == pytest.approx(rep.diagnostics["q_hat"], rel=1e-12)
        np.testing.assert_allclose(third.theta_hat.as_array(), rep.theta_hat.as_array(), rtol=1e-10)

    def test_deterministic(self):
        a = es.adaptive_q_estimate(make_data(THETA, 1500, 1 / 1500, seed=8))
        b = es.adaptive_q_estimate(make_data(THETA, 1500, 1 / 1500, seed=8))
        assert a.theta_hat == b.theta_hat

    def test_bad_split(self):
        with pytest.raises(EstimationError):
            es.adaptive_q_estimate(make_data(THETA, 10, 0.1, seed=1), m=9)


class TestOneStep:
    def test_zero_score_gives_zero_step(self, monkeypatch):
        data = make_data(THETA, 64, 1 / 64, seed=2)
        monkeypatch.setattr(es, "score", lambda d, t: np.zeros(3))
        rep = es.one_step_mle(data, THETA)
        assert rep.theta_hat == THETA
        np.testing.assert_array_equal(rep.diagnostics["step"], 0.0)

    def test_step_formula(self):
        data = make_data(THETA, 256, 1 / 256, seed=2)
        theta0 = lk.Theta(1.5, 1.3, 0.1)
        rep = es.one_step_mle(data, theta0, rate_sigma_oriented)
        nm = rate_sigma_oriented(theta0, data.scheme)
        inv = np.linalg.inv(nm.matrix)
        info = fisher.asymptotic_info(theta0, nm.limits).matrix
        expected = np.linalg.solve(inv.T @ info @ inv, lk.score(data, theta0))
        np.testing.assert_allclose(rep.theta_hat.as_array() - theta0.as_array(), expected, rtol=1e-9)
        np.testing.assert_allclose(rep.diagnostics["normalized_step"], inv @ expected, rtol=1e-9)


class TestMLE:
    def test_converges_from_truth(self):
        data = make_data(THETA, 4096, 1 / 4096, seed=21)
        rep = es.mle(data, THETA)
        assert rep.converged
        assert rep.iterations <= 12
        assert rep.diagnostics["loglik"] >= rep.diagnostics["loglik_initial"]
        g = lk.score(data, rep.theta_hat)
        nm = rate_beta_oriented(rep.theta_hat, data.scheme)
        assert np.linalg.norm(nm.matrix.T @ g) < 1e-6

    def test_stationary_point(self):
        data = make_data(THETA, 1024, 1 / 1024, seed=22)
        rep = es.mle(data, es.moment_estimate(data, es.MomentSpec.power(0.1)).theta_hat)
        assert rep.converged
        assert rep.diagnostics["score_norm"] < 1e-8 * rep.diagnostics["initial_score_norm"] + 1e-6 * math.sqrt(1024)
        # local maximum: nudging any coordinate lowers the likelihood
        x = rep.theta_hat.as_array()
        for i in range(3):
            for sgn in (-1, 1):
                e = np.zeros(3)
                e[i] = sgn * 1e-4 * max(1.0, abs(x[i]))
                assert lk.loglik(data, lk.Theta.from_array(x + e)) < rep.diagnostics["loglik"]

    def test_max_iter_flag(self):
        data = make_data(THETA, 1024, 1 / 1024, seed=23)
        rep = es.mle(data, lk.Theta(1.3, 1.0, 0.0), max_iter=1)
        assert not rep.converged
        assert rep.iterations == 1


class TestNormalizedErrors:
    def test_scaling(self):
        n, h = 512, 1 / 512
        hat = lk.Theta(1.7, 1.5, 0.2)
        e = es.normalized_errors(hat, THETA, n, h)
        L = math.log(512)
        np.testing.assert_allclose(
            e, [math.sqrt(n) * 0.1, math.sqrt(n) * 0.3 / (1.2 * L / 1.6**2), math.sqrt(n) * h ** (1 - 1 / 1.6) * 0.2]
        )


@settings(max_examples=30, deadline=None)
@given(beta=st.floats(0.7, 1.9), sigma=st.floats(0.1, 10.0), q=st.floats(0.02, 0.11))
def test_power_fixed_point_property(beta, sigma, q):
    h = 1 / 256
    g1, g2 = es.moment_map(beta, sigma, es.MomentSpec.power(q))
    fit = es.power_moments_to_params(h ** (q / beta) * g1, h ** (2 * q / beta) * g2, q, -math.log(h))
    assert fit.beta == pytest.approx(beta, abs=1e-8)
    assert fit.sigma == pytest.approx(sigma, rel=1e-7)


def test_init_beyond_density_range_is_projected():
    data = make_data(THETA, 256, 1 / 256, seed=30)
    rep = es.one_step_mle(data, lk.Theta(1.98, 1.2, 0.0))
    assert rep.diagnostics["init_beta_projected"] == 1.98
    ref = es.one_step_mle(data, lk.Theta(sd.BETA_MAX, 1.2, 0.0))
    assert rep.theta_hat == ref.theta_hat
