import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsfic.exceptions import PreconditionError
from tsfic.spectral import (ARMAFamily, autocovariance, autocovariances, composite_gauss_legendre,
                            default_quadrature, make_arma_family, toeplitz_weight_matrix,
                            white_noise_density)

ORDERS = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2)]


def random_theta(fam, rng):
    x = np.concatenate([rng.uniform(-1.1, 1.1, fam.p - 1), [rng.uniform(-0.7, 0.7)]])
    return fam.from_unconstrained(x)


class TestQuadrature:
    def test_weights_sum_to_pi(self):
        for n in (1, 50, 200, 1000):
            q = default_quadrature(n)
            assert abs(q.weights.sum() - np.pi) / np.pi < 1e-12
            assert np.all(q.weights > 0)
            assert np.all(np.diff(q.nodes) > 0)
            assert q.nodes[0] > 0 and q.nodes[-1] <= np.pi

    def test_node_count_rule(self):
        assert default_quadrature(1).size == 512
        assert default_quadrature(128).size == 512
        assert default_quadrature(300).size == 1200
        assert default_quadrature(10, nodes=777).size == 777

    def test_cosine_and_square(self, q512):
        assert abs(q512.integrate(np.cos(q512.nodes))) < 1e-12
        assert abs(q512.integrate(q512.nodes ** 2) - np.pi ** 3 / 3) / (np.pi ** 3 / 3) < 1e-10

    def test_deterministic(self):
        a, b = default_quadrature(77), default_quadrature(77)
        assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.weights, b.weights)

    def test_breakpoints_integrate_indicator_exactly(self):
        a, b = 0.4, 2.1
        q = default_quadrature(100, breakpoints=[a, -b])
        vals = ((q.nodes >= a) & (q.nodes < b)).astype(float)
        assert abs(q.integrate(vals) - (b - a)) < 1e-12

    def test_exact_node_count_with_breakpoints(self):
        q = composite_gauss_legendre(0.0, np.pi, 1000, breakpoints=[0.3, 1.0, 3.0])
        assert q.size == 1000

    def test_sub_rule(self, q512):
        s = q512.sub_rule(0.2, 1.5)
        assert abs(s.integrate(np.ones(s.size)) - 1.3) < 1e-12
        assert q512.sub_rule(1.0, 1.0).size == 0


class TestFamily:
    def test_parameter_count_and_labels(self):
        assert make_arma_family(0, 0).p == 1
        assert make_arma_family(2, 1).p == 4
        assert make_arma_family(2, 0).label == "AR(2)"
        assert make_arma_family(0, 1).label == "MA(1)"
        assert make_arma_family(1, 1).label == "ARMA(1,1)"

    def test_white_noise_flat(self):
        f = white_noise_density(1.0)
        w = np.linspace(-np.pi, np.pi, 11)
        assert np.allclose(f(w), 1 / (2 * np.pi), rtol=0, atol=1e-15)

    def test_closed_forms(self):
        ar1 = make_arma_family(1, 0)
        ma1 = make_arma_family(0, 1)
        assert abs(ar1.density([0.5, 1.0], 0.0) - 2 / np.pi) < 1e-14
        assert abs(ma1.density([0.4, 1.0], np.pi) - 0.36 / (2 * np.pi)) < 1e-14
        assert abs(ma1.density([0.4, 1.0], np.pi) - 0.05730) < 1e-5

    @pytest.mark.parametrize("orders", ORDERS)
    def test_symmetric_positive(self, orders):
        fam = make_arma_family(*orders)
        rng = np.random.default_rng(1)
        w = rng.uniform(-np.pi, np.pi, 50)
        for _ in range(10):
            th = random_theta(fam, rng)
            f = fam.density(th, w)
            assert np.all(f > 0)
            assert np.allclose(fam.density(th, -w), f, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("orders", ORDERS)
    def test_gradients_match_finite_differences(self, orders):
        fam = make_arma_family(*orders)
        rng = np.random.default_rng(sum(orders) + 7)
        for _ in range(50):
            th = random_theta(fam, rng)
            w = rng.uniform(-np.pi, np.pi, 20)
            f, gl, hl = fam.derivatives(th, w)
            gd = fam.grad_density(th, w)
            assert np.allclose(gl * f[:, None], gd, rtol=1e-10, atol=0)
            for j in range(fam.p):
                h = 1e-6 * max(1.0, abs(th[j]))
                up, dn = th.copy(), th.copy()
                up[j] += h
                dn[j] -= h
                fd = (fam.density(up, w) - fam.density(dn, w)) / (2 * h)
                scale = np.maximum(np.abs(gd[:, j]), 1e-3 * f)
                assert np.max(np.abs(fd - gd[:, j]) / scale) < 1e-6
                fdg = (fam.grad_log(up, w) - fam.grad_log(dn, w)) / (2 * h)
                hscale = np.maximum(np.abs(hl[:, :, j]), 1e-2)
                assert np.max(np.abs(fdg - hl[:, :, j]) / hscale) < 1e-5

    @pytest.mark.parametrize("orders", ORDERS)
    def test_round_trip(self, orders):
        fam = make_arma_family(*orders)
        rng = np.random.default_rng(11)
        for _ in range(100):
            th = random_theta(fam, rng)
            back = fam.from_unconstrained(fam.to_unconstrained(th))
            assert np.allclose(back, th, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("orders", [(2, 0), (0, 2), (2, 1)])
    def test_jacobian(self, orders):
        fam = make_arma_family(*orders)
        x = np.random.default_rng(3).uniform(-1, 1, fam.p)
        jac = fam.jacobian_unconstrained(x)
        h = 1e-6
        fd = np.column_stack([(fam.from_unconstrained(x + h * e) - fam.from_unconstrained(x - h * e)) / (2 * h)
                              for e in np.eye(fam.p)])
        assert np.allclose(jac, fd, atol=1e-8)

    def test_constraints(self):
        ar1 = make_arma_family(1, 0)
        assert not ar1.is_admissible([1.2, 1.0])
        assert not ar1.is_admissible([0.2, -1.0])
        with pytest.raises(PreconditionError):
            ar1.to_unconstrained([1.0, 1.0])
        with pytest.raises(PreconditionError):
            ar1.split([0.1])


class TestAutocovariance:
    def test_white_noise(self, q512):
        f = white_noise_density(1.0)
        assert abs(autocovariance(f, 0, q512) - 1) < 1e-12
        assert np.all(np.abs(autocovariances(f, 10, q512)[1:]) < 1e-10)

    def test_ar1(self, q512):
        f = make_arma_family(1, 0).spectral_density([0.5, 1.0])
        assert abs(autocovariance(f, 1, q512) - 2 / 3) < 1e-10

    def test_ma1(self, q512):
        f = make_arma_family(0, 1).spectral_density([0.4, 1.0])
        c = autocovariances(f, 3, q512)
        assert np.allclose(c, [1.16, 0.4, 0, 0], atol=1e-10)

    def test_against_statsmodels(self, q512):
        from statsmodels.tsa.arima_process import arma_acovf
        f = make_arma_family(2, 1).spectral_density([0.5, -0.3, 0.4, 1.3])
        ref = arma_acovf([1, -0.5, 0.3], [1, 0.4], nobs=8, sigma2=1.69)
        assert np.allclose(autocovariances(f, 7, q512), ref, atol=1e-10)

    def test_negative_lag(self, q512):
        with pytest.raises(PreconditionError):
            autocovariance(white_noise_density(), -1, q512)

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(ORDERS), st.integers(0, 10_000))
    def test_toeplitz_psd(self, orders, seed):
        fam = make_arma_family(*orders)
        th = random_theta(fam, np.random.default_rng(seed))
        c = autocovariances(fam.spectral_density(th), 5, default_quadrature(1))
        from scipy.linalg import toeplitz
        assert np.linalg.eigvalsh(toeplitz(c)).min() >= -1e-8


class TestToeplitzWeights:
    def test_identity_for_constant(self, q512):
        T = toeplitz_weight_matrix(lambda w: np.ones_like(w), 6, q512)
        assert np.allclose(T, np.eye(6), atol=1e-10)

    @pytest.mark.parametrize("k", range(0, 7))
    def test_cosine_band(self, q512, k):
        n = 7
        T = toeplitz_weight_matrix(lambda w: np.cos(k * w), n, q512)
        lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        expect = np.where(lag == k, 1.0 if k == 0 else 0.5, 0.0)
        assert np.allclose(T, expect, atol=1e-10)

    def test_single_entry(self, q512):
        h = lambda w: np.exp(-w ** 2)
        T = toeplitz_weight_matrix(h, 1, q512)
        assert abs(T[0, 0] - 2 * q512.integrate(h(q512.nodes)) / (2 * np.pi)) < 1e-14

    def test_only_even_part_matters(self, q512):
        odd = lambda w: np.cos(2 * w) + np.sin(3 * w)
        even = lambda w: np.cos(2 * w)
        assert np.allclose(toeplitz_weight_matrix(odd, 5, q512), toeplitz_weight_matrix(even, 5, q512))


def test_family_is_hashable_value():
    assert ARMAFamily(1, 0) == make_arma_family(1, 0)
