import math
import warnings

import mpmath
import numpy as np
import pytest
from scipy import integrate

from gaussi import GaussianState
from gaussi.metrics import (DpParameters, LeakageReport, density_curve,
                            gaussian_mechanism_variance, interval_probability,
                            kl_divergence_nats, kl_divergence_paper, mutual_information)


def pair(cov, mean=(0.0, 0.0)):
    return GaussianState.from_moments(["A", "B"], mean, cov)


# -- KL -------------------------------------------------------------------

@pytest.mark.parametrize("m,v", [(0, 1), (483000, 90), (-3.5, 1e-6), (1e6, 1e8)])
def test_kl_identical_is_zero(m, v):
    assert kl_divergence_paper(m, v, m, v) == 0
    assert kl_divergence_nats(m, v, m, v) == 0


def test_kl_unit_shift():
    assert kl_divergence_paper(0, 1, 1, 1) == 0.5
    assert kl_divergence_nats(0, 1, 1, 1) == 0.5


def test_kl_paper_extended_precision():
    mpmath.mp.dps = 50
    mp, vp, mq, vq = map(mpmath.mpf, (483000, 90, 480000, 100))
    ref = mpmath.log(mpmath.sqrt(vq) / mpmath.sqrt(vp), 2) + (vp + (mp - mq) ** 2) / (2 * vq) - mpmath.mpf(1) / 2
    got = kl_divergence_paper(483000, 90, 480000, 100)
    assert abs(got - float(ref)) <= 1e-12 * max(1.0, abs(float(ref)))


def test_kl_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        kl_divergence_paper(0, 0, 0, 1)
    with pytest.raises(ValueError):
        kl_divergence_nats(0, 1, 0, -1)


def kl_quadrature(mp, vp, mq, vq):
    sp = math.sqrt(vp)

    def f(x):
        lp = -0.5 * (x - mp) ** 2 / vp - 0.5 * math.log(2 * math.pi * vp)
        lq = -0.5 * (x - mq) ** 2 / vq - 0.5 * math.log(2 * math.pi * vq)
        return math.exp(lp) * (lp - lq)

    val, _ = integrate.quad(f, mp - 40 * sp, mp + 40 * sp, epsabs=1e-12, epsrel=1e-12, limit=500,
                            points=[mp])
    return val


def test_kl_nats_matches_quadrature():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        mp, mq = rng.uniform(-5, 5, size=2)
        vp, vq = rng.uniform(0.1, 5, size=2)
        got = kl_divergence_nats(mp, vp, mq, vq)
        assert got >= 0
        assert abs(got - kl_quadrature(mp, vp, mq, vq)) <= 1e-6


# -- mutual information ---------------------------------------------------

def test_mi_independent_exactly_zero():
    assert mutual_information(pair([[2, 0], [0, 5]]), "A", "B") == 0.0
    s = GaussianState.empty().extend_independent("A", 1, 1).extend_independent("B", 2, 3)
    assert mutual_information(s, "A", "B") == 0.0


def test_mi_hand_value():
    assert mutual_information(pair([[1, 1], [1, 2]]), "A", "B") == pytest.approx(0.5, abs=1e-15)


def test_mi_symmetric_and_nonnegative():
    rng = np.random.default_rng(8)
    for _ in range(50):
        L = rng.normal(size=(2, 2))
        s = pair(L @ L.T + 1e-3 * np.eye(2))
        a, b = mutual_information(s, "A", "B"), mutual_information(s, "B", "A")
        assert a == b and a >= 0


def test_mi_perfect_correlation_is_infinite_with_warning():
    s = GaussianState.empty().extend_independent("A", 0, 1).extend_shift_scale("B", "A", "*", 2)
    with pytest.warns(RuntimeWarning, match="perfectly correlated"):
        assert mutual_information(s, "A", "B") == math.inf


def test_mi_same_variable_rejected():
    with pytest.raises(ValueError):
        mutual_information(pair([[1, 0], [0, 1]]), "A", "A")


def binned_mi(x, y, bins=80):
    h, _, _ = np.histogram2d(x, y, bins=bins)
    p = h / h.sum()
    px, py = p.sum(1, keepdims=True), p.sum(0, keepdims=True)
    nz = p > 0
    return float((p[nz] * np.log2(p[nz] / (px @ py)[nz])).sum())


@pytest.mark.parametrize("rho", [0.3, 0.6, 0.9])
def test_mi_matches_monte_carlo(rho):
    cov = np.array([[2.0, rho * math.sqrt(6)], [rho * math.sqrt(6), 3.0]])
    rng = np.random.default_rng(int(rho * 100))
    x = rng.multivariate_normal([1, -2], cov, size=1_000_000)
    assert abs(mutual_information(pair(cov, (1, -2)), "A", "B") - binned_mi(x[:, 0], x[:, 1])) < 0.02


def test_leakage_report_rejects_negative_mi():
    with pytest.raises(ValueError):
        LeakageReport("x", 0.0, 0.0, -1e-6)
    LeakageReport("x", 0.0, 0.0, -1e-13)


# -- Gaussian mechanism ---------------------------------------------------

def test_dp_variance_listing_value():
    v = gaussian_mechanism_variance(DpParameters(epsilon=0.9, delta=0.01, sensitivity=11000))
    assert abs(v - 1442533240) <= 1


def test_dp_zero_sensitivity():
    assert gaussian_mechanism_variance(DpParameters(0.5, 0.1, 0.0)) == 0


@pytest.mark.parametrize("kw", [dict(epsilon=0, delta=0.1, sensitivity=1),
                                dict(epsilon=1, delta=1.25, sensitivity=1),
                                dict(epsilon=1, delta=0, sensitivity=1),
                                dict(epsilon=1, delta=0.1, sensitivity=-1),
                                dict(epsilon=math.inf, delta=0.1, sensitivity=1)])
def test_dp_parameter_ranges(kw):
    with pytest.raises(ValueError):
        DpParameters(**kw)


def test_dp_monotonicity_sweep():
    eps = np.linspace(0.05, 5, 40)
    deltas = np.linspace(1e-6, 0.99, 40)
    sens = np.linspace(0.1, 1e5, 40)
    v = [gaussian_mechanism_variance(DpParameters(e, 0.01, 10)) for e in eps]
    assert all(a > b for a, b in zip(v, v[1:]))
    v = [gaussian_mechanism_variance(DpParameters(0.9, d, 10)) for d in deltas]
    assert all(a > b for a, b in zip(v, v[1:]))
    v = [gaussian_mechanism_variance(DpParameters(0.9, 0.01, s)) for s in sens]
    assert all(a < b for a, b in zip(v, v[1:]))


# -- probability queries and densities ------------------------------------

def single(mean, var):
    return GaussianState.empty().extend_independent("X", mean, var)


def test_interval_half():
    assert interval_probability(single(3, 2), "X", -math.inf, 3) == pytest.approx(0.5, abs=1e-15)


def test_interval_196():
    assert interval_probability(single(0, 1), "X", -1.96, 1.96) == pytest.approx(0.9500042, abs=1e-7)


def test_interval_empty_and_wide():
    s = single(10, 4)
    assert interval_probability(s, "X", 1, 1) == 0
    assert abs(interval_probability(s, "X", 10 - 80, 10 + 80) - 1) <= 1e-12
    with pytest.raises(ValueError):
        interval_probability(s, "X", 2, 1)


def test_interval_upper_tail_precision():
    p = interval_probability(single(0, 1), "X", 8, 9)
    ref = float(mpmath.ncdf(9) - mpmath.ncdf(8))
    assert p == pytest.approx(ref, rel=1e-9)


def test_interval_degenerate_variance():
    s = GaussianState.empty().extend_independent("X", 2, 0)
    assert interval_probability(s, "X", 1, 3) == 1
    assert interval_probability(s, "X", 3, 4) == 0


def test_density_curve():
    s = single(5, 4)
    pts = density_curve(s, "X", 5 - 8, 5 + 8, 401)
    xs, ys = np.array(pts).T
    assert ys[200] == pytest.approx(1 / math.sqrt(2 * math.pi * 4), rel=1e-15)
    np.testing.assert_allclose(ys, ys[::-1], rtol=1e-12)
    area = np.trapezoid(ys, xs) if hasattr(np, "trapezoid") else np.trapz(ys, xs)
    assert abs(area - interval_probability(s, "X", -3, 13)) <= 1e-4
    with pytest.raises(ValueError):
        density_curve(s, "X", 0, 1, 1)
    with pytest.raises(ValueError):
        density_curve(GaussianState.empty().extend_independent("X", 0, 0), "X", 0, 1, 5)


def test_no_warnings_on_regular_inputs():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mutual_information(pair([[1, 0.3], [0.3, 1]]), "A", "B")
