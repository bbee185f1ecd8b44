import math

import numpy as np
import pytest
from scipy.integrate import quad

from levystop import LevyModel, build_scale
from levystop.scale_functions import W_function

from conftest import random_model


def test_W_partial_fractions_by_hand(bv_model):
    # psi(b) = b (1.2 b + 0.8) / (1.5 + b): roots 0 and -2/3
    sc = build_scale(bv_model, 0.0)
    xs = np.linspace(0, 6, 25)
    expect = 1.5 / 0.8 + (1.5 - 2 / 3) / (-2 / 3 * 1.2) * np.exp(-2 * xs / 3)
    np.testing.assert_allclose(sc.W(xs), expect, rtol=1e-13)
    assert sc.W(0.0) == pytest.approx(1 / 1.2, rel=1e-14)
    assert sc.W(-0.3) == 0.0


@pytest.mark.parametrize("q", [0.0, 0.2, 1.5])
def test_laplace_transform_matches_quadrature(ubv_model, q):
    sc = build_scale(ubv_model, q)
    for beta in sc.phi + np.array([0.5, 1.0, 3.0]):
        num = quad(lambda x: math.exp(-beta * x) * sc.W(x), 0, 120, epsabs=1e-13, limit=200)[0]
        assert num == pytest.approx(1.0 / (ubv_model.psi(beta) - q), rel=1e-8)
        assert sc.laplace_W(beta) == pytest.approx(num, rel=1e-8)


def test_W_at_zero_by_variation(bv_model, ubv_model):
    assert build_scale(bv_model, 0.3).W(0.0) == pytest.approx(1 / bv_model.drift, rel=1e-12)
    sc = build_scale(ubv_model, 0.3)
    assert abs(sc.W(0.0)) < 1e-12
    assert sc.W_prime(0.0) == pytest.approx(2 / ubv_model.sigma**2, rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("q", [0.0, 0.3, 2.0])
def test_W_positive_increasing_and_growth(seed, q):
    m = random_model(np.random.default_rng(100 + seed))
    sc = build_scale(m, q)
    xs = np.linspace(1e-3, 8, 400)
    w = sc.W(xs)
    assert np.all(w > 0) and np.all(np.diff(w) > 0)
    # e^{-Phi x} W(x) -> Phi'(q), or 1/psi'(0+) when q = 0
    limit = 1 / m.mean_drift if q == 0 else m.phi_prime(q)
    assert sc.coefficients[-1] == pytest.approx(limit, rel=1e-10)


@pytest.mark.parametrize("q", [0.1, 1.0])
def test_Z_derivative_is_qW(ubv_model, q):
    sc = build_scale(ubv_model, q)
    xs = np.linspace(0.1, 4, 15)
    h = 1e-5
    fd = (sc.Z(xs + h) - sc.Z(xs - h)) / (2 * h)
    np.testing.assert_allclose(fd, q * sc.W(xs), rtol=1e-7)
    assert sc.Z(-1.0) == 1.0


def test_Z_is_one_when_undiscounted(bv_model):
    np.testing.assert_array_equal(build_scale(bv_model, 0.0).Z(np.linspace(-1, 5, 7)), 1.0)


@pytest.mark.parametrize("q", [0.0, 0.05, 0.7])
def test_Z2_special_values(bv_model, q):
    sc = build_scale(bv_model, q)
    xs = np.linspace(0, 5, 11)
    np.testing.assert_allclose(sc.Z2(xs, 0.0), sc.Z(xs), rtol=1e-12)
    # at a root of psi = q the convolution term vanishes
    np.testing.assert_allclose(sc.Z2(xs, sc.phi), np.exp(sc.phi * xs), rtol=1e-12)
    np.testing.assert_allclose(sc.Z2(-xs[1:], 0.4), np.exp(-0.4 * xs[1:]))


@pytest.mark.parametrize("theta", [-0.5, 0.5, 1.0, 2.0])
def test_Z2_laplace_transform(ubv_model, theta):
    q = 0.25
    sc = build_scale(ubv_model, q)
    beta = max(sc.phi, theta) + 1.0
    num = quad(lambda x: math.exp(-beta * x) * sc.Z2(x, theta), 0, 120, epsabs=1e-12, limit=200)[0]
    psi_b = ubv_model.psi(beta)
    expect = (psi_b - ubv_model.psi(theta)) / ((beta - theta) * (psi_b - q))
    assert num == pytest.approx(expect, rel=1e-8)


def test_Z2_near_root_is_continuous(bv_model):
    sc = build_scale(bv_model, 0.05)
    xs = np.linspace(0, 4, 9)
    for eps in [1e-6, 1e-9, 1e-12]:
        np.testing.assert_allclose(sc.Z2(xs, sc.phi + eps), sc.Z2(xs, sc.phi), rtol=1e-5)


@pytest.mark.parametrize("theta_frac", [0.0, 0.5])
def test_potential_density_exponential_moments(ubv_model, theta_frac):
    """int e^{theta (y-x)} u(x, y) dy = 1/(q - psi(theta)) for psi(theta) < q."""
    q = 0.4
    sc = build_scale(ubv_model, q)
    th = theta_frac * sc.phi
    x = 0.7
    f = lambda y: math.exp(th * (y - x)) * sc.potential_density(x, y)  # noqa: E731
    num = quad(f, x - 80, x, epsabs=1e-12, limit=400)[0] + quad(f, x, x + 80, epsabs=1e-12, limit=400)[0]
    assert num == pytest.approx(1 / (q - ubv_model.psi(th)), rel=1e-7)


def test_W_function_matches_evaluator(ubv_model):
    sc = build_scale(ubv_model, 0.3)
    fn = W_function(sc)
    xs = np.linspace(-2, 5, 29)
    np.testing.assert_allclose(fn(xs), sc.W(xs), rtol=1e-13, atol=1e-15)


def test_pure_brownian_model():
    m = LevyModel(0.5, 1.0)
    sc = build_scale(m, 0.2)
    beta = sc.phi + 1.0
    assert sc.laplace_W(beta) == pytest.approx(1 / (m.psi(beta) - 0.2), rel=1e-12)


def test_single_exponential_closed_form(bv_model):
    c, lam, mu = 1.2, 1.0, 1.5
    sc = build_scale(bv_model, 0.0)
    xs = np.linspace(0, 10, 41)
    closed = (1 / c) * (1 + lam / (c * mu - lam) * (1 - np.exp(-(mu - lam / c) * xs)))
    np.testing.assert_allclose(sc.W(xs), closed, rtol=1e-14)
    # the closed form gives 1.340191 at x = 1
    assert sc.W(1.0) == pytest.approx(1.340191, abs=1e-6)
    assert sc.W(80.0) == pytest.approx(1.875, rel=1e-12)


def test_potential_density_at_zero_discount(bv_model):
    sc = build_scale(bv_model, 0.0)
    assert sc.potential_density(0.0, 1.0) == pytest.approx(1 / bv_model.mean_drift)
    assert abs(sc.potential_density(60.0, 0.0)) < 1e-12
    xs = np.linspace(-5, 5, 41)
    assert np.all(sc.potential_density(xs, 0.0) >= -1e-15)
    assert np.all(build_scale(bv_model, 0.4).potential_density(xs, 0.0) >= 0)
