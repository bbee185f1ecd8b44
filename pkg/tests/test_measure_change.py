import numpy as np
import pytest

from levystop import LevyModel, ModelError, generator_apply, mckean, put_linear_tail, tilt, untilt_value
from levystop.measure_change import tilt_model

from conftest import random_model


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("q", [0.05, 0.5, 2.0])
def test_tilted_exponent(seed, q):
    m = random_model(np.random.default_rng(200 + seed), transient=bool(seed % 2))
    pr = tilt(m, put_linear_tail(8.0, 0.4, 1.8), q)
    th = np.linspace(-0.9 * pr.model.min_decay, 4.0, 41)
    np.testing.assert_allclose(pr.model.psi(th), m.psi(th + pr.phi_q) - q, atol=1e-12, rtol=1e-12)
    # tilted process drifts to +inf
    assert pr.model.mean_drift > 0


@pytest.mark.parametrize("q", [0.05, 0.5])
def test_tilted_generator(ubv_model, q):
    g = put_linear_tail(8.0, 0.4, 1.8)
    pr = tilt(ubv_model, g, q)
    xs = np.random.default_rng(3).uniform(-3, 20, 50)
    lhs = generator_apply(pr.model, pr.reward, xs)
    rhs = np.exp(-pr.phi_q * xs) * (generator_apply(ubv_model, g, xs) - q * g(xs))
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_q_zero_is_identity_or_rejected(bv_model):
    g = mckean(8.0)
    pr = tilt(bv_model, g, 0.0)
    assert pr.model is bv_model and pr.reward is g and pr.phi_q == 0.0
    with pytest.raises(ModelError, match="drift to \\+inf"):
        tilt(LevyModel(0.5, 0.0, ((1.0, 1.0),)), g, 0.0)
    with pytest.raises(ModelError):
        tilt(bv_model, g, -1.0)


def test_untilt_round_trip(bv_model):
    g = mckean(8.0)
    pr = tilt(bv_model, g, 0.3)
    xs = np.linspace(-3, 4, 15)
    np.testing.assert_allclose(untilt_value(pr, pr.reward)(xs), g(xs), rtol=1e-13, atol=1e-14)
    f = untilt_value(pr, lambda x: pr.reward(x))
    np.testing.assert_allclose(f(xs), g(xs), rtol=1e-13, atol=1e-14)


def test_tilt_model_jump_parameters():
    m = LevyModel(1.0, 0.5, ((2.0, 3.0),))
    t = tilt_model(m, 0.5)
    assert t.drift == pytest.approx(1.0 + 0.25 * 0.5)
    assert t.jumps[0].decay == pytest.approx(3.5)
    assert t.jumps[0].rate == pytest.approx(2.0 * 3.0 / 3.5)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("q", [0.05, 0.5])
def test_tilted_exponent_vanishes_at_zero(seed, q):
    m = random_model(np.random.default_rng(300 + seed), transient=bool(seed % 2))
    assert abs(tilt_model(m, m.phi(q)).psi(0.0)) == 0.0
    assert abs(m.psi(m.phi(q)) - q) < 1e-12
