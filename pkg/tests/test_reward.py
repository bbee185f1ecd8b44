import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from levystop import Piece, PiecewiseExpPoly, RewardError, flatten_left, generator_apply, hump, mckean, put_linear_tail
from levystop.reward import check_reward, from_pieces, pi_integral

REWARDS = {
    "mckean": lambda: mckean(8.0),
    "put": lambda: put_linear_tail(8.0, 0.4, 1.8),
    "hump": hump,
}


def _quad_below(g, x, mu):
    pts = [b for b in g.breaks if x - 60 < b < x]
    return quad(lambda z: g(z) * math.exp(mu * (z - x)), x - 60, x, points=pts or None, limit=200, epsabs=1e-13)[0]


@pytest.mark.parametrize("name", REWARDS)
@pytest.mark.parametrize("mu", [0.7, 1.5, 4.0])
def test_exp_integral_below_matches_quadrature(name, mu):
    g = REWARDS[name]()
    for x in [-2.0, -0.3, 0.5, 1.9, 2.6, 9.0]:
        assert g.exp_integral_below(x, mu) == pytest.approx(_quad_below(g, x, mu), abs=1e-10)


@pytest.mark.parametrize("name", REWARDS)
def test_pi_integral_matches_quadrature(name, ubv_model):
    g = REWARDS[name]()
    for x in [-1.0, 0.4, 2.2]:
        expect = sum(
            j.rate * (j.decay * _quad_below(g, x, j.decay) - g(x)) for j in ubv_model.jumps
        )
        assert pi_integral(ubv_model, g, x) == pytest.approx(expect, abs=1e-10)


def test_put_linear_tail_shape():
    K, l, d = 8.0, 0.4, 1.8
    g = put_linear_tail(K, l, d)
    end = d + (K - math.exp(d)) / l
    assert g.kinks == pytest.approx([d, end])
    assert g(d) == pytest.approx(K - math.exp(d))
    assert g.deriv(d, "left") == pytest.approx(-math.exp(d))
    assert g.deriv(d, "right") == pytest.approx(-l)
    assert g(end) == pytest.approx(0.0, abs=1e-14)
    assert g(end + 3) == 0.0
    assert g(-50.0) == pytest.approx(K)


def test_mckean_and_hump_values():
    g = mckean(8.0)
    assert g.kinks == pytest.approx([math.log(8.0)])
    np.testing.assert_allclose(g(np.array([0.0, 1.0, 3.0])), np.maximum(8 - np.exp([0.0, 1.0, 3.0]), 0))
    h = hump()
    xs = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(h(xs), np.maximum(1 - xs**2, 0), atol=1e-15)


@pytest.mark.parametrize("name", REWARDS)
def test_derivatives_by_finite_differences(name):
    g = REWARDS[name]()
    xs = np.linspace(-3, 6, 37)
    xs = xs[np.min(np.abs(xs[:, None] - g.breaks[None, :]), axis=1) > 1e-3]
    h = 1e-6
    np.testing.assert_allclose(g.deriv(xs), (g(xs + h) - g(xs - h)) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(g.deriv2(xs), (g.deriv(xs + h) - g.deriv(xs - h)) / (2 * h), atol=1e-6)


def test_one_sided_values_at_break():
    g = put_linear_tail(8.0, 0.4, 1.8)
    assert g.value(1.8, "left") == pytest.approx(g.value(1.8, "right"))
    assert g.deriv(1.8, "left") != g.deriv(1.8, "right")


def test_tilted_is_exponential_reweighting():
    g = put_linear_tail(8.0, 0.4, 1.8)
    xs = np.linspace(-4, 20, 50)
    np.testing.assert_allclose(g.tilted(0.37)(xs), np.exp(-0.37 * xs) * g(xs), rtol=1e-13, atol=1e-300)


def test_flatten_left():
    beta, gh = flatten_left(hump())
    assert beta == 0.0
    np.testing.assert_allclose(gh(np.array([-5.0, -1.0, 0.0])), 1.0)
    np.testing.assert_allclose(gh(np.array([0.5, 2.0])), hump()(np.array([0.5, 2.0])))
    # supremum K approached only at -inf
    assert flatten_left(mckean(8.0))[0] is None
    assert flatten_left(put_linear_tail(8.0, 0.4, 1.8))[0] is None


def test_flatten_picks_last_maximiser():
    g = from_pieces([
        {"left": None, "right": -1.0, "terms": []},
        {"left": -1.0, "right": 1.0, "terms": [[1.0, 0.0, 0], [-1.0, 0.0, 2]], "anchor": 0.0},
        {"left": 1.0, "right": 2.0, "terms": []},
        {"left": 2.0, "right": 4.0, "terms": [[1.0, 0.0, 0], [-1.0, 0.0, 2]], "anchor": 3.0},
        {"left": 4.0, "right": None, "terms": []},
    ])
    assert flatten_left(g)[0] == pytest.approx(3.0)


@pytest.mark.parametrize(
    "pieces, msg",
    [
        ([{"left": None, "right": 0.0, "terms": [[1.0, 0.0, 0]]}, {"left": 0.0, "right": None, "terms": []}], "continuous"),
        ([{"left": None, "right": None, "terms": [[1.0, 0.0, 0]]}], "subtract the limit"),
        ([{"left": None, "right": None, "terms": [[1.0, 0.0, 1]]}], "unbounded"),
        ([{"left": None, "right": 0.0, "terms": [[-1.0, 0.0, 2]], "anchor": 0.0}, {"left": 0.0, "right": None, "terms": []}], "non-negative"),
        ([{"left": None, "right": None, "terms": []}], "g != 0"),
    ],
)
def test_check_reward_rejects(pieces, msg):
    with pytest.raises(RewardError, match=msg):
        check_reward(from_pieces(pieces))


def test_pieces_must_tile_the_line():
    with pytest.raises(RewardError):
        PiecewiseExpPoly([Piece.from_terms(-math.inf, 0.0, [])])
    with pytest.raises(RewardError):
        PiecewiseExpPoly([Piece.from_terms(-math.inf, 0.0, []), Piece.from_terms(0.5, math.inf, [])])


def test_dict_round_trip():
    g = put_linear_tail(8.0, 0.4, 1.8)
    g2 = from_pieces(g.to_dict()["pieces"])
    xs = np.linspace(-3, 25, 71)
    np.testing.assert_array_equal(g(xs), g2(xs))


terms_st = st.lists(
    st.tuples(st.floats(-3, 3), st.floats(-1.5, 1.5), st.integers(0, 3)), min_size=1, max_size=4
)


@settings(max_examples=60, deadline=None)
@given(terms=terms_st, anchor=st.floats(-2, 2), new=st.floats(-2, 2))
def test_reanchor_preserves_values(terms, anchor, new):
    p = Piece.from_terms(-math.inf, math.inf, terms, anchor=anchor)
    q = p.reanchored(new)
    xs = np.linspace(-2, 2, 9)
    scale = 1 + np.max(np.abs([p.value(xs, k) for k in (0, 1, 2)]))
    for k in (0, 1, 2):
        np.testing.assert_allclose(q.value(xs, k), p.value(xs, k), atol=1e-10 * scale)


@settings(max_examples=40, deadline=None)
@given(terms=terms_st, mu=st.floats(0.5, 4.0), x=st.floats(-1.0, 1.0))
def test_exp_integral_random_pieces(terms, mu, x):
    # decaying tail at -inf keeps the integral finite: rates above -mu
    terms = [(c, max(g, -mu + 0.3), p) for c, g, p in terms]
    g = PiecewiseExpPoly([
        Piece.from_terms(-math.inf, 0.0, terms, anchor=0.0),
        Piece.from_terms(0.0, math.inf, [], anchor=0.0),
    ])
    num = quad(lambda z: g(z) * math.exp(mu * (z - x)), min(x, 0.0) - 200.0, min(x, 0.0), limit=400, epsabs=1e-12)[0]
    assert g.exp_integral_below(x, mu) == pytest.approx(num, rel=1e-7, abs=1e-9)


def test_reference_values():
    g = put_linear_tail(8.0, 0.4, 1.8)
    assert g(1.8) == pytest.approx(8.0 - math.exp(1.8), abs=1e-14)
    assert g(1.8) == pytest.approx(1.950353, abs=1e-6)
    assert g.deriv(1.8, "left") == pytest.approx(-6.04965, abs=5e-6)
    assert g.deriv(1.8, "right") == pytest.approx(-0.4, abs=1e-15)
    assert mckean(8.0)(math.log(8.0)) == pytest.approx(0.0, abs=1e-14)
    assert hump()(0.0) == 1.0
    assert hump().deriv(0.0) == 0.0


def _capped_exp():
    return PiecewiseExpPoly([
        Piece.from_terms(-math.inf, 0.0, [(1.0, 0.0, 0)], anchor=0.0),
        Piece.from_terms(0.0, math.inf, [(1.0, -1.0, 0)], anchor=0.0),
    ])


def test_flatten_plateau_endpoint():
    beta, gh = flatten_left(_capped_exp())
    assert beta == 0.0
    np.testing.assert_allclose(gh(np.linspace(-6, 0, 7)), 1.0)


@pytest.mark.parametrize("name", ["hump", "capped"])
def test_flattened_reward_majorizes_and_is_harmonic_on_plateau(bv_model, ubv_model, name):
    g = hump() if name == "hump" else _capped_exp()
    beta, gh = flatten_left(g)
    xs = np.linspace(-4, 3, 141)
    assert np.all(gh(xs) >= g(xs))
    right = xs[xs >= beta]
    np.testing.assert_array_equal(gh(right), g(right))
    left = xs[xs < beta]
    for m in (bv_model, ubv_model):
        np.testing.assert_allclose(generator_apply(m, gh, left), 0.0, atol=1e-10)


def test_jump_integral_zero_cases(bv_model, ubv_model):
    const = PiecewiseExpPoly([Piece.from_terms(-math.inf, math.inf, [(2.5, 0.0, 0)], anchor=0.0)])
    _, gh = flatten_left(hump())
    for m in (bv_model, ubv_model):
        np.testing.assert_allclose(pi_integral(m, const, np.linspace(-3, 3, 13)), 0.0, atol=1e-12)
        assert pi_integral(m, gh, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_flattened_hump_generator_changes_sign_once(bv_model, ubv_model):
    _, gh = flatten_left(hump())
    xs = np.linspace(1e-6, 1 - 1e-6, 4001)
    for m in (bv_model, ubv_model):
        s = np.sign(generator_apply(m, gh, xs))
        s = s[s != 0]
        assert np.count_nonzero(np.diff(s)) <= 1
