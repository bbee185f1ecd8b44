import math

import numba
import numpy as np
import pytest

from levystop import LevyModel, ModelError, build_scale, hump, run_procedure
from levystop.montecarlo import (
    PathConfig,
    benchmark_thresholds,
    default_horizon,
    simulate_stopped,
    validate_fluctuation,
    validate_upward_passage,
)

N = 200_000


@pytest.fixture(scope="module")
def two_sided(bv_model, put_reward):
    return run_procedure(bv_model, put_reward, 0.0)


def cfg(model, x0, n=N, seed=11, q=0.0):
    return PathConfig(x0, default_horizon(model, q), n, seed)


def test_same_seed_same_numbers_any_thread_count(bv_model, put_reward, two_sided):
    c = cfg(bv_model, 2.5, 50_000)
    first = simulate_stopped(bv_model, put_reward, 0.0, two_sided.gamma, c)
    n_threads = numba.get_num_threads()
    try:
        numba.set_num_threads(1)
        serial = simulate_stopped(bv_model, put_reward, 0.0, two_sided.gamma, c)
    finally:
        numba.set_num_threads(n_threads)
    assert first == serial
    other = simulate_stopped(bv_model, put_reward, 0.0, two_sided.gamma, PathConfig(2.5, c.horizon, c.n_paths, 12))
    assert other.mean != first.mean


def test_whole_line_region_returns_reward(bv_model, put_reward):
    for x0 in [-1.0, 1.7, 2.5, 7.0]:
        est = simulate_stopped(bv_model, put_reward, 0.0, [(-math.inf, math.inf)], cfg(bv_model, x0, 1000))
        assert est.mean == put_reward(x0) and est.stderr == 0.0


def test_stderr_scales_like_root_n(bv_model, put_reward, two_sided):
    s1 = simulate_stopped(bv_model, put_reward, 0.0, two_sided.gamma, cfg(bv_model, 2.5, 50_000)).stderr
    s4 = simulate_stopped(bv_model, put_reward, 0.0, two_sided.gamma, cfg(bv_model, 2.5, 200_000)).stderr
    assert s1 / s4 == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize("x0", [1.7, 2.5, 4.0, 6.5])
def test_matches_analytic_value(bv_model, put_reward, two_sided, x0):
    est = simulate_stopped(bv_model, put_reward, 0.0, two_sided.gamma, cfg(bv_model, x0))
    if x0 < two_sided.boundaries[-1]:
        # below the top boundary every path creeps into the region
        assert est.truncation_fraction == 0.0
    assert abs(est.mean - two_sided.value(x0)) <= 4 * est.stderr


@pytest.mark.parametrize("x,a,q", [(1.0, 3.0, 0.05), (0.5, 1.0, 0.0)])
def test_two_sided_exit_identities(bv_model, x, a, q):
    out = validate_fluctuation(bv_model, q, x, a, cfg(bv_model, x, q=q))
    assert abs(out["upper"]["z"]) < 4 and abs(out["lower"]["z"]) < 4


def test_upward_passage(bv_model):
    out = validate_upward_passage(bv_model, 0.2, 0.0, 1.5, cfg(bv_model, 0.0, q=0.2))
    assert abs(out["z"]) < 4


def test_euler_upward_passage_is_close(ubv_model):
    """Gaussian paths are Euler stepped; only a small first-passage bias remains."""
    q = 0.2
    c = PathConfig(0.0, default_horizon(ubv_model, q), 50_000, 5)
    out = validate_upward_passage(ubv_model, q, 0.0, 1.0, c)
    assert out["mc"] == pytest.approx(out["exact"], rel=0.03)


def test_benchmark_pairs_against_first(bv_model, put_reward, two_sided):
    b = two_sided.boundaries
    cands = [two_sided.gamma, [(-math.inf, b[0] + 0.1), (b[1], b[2])], [(-math.inf, b[0]), (b[1] - 0.1, b[2])]]
    res = benchmark_thresholds(bv_model, put_reward, 0.0, 2.5, cands, cfg(bv_model, 2.5))
    assert res.diff_mean[0] == 0.0 and res.diff_stderr[0] == 0.0
    for k in (1, 2):
        assert res.diff_stderr[k] < res.estimates[k].stderr
        assert res.diff_mean[k] == pytest.approx(res.estimates[k].mean - res.estimates[0].mean, abs=1e-12)
    assert len(res.table()) == 3


def test_hump_value_by_simulation(bv_model):
    sol = run_procedure(bv_model, hump(), 0.0)
    est = simulate_stopped(bv_model, hump(), 0.0, sol.gamma, cfg(bv_model, 1.2))
    assert abs(est.mean - sol.value(1.2)) < 4 * est.stderr


def test_rejects_unsupported_models(put_reward):
    with pytest.raises(ModelError):
        simulate_stopped(LevyModel(0.5, 0.0, ((1.0, 1.0),)), put_reward, 0.0, [(-math.inf, 0.0)], PathConfig(1.0, 10.0, 10))
    with pytest.raises(ModelError):
        simulate_stopped(LevyModel(-0.5, 0.0, ((1.0, 1.0),)), put_reward, 0.3, [(-math.inf, 0.0)], PathConfig(1.0, 10.0, 10))
    with pytest.raises(ValueError):
        PathConfig(0.0, 10.0, 0)


def test_empty_region_with_discounting_pays_nothing(bv_model, hump_reward):
    est = simulate_stopped(bv_model, hump_reward, 0.1, [], cfg(bv_model, 0.3, 20_000, q=0.1))
    # every path is cut at the horizon and pays nothing; only rounding of the g(x0) shift remains
    assert est.mean == pytest.approx(0.0, abs=1e-12) and est.truncation_fraction == 1.0


@pytest.mark.parametrize("x,a", [(2.999, 3.0), (1e-6, 3.0)])
def test_upper_exit_ratio_at_the_edges(bv_model, x, a):
    q = 0.05
    sc = build_scale(bv_model, q)
    # near a the lower exit is rare; enough paths for a normal z-score
    out = validate_fluctuation(bv_model, q, x, a, cfg(bv_model, x, n=2_000_000, q=q))
    if x > a / 2:
        assert out["upper"]["exact"] == pytest.approx(1.0, abs=1e-3)
    else:
        assert out["upper"]["exact"] == pytest.approx(sc.W(0.0) / sc.W(a), rel=1e-5)
        assert sc.W(0.0) == pytest.approx(1 / 1.2, abs=1e-14)
    assert abs(out["upper"]["z"]) < 4


def test_single_candidate_is_best(bv_model, put_reward, two_sided):
    res = benchmark_thresholds(bv_model, put_reward, 0.0, 2.5, [two_sided.gamma], cfg(bv_model, 2.5, 20_000))
    assert res.best == 0 and len(res.estimates) == 1


@pytest.mark.parametrize("x0,best", [(0.3, 1), (2.0, 0)])
def test_empty_versus_whole_line(bv_model, hump_reward, x0, best):
    q = 0.1
    res = benchmark_thresholds(bv_model, hump_reward, q, x0, [[], [(-math.inf, math.inf)]], cfg(bv_model, x0, 20_000, q=q))
    assert res.estimates[1].mean == hump_reward(x0)
    assert res.best == best
