"""
Tests for the regularization functionals and discrete oracles.
"""
import numpy as np
import pytest

from RoughFlow.paths import Grid, GridPath, Seed, gen_bm
from RoughFlow.regularization import (
    EpsSchedule,
    backward_integral,
    c_eps,
    covariation_matrix,
    cubic_variation_stat,
    evaluate_series,
    forward_integral,
    ito_oracle,
    scalar_qv,
    strat_oracle,
    strong_sense_stat,
    symmetric_integral,
    weighted_cov,
    window_span,
)


@pytest.fixture
def bm():
    return gen_bm(Grid(256), 2, Seed(2024))


def test_c_eps_linear_path_with_clamp():
    X = GridPath.from_function(Grid(8), lambda t: t)
    # m = 2: seven full windows, the one at j = 7 clamped to a single step
    expected = (7 * (2 / 8) ** 2 + (1 / 8) ** 2) / 2
    assert c_eps(X, X, 0.25, 1.0) == pytest.approx(expected)
    assert expected == pytest.approx(0.2265625)


def test_c_eps_is_symmetric_and_bounded_by_strong_sense(bm):
    X1, X2 = bm.component(0), bm.component(1)
    assert c_eps(X1, X2, 1 / 32, 1.0) == pytest.approx(c_eps(X2, X1, 1 / 32, 1.0))
    assert strong_sense_stat(X1, X2, 1 / 32, 1.0) >= abs(c_eps(X1, X2, 1 / 32, 1.0))


def test_c_eps_is_additive_in_time(bm):
    X1 = bm.component(0)
    whole = c_eps(X1, X1, 1 / 64, 1.0)
    parts = c_eps(X1, X1, 1 / 64, 0.5) + c_eps(X1, X1, 1 / 64, 1.0, s=0.5)
    assert whole == pytest.approx(parts, rel=1e-12)


def test_covariation_matrix_matches_pairwise(bm):
    C = covariation_matrix(bm, 1 / 16, 1.0)
    np.testing.assert_allclose(C, C.T)
    assert C[0, 1] == pytest.approx(c_eps(bm.component(0), bm.component(1), 1 / 16, 1.0))
    assert scalar_qv(bm, 1 / 16, 1.0) == pytest.approx(np.trace(C))


def test_cubic_variation_of_linear_path():
    X = GridPath.from_function(Grid(64), lambda t: t)
    m = 4
    eps = m / 64
    # (1/m) * sum of |clamped increment|^3
    inc = np.minimum(np.arange(64) + m, 64) - np.arange(64)
    expected = np.sum((inc / 64.0) ** 3) / m
    assert cubic_variation_stat(X, eps, 1.0) == pytest.approx(expected)


def test_weighted_cov_with_unit_weight_is_c_eps(bm):
    X1 = bm.component(0)
    one = GridPath(X1.grid, np.ones(257))
    assert weighted_cov(one, X1, X1, 1 / 8, 1.0) == pytest.approx(c_eps(X1, X1, 1 / 8, 1.0))


def test_weighted_cov_is_bilinear(bm):
    X1, X2 = bm.component(0), bm.component(1)
    H = GridPath(bm.grid, np.cos(X1.values))
    G = GridPath(bm.grid, X2.values ** 2)
    a, b, eps = 1.5, -0.75, 1 / 16
    mixed = GridPath(bm.grid, a * X1.values + b * X2.values)
    weights = GridPath(bm.grid, a * H.values + b * G.values)

    def wc(h, x1, x2):
        return weighted_cov(h, x1, x2, eps, 1.0)

    assert wc(H, mixed, X2) == pytest.approx(a * wc(H, X1, X2) + b * wc(H, X2, X2), rel=1e-12, abs=1e-14)
    assert wc(weights, X1, X2) == pytest.approx(a * wc(H, X1, X2) + b * wc(G, X1, X2), rel=1e-12, abs=1e-14)
    assert wc(H, X1, X2) == pytest.approx(wc(H, X2, X1), rel=1e-14)


@pytest.mark.parametrize("m", [1, 4, 32])
def test_scalar_qv_is_non_decreasing_in_time(bm, m):
    eps = m * bm.grid.step
    values = np.array([scalar_qv(bm, eps, t) for t in bm.grid.nodes])
    assert values[0] == 0.0
    assert np.all(np.diff(values) >= -1e-14)


def test_backward_minus_forward_is_covariation(bm):
    X1, X2 = bm.component(0), bm.component(1)
    diff = backward_integral(X1, X2, 1 / 32, 1.0) - forward_integral(X1, X2, 1 / 32, 1.0)
    assert diff[0, 0] == pytest.approx(c_eps(X1, X2, 1 / 32, 1.0), abs=1e-13)


def test_symmetric_is_average_of_forward_and_backward(bm):
    Y = GridPath(bm.grid, np.sin(bm.values))
    sym = symmetric_integral(Y, bm, 1 / 16, 0.5)
    avg = 0.5 * (forward_integral(Y, bm, 1 / 16, 0.5) + backward_integral(Y, bm, 1 / 16, 0.5))
    assert sym.shape == (2, 2)
    np.testing.assert_allclose(sym, avg, atol=1e-14)


def test_empty_interval_gives_zero(bm):
    assert c_eps(bm.component(0), bm.component(1), 1 / 16, 0.5, s=0.5) == 0.0
    np.testing.assert_array_equal(forward_integral(bm, bm, 1 / 16, 0.0), np.zeros((2, 2)))


def test_strat_oracle_telescopes(bm):
    X1 = bm.component(0)
    out = strat_oracle(X1, X1)
    assert out.values[-1, 0] == pytest.approx(0.5 * X1.values[-1, 0] ** 2, abs=1e-12)


def test_ito_oracle_has_bracket_correction(bm):
    X1 = bm.component(0)
    realized = np.sum(np.diff(X1.values[:, 0]) ** 2)
    out = ito_oracle(X1, X1)
    assert out.values[-1, 0] == pytest.approx(0.5 * (X1.values[-1, 0] ** 2 - realized), abs=1e-12)


def test_oracle_rejects_incompatible_width(bm):
    Z = GridPath(bm.grid, np.ones((257, 3)))
    with pytest.raises(ValueError, match="multiple"):
        ito_oracle(Z, bm)


def test_window_span_errors():
    g = Grid(16)
    with pytest.raises(ValueError, match="after"):
        window_span(g, 1 / 16, 0.25, 0.5)
    with pytest.raises(ValueError):
        window_span(g, 1 / 16, 0.3, 0.0)


def test_grid_mismatch_and_non_scalar(bm):
    other = gen_bm(Grid(128), 1, Seed(1))
    with pytest.raises(ValueError, match="Grid mismatch"):
        c_eps(bm.component(0), other, 1 / 16, 1.0)
    with pytest.raises(ValueError, match="scalar"):
        c_eps(bm, bm.component(0), 1 / 16, 1.0)


def test_eps_schedules():
    g = Grid(64)
    assert EpsSchedule.horizon_fractions(g, 4).steps == (8, 4, 2, 1)
    assert EpsSchedule.dyadic(g, 3).steps == (4, 2, 1)
    np.testing.assert_allclose(EpsSchedule.dyadic(g, 3).eps, [4 / 64, 2 / 64, 1 / 64])
    with pytest.raises(ValueError):
        EpsSchedule.horizon_fractions(Grid(32), 4)
    with pytest.raises(ValueError, match="decreasing"):
        EpsSchedule(g, (2, 2, 1))
    with pytest.raises(ValueError):
        EpsSchedule(g, (1, 0))


def test_evaluate_series_shapes(bm):
    schedule = EpsSchedule.dyadic(bm.grid, 3)
    series = evaluate_series("cov", covariation_matrix, schedule, [0.5, 1.0], bm)
    assert len(series.values) == 3
    assert series.values[0].shape == (2, 2, 2)
    assert series.times == [0.5, 1.0]
