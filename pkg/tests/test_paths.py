"""
Tests for RoughFlow grid paths and generators.
"""
import numpy as np
import pytest

from RoughFlow import paths
from RoughFlow.paths import (
    Grid,
    GridPath,
    NonFiniteError,
    Seed,
    apply_fn,
    gen_bm,
    gen_fbm,
    gen_semimartingale,
    holder_seminorm,
    sampled_lags,
)


@pytest.fixture
def grid():
    return Grid(8, 1.0)


@pytest.fixture
def linear(grid):
    return GridPath.from_function(grid, lambda t: t)


def test_grid_nodes_end_at_horizon():
    g = Grid(3, 0.3)
    assert g.nodes[-1] == 0.3
    assert len(g.nodes) == 4


@pytest.mark.parametrize("steps,horizon", [(1, 1.0), (8, 0.0), (8, -1.0), (2.5, 1.0)])
def test_grid_rejects_bad_parameters(steps, horizon):
    with pytest.raises(ValueError):
        Grid(steps, horizon)


def test_index_of_and_eps_steps(grid):
    assert grid.index_of(0.5) == 4
    assert grid.eps_steps(0.25) == 2
    with pytest.raises(ValueError, match="not a node"):
        grid.index_of(0.3)
    with pytest.raises(ValueError, match="positive multiple"):
        grid.eps_steps(0.01)


def test_gridpath_coerces_and_freezes(grid):
    X = GridPath(grid, np.arange(9.0))
    assert X.values.shape == (9, 1)
    with pytest.raises(ValueError):
        X.values[0, 0] = 1.0


def test_gridpath_rejects_wrong_rows_and_nan(grid):
    with pytest.raises(ValueError, match="rows"):
        GridPath(grid, np.zeros(5))
    with pytest.raises(NonFiniteError):
        GridPath(grid, np.full(9, np.nan))


def test_increments_are_clamped_at_horizon(linear):
    inc = linear.increments(2)
    assert inc.shape == (8, 1)
    assert inc[0, 0] == pytest.approx(0.25)
    assert inc[-1, 0] == pytest.approx(0.125)


def test_at_clamps_both_ends(linear):
    assert linear.at(-3)[0] == 0.0
    assert linear.at(42)[0] == 1.0


def test_reversed_twice_is_identity(linear):
    np.testing.assert_array_equal(linear.reversed().reversed().values, linear.values)
    assert linear.reversed().values[0, 0] == 1.0


def test_gen_bm_is_reproducible_per_stream():
    g = Grid(64)
    a = gen_bm(g, 2, Seed(7, 0))
    b = gen_bm(g, 2, Seed(7, 0))
    c = gen_bm(g, 2, Seed(7, 1))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.allclose(a.values, c.values)
    assert np.all(a.values[0] == 0.0)


def test_substreams_are_independent_of_main_stream():
    seed = Seed(7, 3)
    main = seed.generator().standard_normal(4)
    other = seed.substream(1).generator().standard_normal(4)
    assert not np.allclose(main, other)


def test_seed_validation():
    with pytest.raises(ValueError):
        Seed(-1)
    with pytest.raises(ValueError):
        Seed(1, -2)


def test_fbm_half_reproduces_bm():
    g = Grid(64)
    np.testing.assert_allclose(
        gen_fbm(g, 0.5, 2, Seed(11)).values, gen_bm(g, 2, Seed(11)).values, atol=1e-14
    )


@pytest.mark.parametrize("hurst", [0.3, 0.7])
def test_fbm_factor_gives_terminal_variance(hurst):
    factor = paths._fbm_factor(64, 2.0, hurst)
    # Var(X_T) is the sum of all increment covariances.
    assert np.sum(factor @ factor.T) == pytest.approx(2.0 ** (2 * hurst), rel=1e-10)


def test_fbm_rejects_large_grid_and_bad_hurst():
    with pytest.raises(ValueError, match="limited"):
        gen_fbm(Grid(128), 0.4, 1, Seed(0), max_steps=64)
    with pytest.raises(ValueError, match="Hurst"):
        gen_fbm(Grid(16), 1.2, 1, Seed(0))


def test_semimartingale_unit_vol_matches_bm():
    g = Grid(32)
    X = gen_semimartingale(g, 1, lambda t, x: np.zeros(1), lambda t, x: np.eye(1), Seed(5))
    np.testing.assert_allclose(X.values, gen_bm(g, 1, Seed(5)).values, atol=1e-14)


def test_semimartingale_blowup_raises():
    g = Grid(64)
    with pytest.raises(NonFiniteError):
        gen_semimartingale(
            g, 1, lambda t, x: 1e10 * x**2, lambda t, x: np.eye(1), Seed(1), x0=np.ones(1)
        )


def test_holder_seminorm_of_linear_path(linear):
    assert holder_seminorm(linear, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        holder_seminorm(linear, 1.5)


def test_sampled_lags_switches_to_dyadic():
    np.testing.assert_array_equal(sampled_lags(8, 10**6), np.arange(1, 9))
    np.testing.assert_array_equal(sampled_lags(12, 1), [1, 2, 4, 8, 12])


def test_apply_fn_returns_gradient(linear):
    Y, G = apply_fn(linear, lambda x: x[0] ** 2, lambda x: 2 * x)
    np.testing.assert_allclose(Y.values[:, 0], linear.values[:, 0] ** 2)
    np.testing.assert_allclose(G.values, 2 * linear.values)


def test_apply_fn_non_finite(linear):
    with pytest.raises(NonFiniteError):
        apply_fn(linear, lambda x: np.inf)


def _terminal_samples(generate, streams):
    """Terminal values of `streams` paths, all components pooled."""
    return np.concatenate([generate(Seed(2024, i)).values[-1] for i in range(streams)])


def test_bm_terminal_variance_is_horizon():
    g = Grid(8, 2.0)
    x = _terminal_samples(lambda s: gen_bm(g, 100, s), 100)
    assert x.size == 10_000
    assert x.var() == pytest.approx(2.0, abs=4 * 2.0 * np.sqrt(2 / x.size))


@pytest.mark.parametrize("hurst", [0.3, 0.7])
def test_fbm_terminal_variance_follows_hurst(hurst):
    g = Grid(16, 2.0)
    x = _terminal_samples(lambda s: gen_fbm(g, hurst, 100, s), 100)
    assert x.var() == pytest.approx(2.0 ** (2 * hurst), rel=0.05)


def test_semimartingale_covariance_is_vol_squared():
    g = Grid(4, 1.0)
    X = np.stack([
        gen_semimartingale(g, 2, lambda t, x: np.zeros(2), lambda t, x: 2.0 * np.eye(2), Seed(7, i)).values[-1]
        for i in range(10_000)
    ])
    cov = np.cov(X, rowvar=False)
    np.testing.assert_allclose(np.diag(cov), [4.0, 4.0], rtol=0.05)
    assert abs(cov[0, 1]) < 0.2


def test_holder_seminorm_is_homogeneous():
    X = gen_bm(Grid(128), 2, Seed(3))
    for alpha in (0.3, 0.5):
        assert holder_seminorm(X.scale(-2.5), alpha) == pytest.approx(2.5 * holder_seminorm(X, alpha), rel=1e-12)


def test_holder_seminorm_detects_fbm_regularity():
    # Refining the grid leaves the norm stable below the Hurst index and inflates it above.
    fine = gen_fbm(Grid(2048), 0.3, 1, Seed(5))
    coarse = GridPath(Grid(128), fine.values[::16])

    def refinement_ratio(alpha):
        return holder_seminorm(fine, alpha) / holder_seminorm(coarse, alpha)

    assert refinement_ratio(0.1) < 1.5
    assert refinement_ratio(0.2) < 1.5
    assert refinement_ratio(0.7) > 2.0
