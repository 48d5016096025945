"""
Tests for enhanced paths: Chen relation, extensions, geometricity.
"""
import numpy as np
import pytest

from RoughFlow.enhance import (
    EnhancedPath,
    chen_residual,
    direct_block,
    enhance,
    geometric_defect,
    holder2_norm,
    reversed_enhancement,
    sym_anti,
    xx_block,
)
from RoughFlow.paths import Grid, GridPath, Seed, gen_bm


@pytest.fixture
def bm():
    return gen_bm(Grid(128), 2, Seed(99))


@pytest.fixture
def triples():
    rng = np.random.default_rng(0)
    return np.sort(rng.integers(0, 129, size=(30, 3)), axis=1)


@pytest.mark.parametrize("flavor", ["ito", "strat"])
def test_chen_relation_holds(bm, triples, flavor):
    E = enhance(bm, flavor)
    scale = 1.0 + bm.sup_norm() ** 2
    for j, m, k in triples:
        assert chen_residual(E, int(j), int(m), int(k)) <= 1e-12 * scale


def test_chen_residual_detects_faulty_table(bm):
    E = enhance(bm, "strat")
    zero = lambda a, b: np.zeros((2, 2))
    assert chen_residual(E, 0, 64, 128, xx=zero) > 1e-6


def test_chen_residual_needs_ordered_triple(bm):
    with pytest.raises(ValueError, match="ordered"):
        chen_residual(enhance(bm), 5, 3, 10)


@pytest.mark.parametrize("flavor", ["ito", "strat"])
def test_blocks_match_direct_accumulation(bm, flavor):
    E = enhance(bm, flavor)
    for j, k in [(0, 128), (10, 11), (17, 90)]:
        np.testing.assert_allclose(xx_block(E, j, k).matrix, direct_block(bm, flavor, j, k), atol=1e-12)


def test_diagonal_block_is_zero(bm):
    block = xx_block(enhance(bm), 40, 40)
    np.testing.assert_array_equal(block.matrix, np.zeros((2, 2)))


def test_extensions_below_diagonal(bm):
    E = enhance(bm, "strat")
    sym = xx_block(E, 90, 17)
    np.testing.assert_array_equal(sym.matrix, xx_block(E, 17, 90).matrix)
    chen = xx_block(E, 90, 17, extension="chen")
    dx = bm.values[90] - bm.values[17]
    np.testing.assert_allclose(chen.matrix, -xx_block(E, 17, 90).matrix + np.outer(dx, dx), atol=1e-12)


def test_block_indices_outside_grid(bm):
    with pytest.raises(ValueError, match="outside"):
        xx_block(enhance(bm), 0, 500)


def test_strat_enhancement_is_geometric(bm):
    E = enhance(bm, "strat")
    for j, k in [(0, 128), (3, 77), (50, 51)]:
        assert geometric_defect(E, j, k) <= 1e-12


def test_ito_defect_is_half_the_bracket():
    X = gen_bm(Grid(128), 1, Seed(3))
    E = enhance(X, "ito")
    realized = np.sum(np.diff(X.values[20:100, 0]) ** 2)
    assert geometric_defect(E, 20, 99) == pytest.approx(0.5 * np.sum(np.diff(X.values[20:100, 0]) ** 2), abs=1e-12)
    assert realized > 0


def test_scalar_strat_block_is_half_square():
    X = gen_bm(Grid(64), 1, Seed(8))
    E = enhance(X, "strat")
    dx = X.values[50, 0] - X.values[5, 0]
    assert E.blocks(5, 50)[0, 0] == pytest.approx(0.5 * dx**2, abs=1e-12)


def test_sym_anti_split(bm):
    block = xx_block(enhance(bm), 0, 128)
    sym, anti = sym_anti(block)
    np.testing.assert_allclose(sym + anti, block.matrix)
    np.testing.assert_allclose(anti, -anti.T)


def test_holder2_norm_of_linear_path():
    X = GridPath.from_function(Grid(32), lambda t: t)
    assert holder2_norm(enhance(X), 2.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        holder2_norm(enhance(X), 0.0)


def test_reversed_strat_enhancement(bm):
    E = enhance(bm, "strat")
    R = reversed_enhancement(E)
    n = bm.grid.steps
    j, k = 12, 70
    dx = bm.values[k] - bm.values[j]
    np.testing.assert_allclose(R.blocks(n - k, n - j), np.outer(dx, dx) - E.blocks(j, k), atol=1e-12)


def test_unknown_flavor_and_bad_shape(bm):
    with pytest.raises(ValueError, match="flavor"):
        enhance(bm, "hybrid")
    with pytest.raises(ValueError, match="shape"):
        EnhancedPath(bm, "strat", np.zeros((129, 3, 3)))
