"""
Regularization functionals: covariations, cubic variation and the
forward / backward / symmetric matrix integrals, plus the discrete Itô and
Stratonovich sums used as ground truth.

All ds-integrals are left Riemann sums over grid nodes. With eps = m * step
the factor ds / eps becomes 1 / m, so

    (1/eps) * int_s^t g(r, r + eps) dr  ==  (1/m) * sum_{s <= t_k < t} g(t_k, t_k + eps)

with reads beyond the horizon clamped to the last node. Nothing here decides
convergence; that is left to the Monte Carlo layer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from RoughFlow.paths import Grid, GridPath

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpsSchedule:
    """Strictly decreasing regularization widths eps_i = steps[i] * grid.step."""
    grid: Grid
    steps: tuple[int, ...]

    def __post_init__(self) -> None:
        steps = tuple(int(m) for m in self.steps)
        if not steps:
            raise ValueError("EpsSchedule needs at least one level")
        if min(steps) < 1:
            raise ValueError(f"Every width must be a positive grid multiple, got {steps}")
        if any(a <= b for a, b in zip(steps, steps[1:])):
            raise ValueError(f"Widths must be strictly decreasing, got {steps}")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def dyadic(cls, grid: Grid, levels: int) -> "EpsSchedule":
        """m_i = 2^(K - i), i = 1..K."""
        return cls(grid, tuple(2 ** (levels - i) for i in range(1, levels + 1)))

    @classmethod
    def horizon_fractions(cls, grid: Grid, levels: int) -> "EpsSchedule":
        """eps_i = T * 2^-(i + 2), i = 1..K; the grid must resolve the finest level."""
        if grid.steps % 2 ** (levels + 2):
            raise ValueError(
                f"Grid with {grid.steps} steps cannot resolve eps = T/2^{levels + 2}; "
                "use a power-of-two grid at least that fine"
            )
        return cls(grid, tuple(grid.steps // 2 ** (i + 2) for i in range(1, levels + 1)))

    @property
    def eps(self) -> np.ndarray:
        return np.array(self.steps) * self.grid.step

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class EvalSeries:
    """Values of one functional on one path, per eps and requested time."""
    functional: str
    eps: list[float]
    times: list[float]
    values: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.values and len(self.values) != len(self.eps):
            raise ValueError("EvalSeries needs one value block per eps")
        for block in self.values:
            if not np.all(np.isfinite(block)):
                raise ValueError(f"{self.functional}: non-finite value in series")


def _check_same_grid(*paths: GridPath) -> Grid:
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise ValueError(f"Grid mismatch: {p.grid} vs {grid}")
    return grid


def _check_scalar(*paths: GridPath) -> None:
    for p in paths:
        if p.dim != 1:
            raise ValueError(f"Expected a scalar path, got dimension {p.dim}")


def window_span(grid: Grid, eps: float, t: float, s: float) -> tuple[int, int, int]:
    m = grid.eps_steps(eps)
    j = grid.index_of(s)
    k = grid.index_of(t)
    if j > k:
        raise ValueError(f"Integration start s={s} lies after t={t}")
    return m, j, k


def _riemann(integrand: np.ndarray, m: int, j: int, k: int) -> np.ndarray:
    """(1/m) * sum of integrand rows j..k-1."""
    return integrand[j:k].sum(axis=0) / m


def c_eps(X1: GridPath, X2: GridPath, eps: float, t: float, s: float = 0.0) -> float:
    """C(eps, X1, X2)(t): regularized covariation of two scalar paths."""
    grid = _check_same_grid(X1, X2)
    _check_scalar(X1, X2)
    m, j, k = window_span(grid, eps, t, s)
    prod = X1.increments(m)[:, 0] * X2.increments(m)[:, 0]
    return float(_riemann(prod, m, j, k))


def strong_sense_stat(X1: GridPath, X2: GridPath, eps: float, t: float, s: float = 0.0) -> float:
    """Absolute version of c_eps, bounded uniformly in eps for strong covariations."""
    grid = _check_same_grid(X1, X2)
    _check_scalar(X1, X2)
    m, j, k = window_span(grid, eps, t, s)
    prod = np.abs(X1.increments(m)[:, 0] * X2.increments(m)[:, 0])
    return float(_riemann(prod, m, j, k))


def cubic_variation_stat(X: GridPath, eps: float, t: float, s: float = 0.0) -> float:
    _check_scalar(X)
    m, j, k = window_span(X.grid, eps, t, s)
    return float(_riemann(np.abs(X.increments(m)[:, 0]) ** 3, m, j, k))


def covariation_matrix(X: GridPath, eps: float, t: float, s: float = 0.0) -> np.ndarray:
    """d x d matrix of mutual regularized covariations C(eps, X^i, X^j)(t)."""
    m, j, k = window_span(X.grid, eps, t, s)
    dx = X.increments(m)
    return np.einsum("ki,kj->ij", dx[j:k], dx[j:k]) / m


def scalar_qv(X: GridPath, eps: float, t: float, s: float = 0.0) -> float:
    """Regularized scalar quadratic variation with the Euclidean norm."""
    m, j, k = window_span(X.grid, eps, t, s)
    sq = np.sum(X.increments(m) ** 2, axis=1)
    return float(_riemann(sq, m, j, k))


def weighted_cov(H: GridPath, X1: GridPath, X2: GridPath, eps: float, t: float, s: float = 0.0) -> float:
    """(1/eps) int H_s (X1_{s+eps} - X1_s)(X2_{s+eps} - X2_s) ds."""
    grid = _check_same_grid(H, X1, X2)
    _check_scalar(H, X1, X2)
    m, j, k = window_span(grid, eps, t, s)
    prod = H.values[:-1, 0] * X1.increments(m)[:, 0] * X2.increments(m)[:, 0]
    return float(_riemann(prod, m, j, k))


def _matrix_integral(Y: GridPath, X: GridPath, eps: float, t: float, s: float, weight: str) -> np.ndarray:
    grid = _check_same_grid(Y, X)
    m, j, k = window_span(grid, eps, t, s)
    dx = X.increments(m)
    ahead = Y.at(np.arange(grid.steps) + m)
    if weight == "forward":
        y = Y.values[:-1]
    elif weight == "backward":
        y = ahead
    else:
        y = 0.5 * (Y.values[:-1] + ahead)
    return np.einsum("ki,kj->ij", y[j:k], dx[j:k]) / m


def forward_integral(Y: GridPath, X: GridPath, eps: float, t: float, s: float = 0.0) -> np.ndarray:
    """Regularized int_s^t Y (x) d^-X as an n x d matrix."""
    return _matrix_integral(Y, X, eps, t, s, "forward")


def backward_integral(Y: GridPath, X: GridPath, eps: float, t: float, s: float = 0.0) -> np.ndarray:
    """Regularized int_s^t Y (x) d^+X, weight Y_{s+eps}."""
    return _matrix_integral(Y, X, eps, t, s, "backward")


def symmetric_integral(Y: GridPath, X: GridPath, eps: float, t: float, s: float = 0.0) -> np.ndarray:
    """Regularized int_s^t Y (x) d°X, weight (Y_s + Y_{s+eps}) / 2."""
    return _matrix_integral(Y, X, eps, t, s, "symmetric")


def _integrand_blocks(Z: GridPath, X: GridPath) -> np.ndarray:
    """Reshape the flattened rows of Z into (N + 1, n, d) blocks."""
    _check_same_grid(Z, X)
    if Z.dim % X.dim:
        raise ValueError(f"Integrand width {Z.dim} is not a multiple of the driver dimension {X.dim}")
    return Z.values.reshape(Z.grid.steps + 1, Z.dim // X.dim, X.dim)


def ito_oracle(Z: GridPath, X: GridPath) -> GridPath:
    """Left-point sums sum_k Z_k . (X_{k+1} - X_k), accumulated per node."""
    blocks = _integrand_blocks(Z, X)
    dx = np.diff(X.values, axis=0)
    terms = np.einsum("kij,kj->ki", blocks[:-1], dx)
    out = np.zeros((X.grid.steps + 1, blocks.shape[1]))
    np.cumsum(terms, axis=0, out=out[1:])
    return GridPath(X.grid, out)


def strat_oracle(Z: GridPath, X: GridPath) -> GridPath:
    """Trapezoid sums sum_k (Z_k + Z_{k+1}) / 2 . (X_{k+1} - X_k)."""
    blocks = _integrand_blocks(Z, X)
    dx = np.diff(X.values, axis=0)
    mid = 0.5 * (blocks[:-1] + blocks[1:])
    terms = np.einsum("kij,kj->ki", mid, dx)
    out = np.zeros((X.grid.steps + 1, blocks.shape[1]))
    np.cumsum(terms, axis=0, out=out[1:])
    return GridPath(X.grid, out)


def evaluate_series(
    name: str,
    functional: Callable[..., float | np.ndarray],
    schedule: EpsSchedule,
    times: Sequence[float],
    *paths: GridPath,
) -> EvalSeries:
    """Evaluate `functional(*paths, eps, t)` over a schedule and a set of times."""
    values = [
        np.array([functional(*paths, eps, t) for t in times], dtype=float)
        for eps in schedule.eps
    ]
    logger.debug(f"Evaluated {name} on {len(schedule)} eps levels x {len(times)} times")
    return EvalSeries(name, [float(e) for e in schedule.eps], [float(t) for t in times], values)
