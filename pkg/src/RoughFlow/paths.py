"""
Uniform-grid paths: representation, seeded generators, Hölder seminorms.

Every process in RoughFlow lives on a uniform grid t_k = k * T / N. Reads past
either end of the grid are clamped to the boundary rows, which is the
continuity extension R_t := R_{t ∧ T} on a grid.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky, toeplitz

logger = logging.getLogger(__name__)

# Exact fBm factorizes an N x N covariance, keep N moderate.
FBM_MAX_STEPS = 4096
FBM_JITTER = 1e-12
DEFAULT_PAIR_BUDGET = 1_000_000

# Relative slack when checking that a time is a grid node.
_NODE_RTOL = 1e-9


class NonFiniteError(ValueError):
    """Raised when a generated or mapped path contains NaN or inf."""


@dataclass(frozen=True)
class Grid:
    """Uniform time grid on [0, horizon] with `steps` intervals."""
    steps: int
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"Grid needs at least 2 steps, got {self.steps}")
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError(f"Grid horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def step(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.steps + 1) * self.step
        t[-1] = self.horizon
        return t

    def index_of(self, t: float) -> int:
        """
        Index k with t_k == t.

        Raises:
            ValueError: If t is not a grid node.
        """
        k = int(round(t / self.step))
        if not 0 <= k <= self.steps or abs(k * self.step - t) > _NODE_RTOL * self.step:
            raise ValueError(f"t={t} is not a node of the grid (step {self.step})")
        return k

    def eps_steps(self, eps: float) -> int:
        """
        Number of grid steps m with eps == m * step.

        Raises:
            ValueError: If eps is not a positive integer multiple of the step.
        """
        m = int(round(eps / self.step))
        if m < 1 or abs(m * self.step - eps) > _NODE_RTOL * self.step:
            raise ValueError(f"eps={eps} is not a positive multiple of the grid step {self.step}")
        return m


@dataclass(frozen=True)
class Seed:
    """Master seed plus stream index; one stream per Monte Carlo path."""
    master: int
    stream: int = 0
    # independent sub-stream for a second process on the same path
    purpose: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master < 2**64:
            raise ValueError(f"Master seed must be a 64-bit unsigned integer, got {self.master}")
        if self.stream < 0:
            raise ValueError(f"Stream index must be non-negative, got {self.stream}")

    def substream(self, purpose: int) -> "Seed":
        return Seed(self.master, self.stream, purpose)

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.master, spawn_key=(self.stream, self.purpose))
        return np.random.Generator(np.random.PCG64(sequence))


@dataclass(frozen=True)
class GridPath:
    """
    A d-dimensional path sampled on a grid.

    `values` has shape (N + 1, d), row k holding X at t_k. The array is
    stored read-only so paths can be shared across workers.
    """
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] < 1:
            raise ValueError(f"Path values must be an (N+1) x d matrix, got shape {values.shape}")
        if values.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"Path has {values.shape[0]} rows but the grid has {self.grid.steps + 1} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("Path contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridPath":
        """Sample a deterministic path; `fn` maps the node array to values."""
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, k) -> np.ndarray:
        """Rows at index (or index array) k, clamped to [0, N]."""
        return self.values[np.clip(k, 0, self.grid.steps)]

    def increments(self, m: int) -> np.ndarray:
        """X_{k+m} - X_k for k = 0..N-1 with clamped reads, shape (N, d)."""
        k = np.arange(self.grid.steps)
        return self.at(k + m) - self.values[:-1]

    def component(self, i: int) -> "GridPath":
        return GridPath(self.grid, self.values[:, i])

    def reversed(self) -> "GridPath":
        """The time-reversed path t -> X_{T - t}."""
        return GridPath(self.grid, self.values[::-1])

    def scale(self, c: float) -> "GridPath":
        return GridPath(self.grid, c * self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_dim(d: int) -> None:
    if int(d) != d or d < 1:
        raise ValueError(f"Path dimension must be a positive integer, got {d}")


def _from_increments(grid: Grid, increments: np.ndarray) -> GridPath:
    values = np.zeros((grid.steps + 1, increments.shape[1]))
    np.cumsum(increments, axis=0, out=values[1:])
    return GridPath(grid, values)


def gen_bm(grid: Grid, d: int, seed: Seed) -> GridPath:
    """
    Standard d-dimensional Brownian motion started at 0.

    Increments are i.i.d. N(0, step * I_d) drawn from `seed`'s stream.
    """
    _check_dim(d)
    z = seed.generator().standard_normal((grid.steps, d))
    return _from_increments(grid, np.sqrt(grid.step) * z)


@functools.lru_cache(maxsize=4)
def _fbm_factor(steps: int, horizon: float, hurst: float) -> np.ndarray:
    """Lower Cholesky factor of the fractional Gaussian noise covariance."""
    step = horizon / steps
    lag = np.arange(steps, dtype=float)
    two_h = 2.0 * hurst
    autocov = 0.5 * ((lag + 1) ** two_h + np.abs(lag - 1) ** two_h - 2.0 * lag ** two_h)
    cov = step ** two_h * toeplitz(autocov)
    try:
        factor = cholesky(cov, lower=True)
    except LinAlgError:
        logger.warning(
            f"fBm covariance not positive definite (N={steps}, H={hurst}); "
            f"retrying with jitter {FBM_JITTER}"
        )
        try:
            factor = cholesky(cov + FBM_JITTER * np.eye(steps), lower=True)
        except LinAlgError as exc:
            raise ValueError(f"fBm covariance factorization failed for N={steps}, H={hurst}") from exc
    factor.setflags(write=False)
    return factor


def gen_fbm(
    grid: Grid,
    hurst: float,
    d: int,
    seed: Seed,
    max_steps: int = FBM_MAX_STEPS,
) -> GridPath:
    """
    Fractional Brownian motion with independent components, exact in law.

    The increment covariance is factorized once per (grid, H) and shared by
    all streams. Gaussian draws are consumed in the same order as gen_bm, so
    H = 0.5 reproduces the Brownian path of the same seed.

    Raises:
        ValueError: If H is outside (0, 1), the grid exceeds `max_steps`, or
            the covariance cannot be factorized.
    """
    _check_dim(d)
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")
    if grid.steps > max_steps:
        raise ValueError(
            f"Exact fBm sampling is limited to {max_steps} steps, grid has {grid.steps}"
        )
    factor = _fbm_factor(grid.steps, grid.horizon, float(hurst))
    z = seed.generator().standard_normal((grid.steps, d))
    return _from_increments(grid, factor @ z)


def gen_semimartingale(
    grid: Grid,
    d: int,
    drift: Callable[[float, np.ndarray], np.ndarray],
    vol: Callable[[float, np.ndarray], np.ndarray],
    seed: Seed,
    x0: Optional[np.ndarray] = None,
) -> GridPath:
    """
    Euler-Maruyama path X_{k+1} = X_k + b(t_k, X_k) step + sigma(t_k, X_k) dB_k.

    `vol` returns a d x q matrix; the driving noise is q-dimensional and uses
    the same draws as gen_bm(grid, q, seed).

    Raises:
        NonFiniteError: If the scheme produces NaN or inf.
    """
    _check_dim(d)
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).reshape(d)
    t = grid.nodes
    q = np.atleast_2d(vol(t[0], x)).shape[1]
    db = np.sqrt(grid.step) * seed.generator().standard_normal((grid.steps, q))

    values = np.empty((grid.steps + 1, d))
    values[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.steps):
            b = np.asarray(drift(t[k], x), dtype=float).reshape(d)
            sigma = np.atleast_2d(vol(t[k], x))
            x = x + b * grid.step + sigma @ db[k]
            values[k + 1] = x
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("Euler-Maruyama scheme produced non-finite values")
    return GridPath(grid, values)


def sampled_lags(steps: int, pair_budget: int) -> np.ndarray:
    if (steps + 1) ** 2 <= pair_budget:
        return np.arange(1, steps + 1)
    lags = 2 ** np.arange(int(np.log2(steps)) + 1)
    return np.unique(np.append(lags[lags <= steps], steps))


def holder_seminorm(X: GridPath, alpha: float, pair_budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """
    Estimate sup |X_t - X_s| / |t - s|^alpha over grid pairs.

    All pairs are scanned when (N + 1)^2 fits in `pair_budget`; otherwise
    dyadic lags 1, 2, 4, ..., N over every start index.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    best = 0.0
    for m in sampled_lags(X.grid.steps, pair_budget):
        diffs = np.linalg.norm(X.values[m:] - X.values[:-m], axis=1)
        best = max(best, float(diffs.max()) / (m * X.grid.step) ** alpha)
    return best


def apply_fn(
    X: GridPath,
    f: Callable[[np.ndarray], float],
    grad_f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    vectorized: bool = False,
) -> GridPath | tuple[GridPath, GridPath]:
    """
    Map Y_k = f(X_k) node by node.

    With `vectorized`, f and grad_f receive the whole (N + 1, d) value matrix
    and must return shapes (N + 1,) and (N + 1, d). When grad_f is given the
    gradient path (grad f)(X_k) is returned alongside Y.

    Raises:
        NonFiniteError: If f or grad_f is not finite on the path.
    """
    if vectorized:
        y = np.asarray(f(X.values), dtype=float).reshape(-1)
    else:
        y = np.array([f(row) for row in X.values], dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("Mapped path contains non-finite values")
    Y = GridPath(X.grid, y)
    if grad_f is None:
        return Y

    if vectorized:
        g = np.asarray(grad_f(X.values), dtype=float).reshape(X.values.shape)
    else:
        g = np.array([np.asarray(grad_f(row), dtype=float).reshape(X.dim) for row in X.values])
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("Gradient path contains non-finite values")
    return Y, GridPath(X.grid, g)
