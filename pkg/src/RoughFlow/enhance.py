"""
Second-order process of a grid path.

The two-parameter field XX_{s,t} ~ int_s^t (X_r - X_s) (x) dX_r is never
tabulated. Only the one-parameter iterated integral I_t = int_0^t X (x) dX is
stored, and blocks are rebuilt on demand through Chen's relation

    XX_{s,t} = I_t - I_s - X_s (x) (X_t - X_s),

so Chen's relation holds by construction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from RoughFlow.paths import DEFAULT_PAIR_BUDGET, GridPath, sampled_lags

logger = logging.getLogger(__name__)

Flavor = Literal["ito", "strat"]
Extension = Literal["symmetric", "chen"]


@dataclass(frozen=True)
class EnhancedPath:
    """A base path together with its iterated integral I, shape (N + 1, d, d)."""
    base: GridPath
    flavor: Flavor
    iterated: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        iterated = np.array(self.iterated, dtype=float)
        d = self.base.dim
        if iterated.shape != (self.base.grid.steps + 1, d, d):
            raise ValueError(f"Iterated integral has shape {iterated.shape}, expected (N+1, {d}, {d})")
        if not np.all(np.isfinite(iterated)):
            raise ValueError("Iterated integral contains non-finite values")
        iterated.setflags(write=False)
        object.__setattr__(self, "iterated", iterated)

    @property
    def grid(self):
        return self.base.grid

    @property
    def dim(self) -> int:
        return self.base.dim

    def blocks(self, j, k) -> np.ndarray:
        """
        XX_{t_j, t_k} for index arrays j, k (clamped), shape (..., d, d).

        The formula is applied as is for every ordering of j and k, which for
        j > k gives the extension of XX through Chen's relation.
        """
        n = self.grid.steps
        j = np.clip(j, 0, n)
        k = np.clip(k, 0, n)
        x = self.base.values
        return self.iterated[k] - self.iterated[j] - np.einsum("...i,...j->...ij", x[j], x[k] - x[j])


@dataclass(frozen=True)
class SecondOrderBlock:
    """One block XX_{t_start, t_end}."""
    start: int
    end: int
    matrix: np.ndarray


def enhance(X: GridPath, flavor: Flavor = "strat") -> EnhancedPath:
    """
    Discrete Itô (left point) or Stratonovich (trapezoid) enhancement of X.

        ito:   I_{k+1} = I_k + X_k (x) dX_k
        strat: I_{k+1} = I_k + (X_k + X_{k+1}) / 2 (x) dX_k
    """
    if flavor not in ("ito", "strat"):
        raise ValueError(f"Unknown enhancement flavor: {flavor}")
    x = X.values
    dx = np.diff(x, axis=0)
    weight = x[:-1] if flavor == "ito" else 0.5 * (x[:-1] + x[1:])
    iterated = np.zeros((X.grid.steps + 1, X.dim, X.dim))
    np.cumsum(np.einsum("ki,kj->kij", weight, dx), axis=0, out=iterated[1:])
    return EnhancedPath(X, flavor, iterated)


def reversed_enhancement(E: EnhancedPath) -> EnhancedPath:
    """Enhancement of the time-reversed base path, in the same flavor."""
    return enhance(E.base.reversed(), E.flavor)


def xx_block(E: EnhancedPath, j: int, k: int, extension: Extension = "symmetric") -> SecondOrderBlock:
    """
    Rebuild XX_{t_j, t_k}.

    For j > k the default is the symmetric extension XX_{t_j,t_k} := XX_{t_k,t_j};
    `extension="chen"` instead continues Chen's relation,
    XX_{t_j,t_k} = -XX_{t_k,t_j} + dX dX^T.
    """
    n = E.grid.steps
    if not (0 <= j <= n and 0 <= k <= n):
        raise ValueError(f"Block indices ({j}, {k}) outside the grid 0..{n}")
    if j == k:
        return SecondOrderBlock(j, k, np.zeros((E.dim, E.dim)))
    if j > k and extension == "symmetric":
        return SecondOrderBlock(k, j, E.blocks(k, j))
    return SecondOrderBlock(j, k, E.blocks(j, k))


def direct_block(X: GridPath, flavor: Flavor, j: int, k: int) -> np.ndarray:
    """Accumulate sum over [t_j, t_k) of (X - X_{t_j}) (x) dX directly, without I."""
    x = X.values
    out = np.zeros((X.dim, X.dim))
    for i in range(j, k):
        left = x[i] if flavor == "ito" else 0.5 * (x[i] + x[i + 1])
        out += np.outer(left - x[j], x[i + 1] - x[i])
    return out


def chen_residual(
    E: EnhancedPath,
    j: int,
    m: int,
    k: int,
    xx: Optional[Callable[[int, int], np.ndarray]] = None,
) -> float:
    """
    Max-norm of -XX_{m,k} + XX_{j,k} - XX_{j,m} - (X_m - X_j)(X_k - X_m)^T.

    `xx` replaces the block source, e.g. with an externally supplied table.
    """
    if not j <= m <= k:
        raise ValueError(f"Chen triple must be ordered, got ({j}, {m}, {k})")
    xx = xx or (lambda a, b: xx_block(E, a, b).matrix)
    x = E.base.values
    lhs = -xx(m, k) + xx(j, k) - xx(j, m)
    return float(np.max(np.abs(lhs - np.outer(x[m] - x[j], x[k] - x[m]))))


def sym_anti(block: SecondOrderBlock | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a block into its symmetric and antisymmetric parts."""
    mat = block.matrix if isinstance(block, SecondOrderBlock) else np.asarray(block, dtype=float)
    return 0.5 * (mat + mat.T), 0.5 * (mat - mat.T)


def geometric_defect(E: EnhancedPath, j: int, k: int) -> float:
    """Max-norm of sym(XX_{j,k}) - dX dX^T / 2; zero for geometric enhancements."""
    sym, _ = sym_anti(xx_block(E, j, k))
    dx = E.base.values[max(j, k)] - E.base.values[min(j, k)]
    return float(np.max(np.abs(sym - 0.5 * np.outer(dx, dx))))


def holder2_norm(E: EnhancedPath, beta: float, pair_budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """
    Estimate sup |XX_{s,t}| / |t - s|^beta (entrywise max-norm) over sampled pairs.

    Lags are sampled as in holder_seminorm.
    """
    if beta <= 0:
        raise ValueError(f"Two-parameter Hölder exponent must be positive, got {beta}")
    n = E.grid.steps
    best = 0.0
    for m in sampled_lags(n, pair_budget):
        j = np.arange(n - m + 1)
        norms = np.max(np.abs(E.blocks(j, j + m)), axis=(1, 2))
        best = max(best, float(norms.max()) / (m * E.grid.step) ** beta)
    return best
