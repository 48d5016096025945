"""
Rough stochastic integral via regularization, its backward variant, the
time-reversal identity and a dyadic sewing integrator.

Everything is driven by the germ

    A_{s,t} = Y_s (X_t - X_s)^T + Y'_s XX_{s,t},

bound to one controlled pair and one enhanced path. The regularized integral
averages A over windows of width eps; the sewing integrator sums A over dyadic
partitions. Their agreement is what the Monte Carlo presets check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from RoughFlow.controlled import ControlledPair
from RoughFlow.enhance import EnhancedPath, reversed_enhancement
from RoughFlow.paths import GridPath, sampled_lags
from RoughFlow.regularization import EpsSchedule, window_span

logger = logging.getLogger(__name__)

BackwardGerm = Literal["reflected", "display"]

DEFAULT_TRIPLE_BUDGET = 200_000
DEFAULT_SEWING_TOL = 1e-8
DEFAULT_SEWING_MAX_LEVEL = 30


def delta1(f: GridPath | np.ndarray) -> Callable:
    """(delta_1 f)_{j,k} = f_{t_k} - f_{t_j}, evaluated lazily for index arrays."""
    values = f.values if isinstance(f, GridPath) else np.asarray(f, dtype=float)

    def increment(j, k):
        return values[k] - values[j]

    return increment


def delta2(g: Callable) -> Callable:
    """(delta_2 g)_{j,m,k} = -g_{m,k} + g_{j,k} - g_{j,m}."""

    def increment(j, m, k):
        return -g(m, k) + g(j, k) - g(j, m)

    return increment


@dataclass(frozen=True)
class Germ:
    """A_{t_j,t_k} = Y_j (X_k - X_j)^T + Y'_j XX_{j,k}, shape (..., n, d)."""
    pair: ControlledPair
    enhanced: EnhancedPath = field(repr=False)

    def __post_init__(self) -> None:
        if self.pair.grid != self.enhanced.grid or not np.array_equal(
            self.pair.X.values, self.enhanced.base.values
        ):
            raise ValueError("Controlled pair and enhanced path must share the same driver")

    def __call__(self, j, k) -> np.ndarray:
        n = self.pair.grid.steps
        j = np.clip(j, 0, n)
        k = np.clip(k, 0, n)
        x = self.pair.X.values
        first = np.einsum("...i,...j->...ij", self.pair.Y.values[j], x[k] - x[j])
        return first + self.second_order(j, k)

    def second_order(self, j, k) -> np.ndarray:
        """The compensation Y'_j XX_{j,k} alone."""
        n = self.pair.grid.steps
        j = np.clip(j, 0, n)
        return self.pair.Yprime[j] @ self.enhanced.blocks(j, k)


def _window_sum(terms: np.ndarray, m: int) -> np.ndarray:
    return terms.sum(axis=0) / m


def rough_integral_reg(
    P: ControlledPair, E: EnhancedPath, eps: float, t: float, s: float = 0.0
) -> np.ndarray:
    """
    (1/eps) int_s^t (Y_r X_{r,r+eps}^T + Y'_r XX_{r,r+eps}) dr.

    Returns an n x d matrix, the row vector (1 x d) for scalar Y.
    """
    germ = Germ(P, E)
    m, j, k = window_span(P.grid, eps, t, s)
    idx = np.arange(j, k)
    return _window_sum(germ(idx, idx + m), m) if k > j else np.zeros((P.Y.dim, P.X.dim))


def rough_integral_path(P: ControlledPair, E: EnhancedPath, eps: float) -> np.ndarray:
    """Regularized rough integral at every node via one prefix sum, shape (N + 1, n, d)."""
    germ = Germ(P, E)
    m = P.grid.eps_steps(eps)
    idx = np.arange(P.grid.steps)
    out = np.zeros((P.grid.steps + 1, P.Y.dim, P.X.dim))
    np.cumsum(germ(idx, idx + m) / m, axis=0, out=out[1:])
    return out


def second_order_term(
    P: ControlledPair, E: EnhancedPath, eps: float, t: float, s: float = 0.0
) -> np.ndarray:
    """(1/eps) int_s^t Y'_r XX_{r,r+eps} dr, the part of the rough integral beyond the forward one."""
    germ = Germ(P, E)
    m, j, k = window_span(P.grid, eps, t, s)
    idx = np.arange(j, k)
    return _window_sum(germ.second_order(idx, idx + m), m) if k > j else np.zeros((P.Y.dim, P.X.dim))


def _backward_terms(germ: Germ, idx: np.ndarray, m: int, mode: BackwardGerm) -> np.ndarray:
    pair, enhanced = germ.pair, germ.enhanced
    n = pair.grid.steps
    ahead = np.clip(idx + m, 0, n)
    dx = pair.X.values[ahead] - pair.X.values[np.clip(idx, 0, n)]
    first = np.einsum("...i,...j->...ij", pair.Y.values[ahead], dx)
    if mode == "reflected":
        # -A_{s+eps,s} with XX_{s+eps,s} continued through Chen's relation
        return first - pair.Yprime[ahead] @ enhanced.blocks(ahead, idx)
    return first + pair.Yprime[ahead] @ enhanced.blocks(idx, ahead)


def rough_integral_backward(
    P: ControlledPair,
    E: EnhancedPath,
    eps: float,
    t: float,
    s: float = 0.0,
    germ: BackwardGerm = "reflected",
) -> np.ndarray:
    """
    Backward rough integral with weights taken at the right end of each window.

    The default `germ="reflected"` averages -A_{r+eps,r} = Y_{r+eps} X_{r,r+eps}^T
    - Y'_{r+eps} XX_{r+eps,r}, the germ seen from the right endpoint with XX
    continued through Chen's relation. `germ="display"` uses the weight
    Y'_{r+eps} XX_{r,r+eps} instead.
    """
    if germ not in ("reflected", "display"):
        raise ValueError(f"Unknown backward germ: {germ}")
    g = Germ(P, E)
    m, j, k = window_span(P.grid, eps, t, s)
    if k == j:
        return np.zeros((P.Y.dim, P.X.dim))
    return _window_sum(_backward_terms(g, np.arange(j, k), m, germ), m)


def reversed_pair(P: ControlledPair) -> ControlledPair:
    """(Y_{T-t}, Y'_{T-t}) controlled by X_{T-t}."""
    return ControlledPair(P.Y.reversed(), P.Yprime[::-1], P.X.reversed(), P.label)


def time_reversal_discrepancies(
    P: ControlledPair, E: EnhancedPath, t: float, schedule: EpsSchedule
) -> np.ndarray:
    """
    Per-eps max-norm gap between the backward integral on [0, t] and minus the
    forward integral of the reversed pair.

    The reversed side is integrated over the image of [0, t] under the grid
    change of variables r -> T - eps - r, with reads before time 0 clamped to
    the first node. The two sides then agree to rounding for the Stratonovich
    enhancement. Integrating the reversed side over the literal window
    [T - t, T] instead leaves an O(eps) gap from the window ends (median near
    1.5e-2 at N = 2^12); that boundary term is not part of the reversal and
    is excluded here.
    """
    n = P.grid.steps
    k_t = P.grid.index_of(t)
    germ_hat = Germ(reversed_pair(P), reversed_enhancement(E))
    out = []
    for eps in schedule.eps:
        m = P.grid.eps_steps(eps)
        lhs = rough_integral_backward(P, E, eps, t)
        idx = np.arange(n - k_t - m + 1, n - m + 1)
        rhs = -_window_sum(germ_hat(idx, idx + m), m) if k_t else np.zeros_like(lhs)
        out.append(float(np.max(np.abs(lhs - rhs))))
    return np.array(out)


def time_reversal_check(
    P: ControlledPair, E: EnhancedPath, t: float, schedule: Optional[EpsSchedule] = None
) -> float:
    """Largest time-reversal discrepancy over the eps schedule."""
    if schedule is None:
        schedule = EpsSchedule.dyadic(P.grid, min(4, int(np.log2(P.grid.steps))))
    return float(np.max(time_reversal_discrepancies(P, E, t, schedule)))


@dataclass(frozen=True)
class SewingResult:
    """Sewing value at one node, with the refinement history."""
    value: np.ndarray
    levels: int
    delta: float
    converged: bool
    deltas: tuple[float, ...] = ()


def sewing_integral(
    P: ControlledPair,
    E: EnhancedPath,
    t: float,
    tol: float = DEFAULT_SEWING_TOL,
    max_level: int = DEFAULT_SEWING_MAX_LEVEL,
) -> SewingResult:
    """
    Sum the germ over dyadic partitions of [0, t] until successive levels agree.

    Level L uses segments of 2^(J - L) grid steps, J = ceil(log2(k_t)), with a
    final ragged segment ending at t. Refinement stops when the change drops
    below `tol` or the grid resolution / `max_level` is reached; in the latter
    case the finest sum is still returned with `converged=False`.
    """
    if tol <= 0:
        raise ValueError(f"Sewing tolerance must be positive, got {tol}")
    germ = Germ(P, E)
    k_t = P.grid.index_of(t)
    if k_t == 0:
        return SewingResult(np.zeros((P.Y.dim, P.X.dim)), 0, 0.0, True)

    top = int(np.ceil(np.log2(k_t)))
    last_level = min(top, max_level)
    previous: Optional[np.ndarray] = None
    deltas: list[float] = []
    for level in range(last_level + 1):
        h = 2 ** (top - level)
        points = np.append(np.arange(0, k_t, h), k_t)
        value = germ(points[:-1], points[1:]).sum(axis=0)
        if previous is not None:
            deltas.append(float(np.max(np.abs(value - previous))))
            logger.debug(f"Sewing level {level}: delta {deltas[-1]:.3e}")
            if deltas[-1] < tol:
                return SewingResult(value, level, deltas[-1], True, tuple(deltas))
        previous = value

    delta = deltas[-1] if deltas else 0.0
    converged = delta < tol
    if not converged:
        logger.warning(
            f"Sewing tolerance {tol:g} not reached at level {last_level} (delta {delta:.3e}); "
            "returning the finest partition sum"
        )
    return SewingResult(previous, last_level, delta, converged, tuple(deltas))


def _triples(steps: int, budget: int):
    """Yield (gap1, gap2) pairs to scan; all of them when the budget allows."""
    if steps ** 3 // 6 <= budget:
        gaps = np.arange(1, steps + 1)
    else:
        gaps = sampled_lags(steps, 0)
    for a in gaps:
        for b in gaps:
            if a + b <= steps:
                yield int(a), int(b)


def delta2_germ_norm(
    P: ControlledPair,
    E: EnhancedPath,
    rho: float,
    beta: float,
    triple_budget: int = DEFAULT_TRIPLE_BUDGET,
) -> float:
    """
    Computable stand-in for the three-parameter regularity of delta_2 A.

    The two summands of delta_2 A_{j,m,k} = -R_{j,m} (delta_1 X)^T_{m,k}
    - (delta_1 Y')_{j,m} XX_{m,k} are scanned separately for
    sup |.| / (|t_m - t_j|^rho |t_k - t_j|^beta) and the two suprema added.
    """
    n = P.grid.steps
    step = P.grid.step
    x = P.X.values
    sup_rem, sup_der = 0.0, 0.0
    for a, b in _triples(n, triple_budget):
        j = np.arange(n - a - b + 1)
        m, k = j + a, j + a + b
        scale = (a * step) ** rho * ((a + b) * step) ** beta
        rem = np.einsum("...i,...j->...ij", P.remainders(j, m), x[k] - x[m])
        der = (P.Yprime[m] - P.Yprime[j]) @ E.blocks(m, k)
        sup_rem = max(sup_rem, float(np.max(np.abs(rem))) / scale)
        sup_der = max(sup_der, float(np.max(np.abs(der))) / scale)
    return sup_rem + sup_der
