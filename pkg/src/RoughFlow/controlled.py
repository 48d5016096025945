"""
Stochastically controlled pairs (Y, Y') and their Gubinelli derivatives.

Y' is stored at left endpoints, one n x d matrix per node, and the remainder
is defined by

    Y_t - Y_s = Y'_s (X_t - X_s) + R_{s,t}.

Pairs are built constructively (zero derivative, gradient of a function of X,
stochastic integrals against X); no projection onto the martingale part is
ever computed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from RoughFlow.paths import DEFAULT_PAIR_BUDGET, GridPath, apply_fn, sampled_lags
from RoughFlow.regularization import c_eps, ito_oracle, window_span

logger = logging.getLogger(__name__)

PairLabel = Literal["zero", "gradient", "integrand", "custom"]

# Finite-difference check of user supplied gradients.
GRADIENT_CHECK_STEP = 1e-5
GRADIENT_CHECK_RTOL = 1e-4
GRADIENT_CHECK_NODES = 10


@dataclass(frozen=True)
class ControlledPair:
    """Y (n-dim) controlled by X (d-dim) with derivative Yprime of shape (N + 1, n, d)."""
    Y: GridPath
    Yprime: np.ndarray = field(repr=False)
    X: GridPath = field(repr=False)
    label: PairLabel = "custom"

    def __post_init__(self) -> None:
        if self.Y.grid != self.X.grid:
            raise ValueError(f"Grid mismatch between Y ({self.Y.grid}) and X ({self.X.grid})")
        yprime = np.array(self.Yprime, dtype=float)
        expected = (self.X.grid.steps + 1, self.Y.dim, self.X.dim)
        if yprime.shape != expected:
            raise ValueError(f"Gubinelli derivative has shape {yprime.shape}, expected {expected}")
        if not np.all(np.isfinite(yprime)):
            raise ValueError("Gubinelli derivative contains non-finite values")
        yprime.setflags(write=False)
        object.__setattr__(self, "Yprime", yprime)

    @property
    def grid(self):
        return self.X.grid

    def remainders(self, j, k) -> np.ndarray:
        """R_{t_j, t_k} for index arrays (clamped), shape (..., n)."""
        n = self.grid.steps
        j = np.clip(j, 0, n)
        k = np.clip(k, 0, n)
        dy = self.Y.values[k] - self.Y.values[j]
        dx = self.X.values[k] - self.X.values[j]
        return dy - np.einsum("...ij,...j->...i", self.Yprime[j], dx)


def remainder(P: ControlledPair, j: int, k: int) -> np.ndarray:
    """R^Y_{t_j, t_k} = (Y_k - Y_j) - Y'_j (X_k - X_j)."""
    if j > k:
        raise ValueError(f"Remainder needs j <= k, got ({j}, {k})")
    return P.remainders(j, k)


def orthogonality_sums(P: ControlledPair, eps: float, t: float, s: float = 0.0) -> np.ndarray:
    """(1/eps) int_s^t R_{r,r+eps} (x) (X_{r+eps} - X_r) dr as an n x d matrix."""
    m, j, k = window_span(P.grid, eps, t, s)
    idx = np.arange(j, k)
    rem = P.remainders(idx, idx + m)
    dx = P.X.at(idx + m) - P.X.values[idx]
    return np.einsum("ki,kj->ij", rem, dx) / m


def orthogonality_stat(P: ControlledPair, eps: float, t: float, s: float = 0.0) -> float:
    """Largest absolute entry of orthogonality_sums; vanishes in the limit for controlled pairs."""
    return float(np.max(np.abs(orthogonality_sums(P, eps, t, s))))


def remainder_holder_norm(P: ControlledPair, exponent: float, pair_budget: int = DEFAULT_PAIR_BUDGET) -> float:
    """
    Estimate sup |R_{s,t}| / |t - s|^exponent (max over rows) over sampled pairs.

    With exponent = 2 gamma this is the two-parameter norm that makes (Y, Y')
    controlled by a gamma-Hölder X. Lags are sampled as in holder_seminorm.
    """
    if exponent <= 0:
        raise ValueError(f"Remainder Hölder exponent must be positive, got {exponent}")
    n = P.grid.steps
    best = 0.0
    for m in sampled_lags(n, pair_budget):
        j = np.arange(n - m + 1)
        norms = np.max(np.abs(P.remainders(j, j + m)), axis=1)
        best = max(best, float(norms.max()) / (m * P.grid.step) ** exponent)
    return best


def pair_zero(Y: GridPath, X: GridPath) -> ControlledPair:
    """Y controlled with the zero derivative (Young / orthogonal regime)."""
    return ControlledPair(Y, np.zeros((X.grid.steps + 1, Y.dim, X.dim)), X, "zero")


def _check_gradient(
    f: Callable, grad: np.ndarray, X: GridPath, vectorized: bool, rtol: float
) -> None:
    nodes = np.unique(np.linspace(0, X.grid.steps, GRADIENT_CHECK_NODES).astype(int))
    h = GRADIENT_CHECK_STEP
    for k in nodes:
        x = X.values[k]
        for i in range(X.dim):
            bump = np.zeros(X.dim)
            bump[i] = h
            pts = np.stack([x + bump, x - bump])
            vals = np.asarray(f(pts), dtype=float).reshape(2) if vectorized else np.array([f(p) for p in pts])
            fd = (vals[0] - vals[1]) / (2 * h)
            if abs(fd - grad[k, i]) > rtol * max(1.0, abs(grad[k, i])):
                raise ValueError(
                    f"Gradient inconsistent with function at node {k}, component {i}: "
                    f"finite difference {fd:.6g} vs supplied {grad[k, i]:.6g}"
                )


def pair_gradient(
    f: Callable,
    grad_f: Callable,
    X: GridPath,
    vectorized: bool = False,
    check_rtol: float = GRADIENT_CHECK_RTOL,
) -> ControlledPair:
    """
    Y = f(X) with derivative Y' = (grad f)^T(X).

    Raises:
        ValueError: If grad_f disagrees with central finite differences of f.
    """
    Y, G = apply_fn(X, f, grad_f, vectorized=vectorized)
    _check_gradient(f, G.values, X, vectorized, check_rtol)
    return ControlledPair(Y, G.values[:, None, :], X, "gradient")


def pair_integrand(Z: GridPath, X: GridPath) -> ControlledPair:
    """Y = int Z . dX (left-point sums) with derivative Y' = Z^T."""
    if Z.dim != X.dim:
        raise ValueError(f"Integrand dimension {Z.dim} does not match driver dimension {X.dim}")
    return ControlledPair(ito_oracle(Z, X), Z.values[:, None, :], X, "integrand")


def pair_custom(Y: GridPath, Yprime: np.ndarray, X: GridPath) -> ControlledPair:
    return ControlledPair(Y, np.asarray(Yprime, dtype=float).reshape(X.grid.steps + 1, Y.dim, X.dim), X, "custom")


def add_pairs(P: ControlledPair, Q: ControlledPair) -> ControlledPair:
    """Sum of two pairs controlled by the same X."""
    if P.X.grid != Q.X.grid or not np.array_equal(P.X.values, Q.X.values):
        raise ValueError("Pairs must share the same reference path")
    Y = GridPath(P.grid, P.Y.values + Q.Y.values)
    return ControlledPair(Y, P.Yprime + Q.Yprime, P.X, "custom")


def perturb_derivative(P: ControlledPair, scale: float = 1.0, shift: float = 0.0) -> ControlledPair:
    """Same Y with derivative scale * Y' + shift, e.g. for fault injection."""
    return ControlledPair(P.Y, scale * P.Yprime + shift, P.X, "custom")


def gubinelli_bracket_check(
    P: ControlledPair, eps: float, t: float, s: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """
    Both sides of [Y, X]_t = int_0^t Y'_s d[X, X]_s as n x d matrices.

    lhs entries are c_eps(Y^i, X^j, eps, t); rhs is the Stieltjes sum of Y'
    against the discrete brackets dX^l dX^j on the grid.
    """
    _, j, k = window_span(P.grid, eps, t, s)
    lhs = np.array([
        [c_eps(P.Y.component(i), P.X.component(c), eps, t, s) for c in range(P.X.dim)]
        for i in range(P.Y.dim)
    ])
    dx = np.diff(P.X.values, axis=0)[j:k]
    rhs = np.einsum("kil,kl,kj->ij", P.Yprime[j:k], dx, dx)
    return lhs, rhs
