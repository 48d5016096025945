"""
Convergence statistics for Monte Carlo identity checks.

Each identity produces one non-negative error per path and per eps. The
report summarizes the error distribution per eps and decides a verdict from
the finest-level statistic and the log-log decay slope.
"""
from __future__ import annotations

import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger(__name__)

# Medians below this are treated as exact zeros; no slope is fitted then.
EXACT_FLOOR = 1e-13
# Share of paths allowed to be dropped for non-finite errors.
MAX_EXCLUDED_FRACTION = 0.01

Statistic = Literal["median", "mean"]


class ConvergenceReport(BaseModel):
    """Per-eps error distribution and verdict for one identity."""
    identity: str
    description: str = ""
    eps: list[float]
    median: list[float]
    mean: list[float]
    q10: list[float]
    q90: list[float]
    samples: int
    excluded: int = 0
    statistic: Statistic = "median"
    final_tol: Optional[float] = None
    slope_min: Optional[float] = None
    slope: Optional[float] = None
    passed: bool
    # Diagnostics (gating=False) keep their own verdict out of the run verdict.
    gating: bool = True

    @property
    def final(self) -> float:
        """The verdict statistic at the finest eps."""
        return (self.median if self.statistic == "median" else self.mean)[-1]


def loglog_slope(eps: np.ndarray, values: np.ndarray) -> Optional[float]:
    """
    Least-squares slope of log(values) against log(eps).

    Returns None when fewer than three levels are given or any value is at
    the exactness floor.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(eps) < 3 or np.any(values <= EXACT_FLOOR):
        return None
    slope, _ = np.polyfit(np.log(eps), np.log(values), 1)
    return float(slope)


def decide(
    final: float,
    slope: Optional[float],
    final_tol: Optional[float],
    slope_min: Optional[float],
) -> bool:
    """Pass iff the finest statistic is below final_tol and the decay is steep enough."""
    if final_tol is not None and not final < final_tol:
        return False
    if slope_min is not None and slope is not None and not slope > slope_min:
        return False
    return True


def build_report(
    identity: str,
    errors: np.ndarray,
    eps: np.ndarray,
    final_tol: Optional[float] = None,
    slope_min: Optional[float] = None,
    statistic: Statistic = "median",
    description: str = "",
    gating: bool = True,
) -> ConvergenceReport:
    """
    Summarize an (M, K) error matrix, rows in path order, columns in eps order.

    Rows with any non-finite entry are excluded; more than 1% exclusions fail
    the identity regardless of the remaining statistics.
    """
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    eps = np.asarray(eps, dtype=float)
    if errors.shape[1] != len(eps):
        raise ValueError(f"{identity}: {errors.shape[1]} error columns for {len(eps)} eps levels")

    finite = np.all(np.isfinite(errors), axis=1)
    excluded = int((~finite).sum())
    kept = errors[finite]
    if excluded:
        logger.warning(f"{identity}: excluded {excluded} of {len(errors)} paths with non-finite errors")
    if len(kept) == 0:
        nan = [float("nan")] * len(eps)
        return ConvergenceReport(
            identity=identity, description=description, eps=eps.tolist(),
            median=nan, mean=nan, q10=nan, q90=nan, samples=0, excluded=excluded,
            statistic=statistic, final_tol=final_tol, slope_min=slope_min, passed=False, gating=gating,
        )

    median = np.median(kept, axis=0)
    mean = kept.mean(axis=0)
    q10, q90 = np.quantile(kept, [0.1, 0.9], axis=0)
    centre = median if statistic == "median" else mean
    slope = loglog_slope(eps, centre) if slope_min is not None else None

    passed = decide(float(centre[-1]), slope, final_tol, slope_min)
    if excluded > MAX_EXCLUDED_FRACTION * len(errors):
        passed = False

    logger.info(
        f"{identity}: final {statistic} {centre[-1]:.3e}"
        + (f", slope {slope:.3f}" if slope is not None else "")
        + f" -> {'PASS' if passed else 'FAIL'}"
        + ("" if gating else " (diagnostic)")
    )
    return ConvergenceReport(
        identity=identity,
        description=description,
        eps=eps.tolist(),
        median=median.tolist(),
        mean=mean.tolist(),
        q10=q10.tolist(),
        q90=q90.tolist(),
        samples=len(kept),
        excluded=excluded,
        statistic=statistic,
        final_tol=final_tol,
        slope_min=slope_min,
        slope=slope,
        passed=passed,
        gating=gating,
    )
