"""
Workflow orchestration engine for RoughFlow.
Runs Monte Carlo experiments and the bundled verification presets.
"""
from __future__ import annotations

import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Optional

import numpy as np
from pydantic import BaseModel, Field

from RoughFlow import __version__
from RoughFlow.config import ExperimentConfig
from RoughFlow.convergence import MAX_EXCLUDED_FRACTION, ConvergenceReport, build_report
from RoughFlow.paths import Seed
from RoughFlow.scenarios import get_scenario, make_schedule

logger = logging.getLogger(__name__)


class RunInfo(BaseModel):
    """Environment fingerprint and timings; never part of the verdicts."""
    version: str = __version__
    python: str = Field(default_factory=platform.python_version)
    platform: str = Field(default_factory=platform.platform)
    numpy: str = np.__version__
    wall_clock: float = 0.0
    per_path_cost: float = 0.0


class ExperimentResult(BaseModel):
    """Config echo, one report per checked identity, run fingerprint."""
    config: ExperimentConfig
    reports: list[ConvergenceReport]
    excluded_paths: int = 0
    run: RunInfo = Field(default_factory=RunInfo)

    @property
    def passed(self) -> bool:
        """All gating reports pass; diagnostics only inform."""
        gating = [r for r in self.reports if r.gating]
        return bool(gating) and all(r.passed for r in gating)

    def report(self, identity: str) -> ConvergenceReport:
        for r in self.reports:
            if r.identity == identity:
                return r
        raise KeyError(f"No report for identity {identity}")


def _evaluate_path(config: ExperimentConfig, stream: int) -> Optional[dict[str, np.ndarray]]:
    """Errors of one stream, or None when the path produced non-finite values."""
    scenario = get_scenario(config.scenario)
    schedule = make_schedule(config)
    try:
        errors = scenario.evaluate(config, schedule, Seed(config.seed, stream))
    except (ValueError, FloatingPointError) as exc:
        # Non-finite paths and failing factorizations drop this stream only.
        logger.warning(f"Path {stream} excluded: {exc}")
        return None
    if not all(np.all(np.isfinite(v)) for v in errors.values()):
        logger.warning(f"Path {stream} excluded: non-finite estimate")
        return None
    return errors


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """
    Execute one Monte Carlo experiment.

    Stream i feeds path i, and records are aggregated in stream order, so the
    reports do not depend on `config.jobs`.

    Raises:
        ConfigError: If the scenario cannot be resolved for this config.
    """
    scenario = get_scenario(config.scenario)
    scenario.check(config)
    schedule = make_schedule(config)
    logger.info(
        f"Running {scenario.name}: {config.paths} paths, N={config.grid_steps}, "
        f"K={config.levels}, jobs={config.jobs}"
    )

    start = time.perf_counter()
    streams = range(config.paths)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(lambda i: _evaluate_path(config, i), streams))
    else:
        records = [_evaluate_path(config, i) for i in streams]
    elapsed = time.perf_counter() - start

    kept = [r for r in records if r is not None]
    excluded = len(records) - len(kept)
    failed_run = excluded > MAX_EXCLUDED_FRACTION * config.paths
    if failed_run:
        logger.error(f"{excluded} of {config.paths} paths excluded; the run fails")

    reports = []
    for identity in scenario.identities:
        final_tol, slope_min = identity.thresholds(config)
        rows = [r[identity.name] for r in kept]
        errors = np.vstack(rows) if rows else np.empty((0, len(schedule)))
        report = build_report(
            identity.name,
            errors,
            schedule.eps,
            final_tol=final_tol,
            slope_min=slope_min,
            statistic=identity.statistic,
            description=identity.description,
            gating=identity.gating,
        )
        if failed_run:
            report.passed = False
        report.excluded = excluded
        reports.append(report)

    run = RunInfo(wall_clock=elapsed, per_path_cost=elapsed / config.paths)
    logger.info(f"{scenario.name} finished in {elapsed:.2f}s")
    return ExperimentResult(config=config, reports=reports, excluded_paths=excluded, run=run)


def _merge(results: list[ExperimentResult], base: ExperimentConfig) -> ExperimentResult:
    reports = []
    for result in results:
        for r in result.reports:
            reports.append(r.model_copy(update={"identity": f"{result.config.scenario}.{r.identity}"}))
    wall = sum(r.run.wall_clock for r in results)
    paths = sum(r.config.paths for r in results)
    return ExperimentResult(
        config=base,
        reports=reports,
        excluded_paths=sum(r.excluded_paths for r in results),
        run=RunInfo(wall_clock=wall, per_path_cost=wall / paths),
    )


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _preset_config(base: dict[str, Any], overrides: Optional[dict[str, Any]]) -> ExperimentConfig:
    """Preset defaults updated by user overrides (nested sections merge)."""
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def preset_theorem_66(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Rough integral with the Stratonovich enhancement against the trapezoid sum."""
    config = _preset_config(
        {
            "scenario": "rough_strat",
            "flavor": "strat",
            "driver": {"kind": "bm", "dim": 2},
            "integrand": {"kind": "gradient", "function": "sin"},
        },
        overrides,
    )
    return run_experiment(config.with_overrides(scenario="rough_strat", flavor="strat"))


def preset_theorem_66_shifted(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """
    Same pair as theorem_66 with the derivative moved to Y' + 1.

    The genuine pair must match the trapezoid sum and the shifted pair that sum
    plus half the realized bracket.
    """
    config = _preset_config(
        {
            "scenario": "rough_shifted",
            "flavor": "strat",
            "driver": {"kind": "bm", "dim": 2},
            "integrand": {"kind": "gradient", "function": "sin", "derivative_shift": 1.0},
        },
        overrides,
    )
    return run_experiment(config.with_overrides(scenario="rough_shifted"))


def preset_theorem_69(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Rough integral with the Itô enhancement against the left-point sum."""
    config = _preset_config(
        {
            "scenario": "rough_ito",
            "flavor": "ito",
            "driver": {"kind": "bm", "dim": 1},
            "integrand": {"kind": "integrand", "function": "sin"},
        },
        overrides,
    )
    return run_experiment(config.with_overrides(scenario="rough_ito", flavor="ito"))


def preset_prop_64(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Forward, backward and sewing rough integrals on an fBm driver."""
    config = _preset_config(
        {
            "scenario": "prop_64",
            "flavor": "strat",
            "driver": {"kind": "fbm", "hurst": 0.4, "dim": 1},
            "integrand": {"kind": "gradient", "function": "sin"},
            "grid_steps": 2**12,
            "paths": 100,
        },
        overrides,
    )
    hurst = config.driver.hurst
    if not 1.0 / 3.0 < hurst < 0.5:
        logger.warning(f"Hurst index {hurst} outside (1/3, 1/2); the comparison is still run")
    return run_experiment(config.with_overrides(scenario="prop_64"))


def preset_section2(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Quadratic variation, covariation, cubic variation and weighted covariation bundle."""
    base = _preset_config({"scenario": "qv_bm"}, overrides)
    common = {"grid_steps": min(base.grid_steps, base.driver.fbm_max_steps)}
    runs = [
        base.with_overrides(scenario="qv_bm", driver={"kind": "bm"}),
        base.with_overrides(scenario="covariation_fbm", driver={"kind": "fbm", "hurst": 0.7, "dim": 2}, **common),
        base.with_overrides(scenario="cubic_fbm", driver={"kind": "fbm", "hurst": 0.35, "dim": 1}, **common),
        base.with_overrides(
            scenario="weighted_cov_bm", driver={"kind": "bm", "dim": 1}, integrand={"function": "sin"}
        ),
    ]
    return _merge([run_experiment(c) for c in runs], base)


def preset_orthogonality(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Remainder orthogonality of a gradient pair."""
    config = _preset_config(
        {"scenario": "orthogonality", "integrand": {"kind": "gradient", "function": "sin"}},
        overrides,
    )
    return run_experiment(config.with_overrides(scenario="orthogonality"))


def preset_time_reversal(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Backward integral against the reversed forward integral."""
    config = _preset_config(
        {
            "scenario": "time_reversal",
            "flavor": "strat",
            "driver": {"kind": "bm", "dim": 2},
            "grid_steps": 2**12,
            "paths": 20,
        },
        overrides,
    )
    return run_experiment(config.with_overrides(scenario="time_reversal"))


def preset_chen(overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """Exact algebraic identities of the enhancement and the germ."""
    config = _preset_config(
        {"scenario": "chen", "driver": {"kind": "bm", "dim": 2}, "grid_steps": 2**12, "paths": 20},
        overrides,
    )
    return run_experiment(config.with_overrides(scenario="chen"))


PRESETS: dict[str, Callable[[Optional[dict[str, Any]]], ExperimentResult]] = {
    "theorem_66": preset_theorem_66,
    "theorem_66_shifted": preset_theorem_66_shifted,
    "theorem_69": preset_theorem_69,
    "prop_64": preset_prop_64,
    "section2": preset_section2,
    "orthogonality": preset_orthogonality,
    "time_reversal": preset_time_reversal,
    "chen": preset_chen,
}


def preset_names() -> list[str]:
    return list(PRESETS)


def run_preset(name: str, overrides: Optional[dict[str, Any]] = None) -> ExperimentResult:
    """
    Raises:
        KeyError: If no preset is registered under `name`.
    """
    if name not in PRESETS:
        raise KeyError(f"Unknown preset: {name} (known: {', '.join(PRESETS)})")
    return PRESETS[name](overrides)
