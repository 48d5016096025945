"""
Scenario registry for Monte Carlo experiments.

A scenario turns one seed stream into a dictionary of per-eps errors, one
array per checked identity. Estimators come from the library modules; every
reference value is computed independently from the raw path (discrete Itô or
Stratonovich sums, realized brackets, the generator's law).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from RoughFlow.config import ConfigError, DriverConfig, ExperimentConfig
from RoughFlow.controlled import (
    ControlledPair,
    add_pairs,
    orthogonality_stat,
    pair_gradient,
    pair_integrand,
    pair_zero,
    perturb_derivative,
)
from RoughFlow.enhance import EnhancedPath, chen_residual, enhance, geometric_defect
from RoughFlow.paths import (
    Grid,
    GridPath,
    Seed,
    apply_fn,
    gen_bm,
    gen_fbm,
    gen_semimartingale,
)
from RoughFlow.regularization import (
    EpsSchedule,
    c_eps,
    cubic_variation_stat,
    forward_integral,
    ito_oracle,
    scalar_qv,
    strat_oracle,
    symmetric_integral,
    weighted_cov,
)
from RoughFlow.rough import (
    Germ,
    delta2,
    rough_integral_backward,
    rough_integral_reg,
    second_order_term,
    sewing_integral,
    time_reversal_discrepancies,
)

logger = logging.getLogger(__name__)

Thresholds = tuple[Optional[float], Optional[float]]

CHEN_TRIPLES = 100
GEOMETRIC_PAIRS = 100
COBOUNDARY_TRIPLES = 50
ORTHOGONALITY_TOL = 5e-2
TIME_REVERSAL_TOL = 5e-3
EXACT_TOL = 1e-12
# Share of paths whose sewing deltas may fail to decrease over the last levels.
SEWING_NON_MONOTONE_SHARE = 0.1
# Regularized brackets fluctuate like sqrt(eps) around the realized bracket:
# such errors are held to BRACKET_RATE * sqrt(eps_K * T) and a slope above
# BRACKET_SLOPE_MIN.
BRACKET_RATE = 2.5
BRACKET_SLOPE_MIN = 0.25


# ---------------------------------------------------------------------------
# Function library: f(x) = sum_i g(x_i), grad f = g'(x_i)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarFunction:
    name: str
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.sum(self.g(np.atleast_2d(x)), axis=-1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.dg(np.atleast_2d(x))

    def elementwise(self, x: np.ndarray) -> np.ndarray:
        return self.g(x)


FUNCTIONS: dict[str, ScalarFunction] = {
    "sin": ScalarFunction("sin", np.sin, np.cos),
    "cos": ScalarFunction("cos", np.cos, lambda x: -np.sin(x)),
    "arctan": ScalarFunction("arctan", np.arctan, lambda x: 1.0 / (1.0 + x**2)),
    "square": ScalarFunction("square", np.square, lambda x: 2.0 * x),
    "identity": ScalarFunction("identity", lambda x: np.asarray(x, dtype=float), np.ones_like),
    "one": ScalarFunction("one", np.ones_like, np.zeros_like),
    "zero": ScalarFunction("zero", np.zeros_like, np.zeros_like),
}


# ---------------------------------------------------------------------------
# Drivers and pairs
# ---------------------------------------------------------------------------

def make_grid(config: ExperimentConfig) -> Grid:
    return Grid(config.grid_steps, config.horizon)


def make_schedule(config: ExperimentConfig) -> EpsSchedule:
    return EpsSchedule.horizon_fractions(make_grid(config), config.levels)


def build_driver(spec: DriverConfig, grid: Grid, seed: Seed) -> GridPath:
    """Sample the configured reference process on one stream."""
    d = spec.dim
    if spec.kind == "bm":
        return gen_bm(grid, d, seed)
    if spec.kind == "fbm":
        return gen_fbm(grid, spec.hurst, d, seed, max_steps=spec.fbm_max_steps)
    if spec.kind == "sde":
        sigma = spec.vol * np.eye(d)
        return gen_semimartingale(
            grid,
            d,
            drift=lambda t, x: spec.drift - spec.mean_reversion * x,
            vol=lambda t, x: sigma,
            seed=seed,
        )
    # smooth: one sine mode per component
    freq = np.arange(1, d + 1)
    return GridPath.from_function(
        grid, lambda t: np.sin(2 * np.pi * np.outer(t / grid.horizon, freq)) / freq
    )


def _driver(config: ExperimentConfig, seed: Seed) -> GridPath:
    return build_driver(config.driver, make_grid(config), seed)


def _orthogonal_part(config: ExperimentConfig, X: GridPath, seed: Seed) -> ControlledPair:
    """f(W) for a scalar W independent of X, controlled with zero derivative."""
    spec = config.integrand
    fn = FUNCTIONS[spec.function]
    other = seed.substream(1)
    if spec.orthogonal_hurst == 0.5:
        W = gen_bm(X.grid, 1, other)
    else:
        W = gen_fbm(X.grid, spec.orthogonal_hurst, 1, other, max_steps=config.driver.fbm_max_steps)
    Y = apply_fn(W, fn.value, vectorized=True)
    return pair_zero(Y, X)


def genuine_pair(config: ExperimentConfig, X: GridPath, seed: Seed) -> ControlledPair:
    """Controlled pair (Y, Y') per the integrand section, before any derivative perturbation."""
    spec = config.integrand
    fn = FUNCTIONS[spec.function]
    if spec.kind == "zero":
        pair = _orthogonal_part(config, X, seed)
    elif spec.kind == "integrand":
        Z = GridPath(X.grid, fn.elementwise(X.values))
        pair = pair_integrand(Z, X)
    else:
        pair = pair_gradient(fn.value, fn.gradient, X, vectorized=True)
        if spec.kind == "gradient_orthogonal":
            pair = add_pairs(pair, _orthogonal_part(config, X, seed))
    return pair


def build_pair(config: ExperimentConfig, X: GridPath, seed: Seed) -> ControlledPair:
    """genuine_pair with the configured derivative scale and shift applied."""
    spec = config.integrand
    pair = genuine_pair(config, X, seed)
    if spec.derivative_scale != 1.0 or spec.derivative_shift != 0.0:
        pair = perturb_derivative(pair, spec.derivative_scale, spec.derivative_shift)
    return pair


def tensor_oracle(Y: GridPath, X: GridPath, oracle: Callable[[GridPath, GridPath], GridPath], k: int) -> np.ndarray:
    """int_0^{t_k} Y (x) dX as an n x d matrix, via a discrete oracle."""
    n, d = Y.dim, X.dim
    Z = np.einsum("ki,cl->kicl", Y.values, np.eye(d)).reshape(Y.grid.steps + 1, n * d * d)
    return oracle(GridPath(Y.grid, Z), X).values[k].reshape(n, d)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def config_thresholds(config: ExperimentConfig) -> Thresholds:
    return config.tolerances.final_tol, config.tolerances.slope_min


@dataclass(frozen=True)
class Identity:
    """
    One checked identity: name, thresholds and the statistic the verdict uses.

    Non-gating identities are reported with their own verdict but leave the
    experiment verdict alone.
    """
    name: str
    description: str
    thresholds: Callable[[ExperimentConfig], Thresholds] = config_thresholds
    statistic: str = "median"
    gating: bool = True


Evaluator = Callable[[ExperimentConfig, EpsSchedule, Seed], dict[str, np.ndarray]]


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    identities: tuple[Identity, ...]
    evaluate: Evaluator = field(repr=False)
    min_dim: int = 1
    drivers: tuple[str, ...] = ("bm", "fbm", "sde", "smooth")

    def check(self, config: ExperimentConfig) -> None:
        """
        Raises:
            ConfigError: If the driver cannot feed this scenario.
        """
        if config.driver.kind not in self.drivers:
            raise ConfigError(
                f"Scenario {self.name} needs a driver in {self.drivers}, got {config.driver.kind}"
            )
        if config.driver.dim < self.min_dim:
            raise ConfigError(f"Scenario {self.name} needs dimension >= {self.min_dim}")


SCENARIOS: dict[str, Scenario] = {}


def register(name: str, description: str, *identities: Identity, **options):
    def decorator(fn: Evaluator) -> Evaluator:
        SCENARIOS[name] = Scenario(name, description, tuple(identities), fn, **options)
        return fn
    return decorator


def get_scenario(name: str) -> Scenario:
    """
    Raises:
        ConfigError: If no scenario is registered under `name`.
    """
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"Unknown scenario: {name} (known: {', '.join(sorted(SCENARIOS))})") from None


def scenario_names() -> list[str]:
    return sorted(SCENARIOS)


def _fixed(final_tol: Optional[float], slope_min: Optional[float]) -> Callable[[ExperimentConfig], Thresholds]:
    return lambda config: (final_tol, slope_min)


def bracket_tolerance(config: ExperimentConfig, weight: float = 1.0) -> float:
    """BRACKET_RATE * weight * sqrt(eps_K * T) for the finest eps of the schedule."""
    finest = float(make_schedule(config).eps[-1])
    return BRACKET_RATE * weight * float(np.sqrt(finest * config.horizon))


def _bracket_thresholds(config: ExperimentConfig) -> Thresholds:
    return bracket_tolerance(config), BRACKET_SLOPE_MIN


def _shifted_bracket_thresholds(config: ExperimentConfig) -> Thresholds:
    return bracket_tolerance(config, max(1.0, abs(config.integrand.derivative_shift))), BRACKET_SLOPE_MIN


def _constant(value: float, schedule: EpsSchedule) -> np.ndarray:
    return np.full(len(schedule), value)


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a)))


# --- regularization functionals --------------------------------------------

@register(
    "qv_bm",
    "Regularized scalar quadratic variation of a d-dim Brownian motion",
    Identity("qv_law", "|[X]_eps(T) - d T|",
             thresholds=lambda c: (0.05 * c.driver.dim, c.tolerances.slope_min)),
    Identity("qv_realized", "|[X]_eps(T) - sum |dX|^2| on the finest grid"),
    drivers=("bm",),
)
def _qv_bm(config, schedule, seed):
    X = _driver(config, seed)
    T = config.horizon
    realized = float(np.sum(np.diff(X.values, axis=0) ** 2))
    qv = np.array([scalar_qv(X, eps, T) for eps in schedule.eps])
    return {
        "qv_law": np.abs(qv - X.dim * T),
        "qv_realized": np.abs(qv - realized),
    }


@register(
    "covariation_fbm",
    "Covariation of two independent fBm components vanishes",
    Identity("covariation", "|C(eps, X1, X2)(T)|"),
    min_dim=2,
)
def _covariation_fbm(config, schedule, seed):
    X = _driver(config, seed)
    X1, X2 = X.component(0), X.component(1)
    return {"covariation": np.abs([c_eps(X1, X2, eps, config.horizon) for eps in schedule.eps])}


@register(
    "cubic_fbm",
    "Cubic variation of a rough fBm component decays",
    Identity("cubic_variation", "(1/eps) int |X_{s+eps} - X_s|^3 ds", thresholds=_fixed(None, 0.0)),
)
def _cubic_fbm(config, schedule, seed):
    X1 = _driver(config, seed).component(0)
    return {"cubic_variation": np.array([cubic_variation_stat(X1, eps, config.horizon) for eps in schedule.eps])}


@register(
    "weighted_cov_bm",
    "Weighted covariation against the realized bracket",
    Identity("weighted_cov", "|(1/eps) int g(X) dX dX - sum g(X_k) dX_k^2|"),
)
def _weighted_cov_bm(config, schedule, seed):
    X1 = _driver(config, seed).component(0)
    g = FUNCTIONS[config.integrand.function]
    H = GridPath(X1.grid, g.elementwise(X1.values))
    reference = float(np.sum(H.values[:-1, 0] * np.diff(X1.values[:, 0]) ** 2))
    est = np.array([weighted_cov(H, X1, X1, eps, config.horizon) for eps in schedule.eps])
    return {"weighted_cov": np.abs(est - reference)}


@register(
    "symmetric",
    "Symmetric integral of g(X) against X equals the trapezoid sum",
    Identity("symmetric_vs_strat", "max |int g(X) d°X - strat_oracle|"),
)
def _symmetric(config, schedule, seed):
    X = _driver(config, seed)
    Y = GridPath(X.grid, FUNCTIONS[config.integrand.function].elementwise(X.values))
    ref = tensor_oracle(Y, X, strat_oracle, X.grid.steps)
    return {
        "symmetric_vs_strat": np.array(
            [_max_abs(symmetric_integral(Y, X, eps, config.horizon) - ref) for eps in schedule.eps]
        )
    }


@register(
    "forward",
    "Forward integral of g(X) against X equals the left-point sum",
    Identity("forward_vs_ito", "max |int g(X) d-X - ito_oracle|"),
)
def _forward(config, schedule, seed):
    X = _driver(config, seed)
    Y = GridPath(X.grid, FUNCTIONS[config.integrand.function].elementwise(X.values))
    ref = tensor_oracle(Y, X, ito_oracle, X.grid.steps)
    return {
        "forward_vs_ito": np.array(
            [_max_abs(forward_integral(Y, X, eps, config.horizon) - ref) for eps in schedule.eps]
        )
    }


# --- controlled pairs -------------------------------------------------------

@register(
    "orthogonality",
    "Remainders of a controlled pair are orthogonal to X",
    Identity("orthogonality", "max |(1/eps) int R_{s,s+eps} (x) X_{s,s+eps} ds|",
             thresholds=lambda c: (ORTHOGONALITY_TOL, c.tolerances.slope_min)),
)
def _orthogonality(config, schedule, seed):
    X = _driver(config, seed)
    P = build_pair(config, X, seed)
    return {"orthogonality": np.array([orthogonality_stat(P, eps, config.horizon) for eps in schedule.eps])}


# --- rough integrals --------------------------------------------------------

def _rough_vs_oracle(config, schedule, seed, flavor, oracle, with_bracket: bool):
    X = _driver(config, seed)
    P = build_pair(config, X, seed)
    E = enhance(X, flavor)
    T = config.horizon
    ref = tensor_oracle(P.Y, X, oracle, X.grid.steps)
    out = {"rough_vs_" + flavor: np.array(
        [_max_abs(rough_integral_reg(P, E, eps, T) - ref) for eps in schedule.eps]
    )}
    if with_bracket:
        half_bracket = 0.5 * np.einsum("ki,kj->ij", np.diff(P.Y.values, axis=0), np.diff(X.values, axis=0))
        out["second_order_vs_half_bracket"] = np.array(
            [_max_abs(second_order_term(P, E, eps, T) - half_bracket) for eps in schedule.eps]
        )
    return out


@register(
    "rough_strat",
    "Regularized rough integral with the Stratonovich enhancement equals the trapezoid sum",
    Identity("rough_vs_strat", "max |rough_integral_reg - strat_oracle|"),
    Identity("second_order_vs_half_bracket", "max |(1/eps) int Y' XX_{s,s+eps} ds - [Y, X] / 2|",
             thresholds=_bracket_thresholds),
    drivers=("bm", "sde", "smooth"),
)
def _rough_strat(config, schedule, seed):
    return _rough_vs_oracle(config, schedule, seed, "strat", strat_oracle, with_bracket=True)


@register(
    "rough_ito",
    "Regularized rough integral with the Itô enhancement equals the left-point sum",
    Identity("rough_vs_ito", "max |rough_integral_reg - ito_oracle|"),
    drivers=("bm", "sde", "smooth"),
)
def _rough_ito(config, schedule, seed):
    return _rough_vs_oracle(config, schedule, seed, "ito", ito_oracle, with_bracket=False)


def shift_correction(X: GridPath, shift: float, flavor: str, rows: int) -> np.ndarray:
    """
    Limit of the extra term (1/eps) int shift * 1 XX_{s,s+eps} ds picked up when
    every entry of Y' is moved by `shift`.

    With the Stratonovich enhancement this is shift/2 times the column sums
    of the realized bracket [X, X]; the Itô enhancement has a vanishing
    regularized symmetric part, so the correction is zero.
    """
    if flavor == "ito":
        return np.zeros((rows, X.dim))
    dx = np.diff(X.values, axis=0)
    realized = np.einsum("ki,kj->ij", dx, dx)
    return np.tile(0.5 * shift * realized.sum(axis=0), (rows, 1))


@register(
    "rough_shifted",
    "Shifting the Gubinelli derivative by v adds v [X, X] / 2 to the Stratonovich rough integral",
    Identity("genuine_vs_oracle", "max |rough_integral_reg(Y, Y') - oracle|"),
    Identity("shifted_vs_corrected_oracle", "max |rough_integral_reg(Y, Y' + v) - oracle - correction|",
             thresholds=_shifted_bracket_thresholds),
    drivers=("bm", "sde", "smooth"),
)
def _rough_shifted(config, schedule, seed):
    X = _driver(config, seed)
    P = genuine_pair(config, X, seed)
    shift = config.integrand.derivative_shift
    shifted = perturb_derivative(P, shift=shift)
    E = enhance(X, config.flavor)
    T = config.horizon
    oracle = strat_oracle if config.flavor == "strat" else ito_oracle
    ref = tensor_oracle(P.Y, X, oracle, X.grid.steps)
    corrected = ref + shift_correction(X, shift, config.flavor, P.Y.dim)
    return {
        "genuine_vs_oracle": np.array(
            [_max_abs(rough_integral_reg(P, E, eps, T) - ref) for eps in schedule.eps]
        ),
        "shifted_vs_corrected_oracle": np.array(
            [_max_abs(rough_integral_reg(shifted, E, eps, T) - corrected) for eps in schedule.eps]
        ),
    }


def _sewing_non_monotone(deltas: tuple[float, ...], converged: bool) -> float:
    """1.0 unless the last three refinement deltas decrease (or sewing converged early)."""
    if converged and len(deltas) < 3:
        return 0.0
    tail = np.array(deltas[-3:])
    return 0.0 if len(tail) == 3 and np.all(np.diff(tail) < 0) else 1.0


@register(
    "prop_64",
    "Forward, backward and sewing rough integrals agree pathwise",
    Identity("forward_vs_backward", "max |forward - backward|", thresholds=lambda c: (c.tolerances.final_tol, None)),
    Identity("forward_vs_sewing", "max |forward - sewing|", thresholds=lambda c: (c.tolerances.final_tol, None)),
    Identity("backward_vs_sewing", "max |backward - sewing|", thresholds=lambda c: (c.tolerances.final_tol, None)),
    Identity("sewing_refinement", "share of paths without decreasing sewing deltas",
             thresholds=_fixed(SEWING_NON_MONOTONE_SHARE, None), statistic="mean", gating=False),
)
def _prop_64(config, schedule, seed):
    X = _driver(config, seed)
    P = build_pair(config, X, seed)
    E = enhance(X, "strat")
    T = config.horizon
    sewing = sewing_integral(P, E, T, tol=config.tolerances.sewing_tol)
    forward = [rough_integral_reg(P, E, eps, T) for eps in schedule.eps]
    backward = [rough_integral_backward(P, E, eps, T) for eps in schedule.eps]
    return {
        "forward_vs_backward": np.array([_max_abs(f - b) for f, b in zip(forward, backward)]),
        "forward_vs_sewing": np.array([_max_abs(f - sewing.value) for f in forward]),
        "backward_vs_sewing": np.array([_max_abs(b - sewing.value) for b in backward]),
        "sewing_refinement": _constant(_sewing_non_monotone(sewing.deltas, sewing.converged), schedule),
    }


@register(
    "time_reversal",
    "Backward integral equals minus the forward integral of the reversed pair",
    Identity("time_reversal", "max |backward - (-forward of reversed)|",
             thresholds=_fixed(TIME_REVERSAL_TOL, None)),
)
def _time_reversal(config, schedule, seed):
    X = _driver(config, seed)
    P = build_pair(config, X, seed)
    E = enhance(X, config.flavor)
    return {"time_reversal": time_reversal_discrepancies(P, E, config.horizon, schedule)}


# --- exact algebraic identities ---------------------------------------------

def _random_triples(rng: np.random.Generator, steps: int, count: int) -> np.ndarray:
    return np.sort(rng.integers(0, steps + 1, size=(count, 3)), axis=1)


def coboundary_residual(P: ControlledPair, E: EnhancedPath, j: int, m: int, k: int) -> float:
    """Max-norm of delta_2 A_{j,m,k} + R_{j,m} (X_k - X_m)^T + (Y'_m - Y'_j) XX_{m,k}."""
    dA = delta2(Germ(P, E))(j, m, k)
    x = P.X.values
    expected = -np.outer(P.remainders(j, m), x[k] - x[m]) - (P.Yprime[m] - P.Yprime[j]) @ E.blocks(m, k)
    return _max_abs(dA - expected)


@register(
    "chen",
    "Chen relation, geometricity and the germ coboundary hold to rounding",
    Identity("chen_ito", "Chen residual / (1 + |X|^2), Itô enhancement", thresholds=_fixed(EXACT_TOL, None)),
    Identity("chen_strat", "Chen residual / (1 + |X|^2), Stratonovich enhancement", thresholds=_fixed(EXACT_TOL, None)),
    Identity("geometric_strat", "|sym XX - dX dX^T / 2|, Stratonovich enhancement", thresholds=_fixed(EXACT_TOL, None)),
    Identity("ito_defect", "|sym XX^ito - dX dX^T / 2 + realized bracket / 2|", thresholds=_fixed(EXACT_TOL, None)),
    Identity("germ_coboundary", "delta_2 A against its remainder expansion", thresholds=_fixed(EXACT_TOL, None)),
)
def _chen(config, schedule, seed):
    X = _driver(config, seed)
    n = X.grid.steps
    rng = seed.substream(2).generator()
    scale = 1.0 + X.sup_norm() ** 2
    out = {}
    for flavor in ("ito", "strat"):
        E = enhance(X, flavor)
        worst = max(chen_residual(E, *map(int, t)) for t in _random_triples(rng, n, CHEN_TRIPLES))
        out["chen_" + flavor] = _constant(worst / scale, schedule)

    strat, ito = enhance(X, "strat"), enhance(X, "ito")
    pairs = np.sort(rng.integers(0, n + 1, size=(GEOMETRIC_PAIRS, 2)), axis=1)
    out["geometric_strat"] = _constant(
        max(geometric_defect(strat, int(j), int(k)) for j, k in pairs) / scale, schedule
    )
    dx = np.diff(X.values, axis=0)
    ito_worst = 0.0
    for j, k in pairs:
        block = ito.blocks(int(j), int(k))
        total = X.values[k] - X.values[j]
        realized = np.einsum("ki,kj->ij", dx[j:k], dx[j:k])
        sym = 0.5 * (block + block.T)
        ito_worst = max(ito_worst, _max_abs(sym - 0.5 * np.outer(total, total) + 0.5 * realized))
    out["ito_defect"] = _constant(ito_worst / scale, schedule)

    P = build_pair(config, X, seed)
    pair_scale = scale * (1.0 + P.Y.sup_norm() + float(np.max(np.abs(P.Yprime))))
    worst = max(
        coboundary_residual(P, strat, *map(int, t)) for t in _random_triples(rng, n, COBOUNDARY_TRIPLES)
    )
    out["germ_coboundary"] = _constant(worst / pair_scale, schedule)
    return out
