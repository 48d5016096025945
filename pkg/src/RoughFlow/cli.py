"""
CLI for RoughFlow.
Path generation, single-path functional evaluation, theorem presets and
result reports.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable

from RoughFlow import __version__, io
from RoughFlow.config import ConfigError, DriverConfig, read_mapping
from RoughFlow.controlled import orthogonality_stat, pair_gradient
from RoughFlow.enhance import enhance
from RoughFlow.io import SchemaVersionError
from RoughFlow.paths import Grid, GridPath, Seed
from RoughFlow.regularization import (
    EpsSchedule,
    backward_integral,
    c_eps,
    covariation_matrix,
    cubic_variation_stat,
    evaluate_series,
    forward_integral,
    scalar_qv,
    strong_sense_stat,
    symmetric_integral,
)
from RoughFlow.rough import rough_integral_backward, rough_integral_reg, second_order_term
from RoughFlow.scenarios import FUNCTIONS, build_driver
from RoughFlow.workflow import preset_names, run_preset

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class ColoredFormatter(logging.Formatter):
    """
    Terminal formatter: colour by level and tag each line with the RoughFlow
    module that logged it (`workflow`, `rough`, ...).
    """
    dim = "\x1b[2m"
    cyan = "\x1b[36m"
    yellow = "\x1b[33;20m"
    red = "\x1b[31;20m"
    bold_red = "\x1b[31;1m"
    reset = "\x1b[0m"
    format_str = "%(levelname)-7s [%(source)s] %(message)s"

    COLORS = {
        logging.DEBUG: dim,
        logging.INFO: cyan,
        logging.WARNING: yellow,
        logging.ERROR: red,
        logging.CRITICAL: bold_red,
    }

    def __init__(self) -> None:
        super().__init__(self.format_str)
        self.formatters = {
            level: logging.Formatter(color + self.format_str + self.reset)
            for level, color in self.COLORS.items()
        }

    def format(self, record: logging.LogRecord) -> str:
        record.source = record.name.removeprefix("RoughFlow.")
        formatter = self.formatters.get(record.levelno)
        if formatter is None:
            return super().format(record)
        return formatter.format(record)


def setup_logging(verbose: bool = False) -> None:
    """Set up logging configuration; `verbose` switches to DEBUG."""
    root = logging.getLogger()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)

    if not root.handlers:
        handler = logging.StreamHandler()

        # Colors only on a terminal
        if sys.stderr.isatty():
            handler.setFormatter(ColoredFormatter())
        else:
            handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))

        root.addHandler(handler)


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _driver_from_args(args: argparse.Namespace) -> GridPath:
    spec = DriverConfig(kind=args.driver, dim=args.dim, hurst=args.hurst)
    grid = Grid(args.grid, args.horizon)
    return build_driver(spec, grid, Seed(args.seed, args.stream))


def _scalar_components(X: GridPath) -> tuple[GridPath, GridPath]:
    return X.component(0), X.component(1 if X.dim > 1 else 0)


def _mapped(X: GridPath, function: str) -> GridPath:
    return GridPath(X.grid, FUNCTIONS[function].elementwise(X.values))


def _functional(name: str, X: GridPath, args: argparse.Namespace) -> Callable[[float, float], Any]:
    """Bind a functional to the path so it takes (eps, t) only."""
    if name == "qv":
        return lambda eps, t: scalar_qv(X, eps, t)
    if name == "covariation":
        X1, X2 = _scalar_components(X)
        return lambda eps, t: c_eps(X1, X2, eps, t)
    if name == "strong":
        X1, X2 = _scalar_components(X)
        return lambda eps, t: strong_sense_stat(X1, X2, eps, t)
    if name == "cubic":
        X1 = X.component(0)
        return lambda eps, t: cubic_variation_stat(X1, eps, t)
    if name == "covariation_matrix":
        return lambda eps, t: covariation_matrix(X, eps, t)
    if name in ("forward", "backward", "symmetric"):
        Y = _mapped(X, args.function)
        integral = {"forward": forward_integral, "backward": backward_integral, "symmetric": symmetric_integral}[name]
        return lambda eps, t: integral(Y, X, eps, t)

    fn = FUNCTIONS[args.function]
    P = pair_gradient(fn.value, fn.gradient, X, vectorized=True)
    if name == "orthogonality":
        return lambda eps, t: orthogonality_stat(P, eps, t)
    E = enhance(X, args.flavor)
    integral = {
        "rough": rough_integral_reg,
        "rough_backward": rough_integral_backward,
        "second_order": second_order_term,
    }[name]
    return lambda eps, t: integral(P, E, eps, t)


FUNCTIONALS = [
    "qv", "covariation", "strong", "cubic", "covariation_matrix",
    "forward", "backward", "symmetric",
    "orthogonality", "rough", "rough_backward", "second_order",
]


def _load_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Fields set in --config, then explicit flags on top."""
    overrides: dict[str, Any] = {}
    if args.config:
        overrides = read_mapping(args.config)
    flags = {
        "seed": args.seed,
        "paths": args.paths,
        "grid_steps": args.grid,
        "levels": args.levels,
        "jobs": args.jobs,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return overrides


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def run_generate(args: argparse.Namespace) -> int:
    """Sample one driver path and write it as CSV."""
    try:
        X = _driver_from_args(args)
    except ValueError as e:
        logger.error(f"Cannot generate path: {e}")
        return EXIT_USAGE
    io.save_path_csv(X, args.out)
    return EXIT_PASS


def run_eval(args: argparse.Namespace) -> int:
    """Evaluate one functional on one path over an eps schedule."""
    try:
        X = io.load_path_csv(args.input) if args.input else _driver_from_args(args)
        schedule = EpsSchedule.horizon_fractions(X.grid, args.levels)
        times = args.times or [X.grid.horizon]
        functional = _functional(args.functional, X, args)
        series = evaluate_series(args.functional, functional, schedule, times)
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Cannot evaluate {args.functional}: {e}")
        return EXIT_USAGE

    if args.out:
        io.save_series_csv(series, args.out)
    else:
        print(io.series_frame(series).to_string(index=False))
    return EXIT_PASS


def run_verify(args: argparse.Namespace) -> int:
    """Run a theorem preset, write the result directory and print the summary."""
    try:
        overrides = _load_overrides(args)
        result = run_preset(args.preset, overrides)
    except (ConfigError, FileNotFoundError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Preset {args.preset} failed: {e}")
        return EXIT_FAIL

    out = Path(args.out) if args.out else result.config.output_directory / args.preset
    io.write_result(result, out)
    print(io.render_report(result))
    return EXIT_PASS if result.passed else EXIT_FAIL


def run_report(args: argparse.Namespace) -> int:
    """Render a result directory as a summary table."""
    try:
        result = io.read_result(args.directory)
    except (FileNotFoundError, SchemaVersionError) as e:
        logger.error(f"Cannot read results: {e}")
        return EXIT_USAGE
    print(io.render_report(result))
    return EXIT_PASS if result.passed else EXIT_FAIL


def _add_driver_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--driver", choices=["bm", "fbm", "sde", "smooth"], default="bm", help="Driver process")
    parser.add_argument("--dim", type=int, default=1, help="Driver dimension")
    parser.add_argument("--hurst", type=float, default=0.5, help="Hurst index for fbm")
    parser.add_argument("--grid", type=int, default=2**12, help="Number of grid steps N")
    parser.add_argument("--horizon", type=float, default=1.0, help="Time horizon T")
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--stream", type=int, default=0, help="Stream index")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="RoughFlow",
        description="RoughFlow: stochastic calculus via regularization and rough integration.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # Generate command
    generate_parser = subparsers.add_parser(
        "generate",
        help="Generate a driver path as CSV.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    _add_driver_arguments(generate_parser)
    generate_parser.add_argument("--out", required=True, help="Output CSV file")
    generate_parser.set_defaults(func=run_generate)

    # Eval command
    eval_parser = subparsers.add_parser(
        "eval",
        help="Evaluate one functional on one path across an eps schedule.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    eval_parser.add_argument("functional", choices=FUNCTIONALS, help="Functional to evaluate")
    eval_parser.add_argument("--input", help="Path CSV; a driver is generated when omitted")
    _add_driver_arguments(eval_parser)
    eval_parser.add_argument("--levels", type=int, default=4, help="Number of eps levels K")
    eval_parser.add_argument("--times", type=float, nargs="+", help="Evaluation times (default: horizon)")
    eval_parser.add_argument("--function", choices=sorted(FUNCTIONS), default="sin", help="Integrand function")
    eval_parser.add_argument("--flavor", choices=["ito", "strat"], default="strat", help="Enhancement flavor")
    eval_parser.add_argument("--out", help="Output CSV file; printed when omitted")
    eval_parser.set_defaults(func=run_eval)

    # Verify command
    verify_parser = subparsers.add_parser(
        "verify",
        help="Run a theorem verification preset.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    verify_parser.add_argument("preset", choices=preset_names(), help="Preset to run")
    verify_parser.add_argument("--config", help="JSON or YAML config with overrides")
    verify_parser.add_argument("--seed", type=int, help="Master seed")
    verify_parser.add_argument("--paths", type=int, help="Monte Carlo size M")
    verify_parser.add_argument("--grid", type=int, help="Number of grid steps N")
    verify_parser.add_argument("--levels", type=int, help="Number of eps levels K")
    verify_parser.add_argument("--jobs", type=int, help="Worker threads")
    verify_parser.add_argument("--out", help="Result directory")
    verify_parser.set_defaults(func=run_verify)

    # Report command
    report_parser = subparsers.add_parser(
        "report",
        help="Render a result directory to a summary table.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    report_parser.add_argument("directory", help="Result directory")
    report_parser.set_defaults(func=run_report)

    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    if hasattr(args, "func"):
        return args.func(args)
    else:
        parser.print_help()
        return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
