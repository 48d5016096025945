"""
I/O functions for RoughFlow: path, series and pair CSVs, and experiment
result directories (manifest.json, verdicts.json, tables/*.csv).
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from RoughFlow.config import ExperimentConfig
from RoughFlow.controlled import ControlledPair
from RoughFlow.convergence import ConvergenceReport
from RoughFlow.enhance import EnhancedPath
from RoughFlow.paths import Grid, GridPath
from RoughFlow.regularization import EpsSchedule, EvalSeries
from RoughFlow.rough import rough_integral_reg, sewing_integral
from RoughFlow.workflow import ExperimentResult, RunInfo

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

MANIFEST_FILE = "manifest.json"
VERDICTS_FILE = "verdicts.json"
TABLES_DIR = "tables"


class SchemaVersionError(ValueError):
    """Result directory written by an incompatible schema version."""


def _write_frame(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def _read_frame(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    return pd.read_csv(path, float_precision="round_trip")


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def path_frame(X: GridPath) -> pd.DataFrame:
    frame = pd.DataFrame(X.values, columns=[f"x{i + 1}" for i in range(X.dim)])
    frame.insert(0, "t", X.grid.nodes)
    return frame


def save_path_csv(X: GridPath, filepath: str | Path) -> None:
    """Write a path as columns t, x1..xd at full precision."""
    _write_frame(path_frame(X), Path(filepath))
    logger.info(f"Path saved to CSV: {filepath}")


def load_path_csv(filepath: str | Path) -> GridPath:
    """
    Read a path written by save_path_csv.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the t column is not a uniform grid starting at 0.
    """
    frame = _read_frame(Path(filepath))
    if "t" not in frame.columns:
        raise ValueError(f"{filepath}: missing t column")
    t = frame["t"].to_numpy()
    grid = Grid(len(t) - 1, float(t[-1]))
    if t[0] != 0.0 or not np.allclose(t, grid.nodes, rtol=0.0, atol=1e-9 * grid.step):
        raise ValueError(f"{filepath}: t column is not a uniform grid on [0, {t[-1]}]")
    return GridPath(grid, frame.drop(columns="t").to_numpy())


# ---------------------------------------------------------------------------
# Functional series, blocks, enhancements and pairs
# ---------------------------------------------------------------------------

def series_frame(series: EvalSeries) -> pd.DataFrame:
    """Long format: eps, t, value, plus row and col for matrix-valued functionals."""
    rows = []
    for eps, block in zip(series.eps, series.values):
        for t, value in zip(series.times, block):
            value = np.asarray(value)
            if value.ndim == 0:
                rows.append({"eps": eps, "t": t, "value": float(value)})
                continue
            for (r, c), v in np.ndenumerate(np.atleast_2d(value)):
                rows.append({"eps": eps, "t": t, "value": float(v), "row": r, "col": c})
    return pd.DataFrame(rows)


def save_series_csv(series: EvalSeries, filepath: str | Path) -> None:
    _write_frame(series_frame(series), Path(filepath))
    logger.info(f"{series.functional} series saved to CSV: {filepath}")


def blocks_frame(E: EnhancedPath, pairs: Iterable[tuple[int, int]]) -> pd.DataFrame:
    rows = []
    for j, k in pairs:
        block = E.blocks(j, k)
        for (r, c), v in np.ndenumerate(block):
            rows.append({"j": j, "k": k, "row": r, "col": c, "value": float(v)})
    return pd.DataFrame(rows, columns=["j", "k", "row", "col", "value"])


def save_blocks_csv(E: EnhancedPath, pairs: Iterable[tuple[int, int]], filepath: str | Path) -> None:
    """Write requested XX blocks as j, k, row, col, value."""
    _write_frame(blocks_frame(E, pairs), Path(filepath))


def _matrix_columns(prefix: str, rows: int, cols: int) -> list[str]:
    return [f"{prefix}{r + 1}_{c + 1}" for r in range(rows) for c in range(cols)]


def save_enhanced(E: EnhancedPath, directory: str | Path) -> None:
    """Base path CSV plus the iterated integral I, one row-major flattened matrix per node."""
    directory = Path(directory)
    save_path_csv(E.base, directory / "path.csv")
    d = E.dim
    frame = pd.DataFrame(E.iterated.reshape(-1, d * d), columns=_matrix_columns("I", d, d))
    frame.insert(0, "t", E.grid.nodes)
    _write_frame(frame, directory / "iterated.csv")
    (directory / "enhancement.json").write_text(json.dumps({"flavor": E.flavor, "schema_version": SCHEMA_VERSION}))


def load_enhanced(directory: str | Path) -> EnhancedPath:
    directory = Path(directory)
    base = load_path_csv(directory / "path.csv")
    meta = _read_json(directory / "enhancement.json")
    _check_schema(meta, directory)
    frame = _read_frame(directory / "iterated.csv").drop(columns="t")
    d = base.dim
    return EnhancedPath(base, meta["flavor"], frame.to_numpy().reshape(-1, d, d))


def save_pair(P: ControlledPair, directory: str | Path) -> None:
    """Y.csv, Yprime.csv (row-major n x d per node), X.csv and pair.json."""
    directory = Path(directory)
    save_path_csv(P.Y, directory / "Y.csv")
    save_path_csv(P.X, directory / "X.csv")
    n, d = P.Y.dim, P.X.dim
    frame = pd.DataFrame(P.Yprime.reshape(-1, n * d), columns=_matrix_columns("D", n, d))
    frame.insert(0, "t", P.grid.nodes)
    _write_frame(frame, directory / "Yprime.csv")
    (directory / "pair.json").write_text(
        json.dumps({"label": P.label, "n": n, "d": d, "schema_version": SCHEMA_VERSION})
    )
    logger.info(f"Controlled pair saved to {directory}")


def load_pair(directory: str | Path) -> ControlledPair:
    directory = Path(directory)
    meta = _read_json(directory / "pair.json")
    _check_schema(meta, directory)
    Y = load_path_csv(directory / "Y.csv")
    X = load_path_csv(directory / "X.csv")
    yprime = _read_frame(directory / "Yprime.csv").drop(columns="t").to_numpy()
    return ControlledPair(Y, yprime.reshape(-1, meta["n"], meta["d"]), X, meta["label"])


def rough_frame(P: ControlledPair, E: EnhancedPath, schedule: EpsSchedule, times: Sequence[float]) -> pd.DataFrame:
    """Regularized rough integral per eps and time, long format eps, t, row, col, value."""
    rows = []
    for eps in schedule.eps:
        for t in times:
            for (r, c), v in np.ndenumerate(rough_integral_reg(P, E, float(eps), t)):
                rows.append({"eps": float(eps), "t": float(t), "row": r, "col": c, "value": float(v)})
    return pd.DataFrame(rows)


def sewing_frame(P: ControlledPair, E: EnhancedPath, times: Sequence[float], tol: float) -> pd.DataFrame:
    """Sewing integral per time with its level, final delta and convergence flag."""
    rows = []
    for t in times:
        result = sewing_integral(P, E, t, tol=tol)
        for (r, c), v in np.ndenumerate(result.value):
            rows.append({
                "t": float(t), "row": r, "col": c, "value": float(v),
                "levels": result.levels, "delta": result.delta, "converged": result.converged,
            })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Experiment results
# ---------------------------------------------------------------------------

def _read_json(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r") as f:
        return json.load(f)


def _check_schema(data: dict, where: Path) -> None:
    found = data.get("schema_version")
    if found != SCHEMA_VERSION:
        raise SchemaVersionError(f"{where}: schema version {found}, expected {SCHEMA_VERSION}")


def _table_name(identity: str) -> str:
    return identity.replace("/", "_") + ".csv"


def table_frame(report: ConvergenceReport) -> pd.DataFrame:
    return pd.DataFrame({
        "eps": report.eps,
        "median": report.median,
        "mean": report.mean,
        "q10": report.q10,
        "q90": report.q90,
    })


def write_result(result: ExperimentResult, directory: str | Path) -> Path:
    """
    Write an ExperimentResult directory.

    verdicts.json and tables/*.csv hold only seed-determined content; timings
    and the environment fingerprint go to manifest.json.
    """
    directory = Path(directory)
    (directory / TABLES_DIR).mkdir(parents=True, exist_ok=True)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": result.config.model_dump(mode="json"),
        "excluded_paths": result.excluded_paths,
        "run": result.run.model_dump(mode="json"),
    }
    verdicts = {
        "schema_version": SCHEMA_VERSION,
        "passed": result.passed,
        "identities": [
            {
                **r.model_dump(mode="json", exclude={"eps", "median", "mean", "q10", "q90"}),
                "table": f"{TABLES_DIR}/{_table_name(r.identity)}",
            }
            for r in result.reports
        ],
    }
    with open(directory / MANIFEST_FILE, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    with open(directory / VERDICTS_FILE, "w") as f:
        json.dump(verdicts, f, indent=2, sort_keys=True)
    for report in result.reports:
        _write_frame(table_frame(report), directory / TABLES_DIR / _table_name(report.identity))

    logger.info(f"Results written to {directory} ({'PASS' if result.passed else 'FAIL'})")
    return directory


def read_result(directory: str | Path) -> ExperimentResult:
    """
    Read a result directory back into an ExperimentResult.

    Raises:
        FileNotFoundError: If the directory or one of its files is missing.
        SchemaVersionError: If the files were written by another schema version.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Result directory not found: {directory}")
    manifest = _read_json(directory / MANIFEST_FILE)
    verdicts = _read_json(directory / VERDICTS_FILE)
    _check_schema(manifest, directory / MANIFEST_FILE)
    _check_schema(verdicts, directory / VERDICTS_FILE)

    reports = []
    for entry in verdicts["identities"]:
        entry = dict(entry)
        table = _read_frame(directory / entry.pop("table"))
        reports.append(ConvergenceReport(**entry, **{c: table[c].tolist() for c in table.columns}))

    return ExperimentResult(
        config=ExperimentConfig.model_validate(manifest["config"]),
        reports=reports,
        excluded_paths=manifest["excluded_paths"],
        run=RunInfo.model_validate(manifest["run"]),
    )


def render_report(result: ExperimentResult) -> str:
    """One line per identity: final statistic, tolerance, slope, verdict; diagnostics are marked."""
    rows = []
    for r in result.reports:
        rows.append({
            "identity": r.identity,
            "samples": r.samples,
            "final": r.final,
            "final_tol": r.final_tol,
            "slope": r.slope,
            "slope_min": r.slope_min,
            "verdict": ("PASS" if r.passed else "FAIL") + ("" if r.gating else " (diagnostic)"),
        })
    frame = pd.DataFrame(rows, columns=["identity", "samples", "final", "final_tol", "slope", "slope_min", "verdict"])
    overall = "PASS" if result.passed else "FAIL"
    return frame.to_string(index=False, float_format=lambda v: f"{v:.3e}") + f"\n\nOverall: {overall}"
