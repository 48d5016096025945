"""
Configuration schema for RoughFlow experiments.
Uses Pydantic to validate JSON or YAML experiment files.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


def read_mapping(path: str | Path) -> dict[str, Any]:
    """
    Raw, unvalidated content of a JSON or YAML config file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: If the file does not parse to a mapping.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    with open(path, "r") as f:
        try:
            if path.suffix.lower() in (".yaml", ".yml"):
                data = yaml.safe_load(f)
            else:
                data = json.load(f)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"Cannot parse {path}: {exc}") from exc

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return data


class DriverConfig(BaseModel):
    """The reference process X."""
    kind: Literal["bm", "fbm", "sde", "smooth"] = "bm"
    dim: int = Field(1, ge=1)
    hurst: float = Field(0.5, gt=0.0, lt=1.0)
    # sde: b(t, x) = drift - mean_reversion * x, sigma(t, x) = vol * I
    drift: float = 0.0
    mean_reversion: float = 0.0
    vol: float = 1.0
    fbm_max_steps: int = Field(4096, ge=2)


class IntegrandConfig(BaseModel):
    """How the controlled pair (Y, Y') is built from the driver."""
    kind: Literal["zero", "gradient", "integrand", "gradient_orthogonal"] = "gradient"
    function: Literal["sin", "cos", "arctan", "square", "identity", "one", "zero"] = "sin"
    # Y' -> derivative_scale * Y' + derivative_shift, for fault injection
    derivative_scale: float = 1.0
    derivative_shift: float = 0.0
    # Hurst index of the independent process feeding the orthogonal part (0.5: Brownian)
    orthogonal_hurst: float = Field(0.5, gt=0.0, lt=1.0)


class ToleranceConfig(BaseModel):
    final_tol: float = Field(1e-2, gt=0.0)
    slope_min: float = 0.1
    sewing_tol: float = Field(1e-10, gt=0.0)


class ExperimentConfig(BaseModel):
    """Root configuration object."""
    scenario: str = "qv_bm"
    driver: DriverConfig = Field(default_factory=DriverConfig)
    integrand: IntegrandConfig = Field(default_factory=IntegrandConfig)
    flavor: Literal["ito", "strat"] = "strat"
    grid_steps: int = Field(2**14, ge=2)
    horizon: float = Field(1.0, gt=0.0)
    levels: int = Field(8, ge=2)
    paths: int = Field(200, ge=1)
    seed: int = Field(20240611, ge=0, lt=2**64)
    jobs: int = Field(1, ge=1)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)

    output_directory: Path = Path("results")

    @model_validator(mode="after")
    def _check_schedule(self) -> "ExperimentConfig":
        if self.grid_steps % 2 ** (self.levels + 2):
            raise ValueError(
                f"grid_steps={self.grid_steps} cannot resolve {self.levels} eps levels "
                f"(needs a multiple of {2 ** (self.levels + 2)})"
            )
        if self.driver.kind == "fbm" and self.grid_steps > self.driver.fbm_max_steps:
            raise ValueError(
                f"fBm driver limited to {self.driver.fbm_max_steps} steps, got {self.grid_steps}"
            )
        orthogonal = self.integrand.kind in ("zero", "gradient_orthogonal")
        if orthogonal and self.integrand.orthogonal_hurst != 0.5 and self.grid_steps > self.driver.fbm_max_steps:
            raise ValueError(
                f"Orthogonal fBm part limited to {self.driver.fbm_max_steps} steps, got {self.grid_steps}"
            )
        return self

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        """
        Load configuration from a JSON or YAML file.

        Raises:
            FileNotFoundError: If the file does not exist.
            ConfigError: If the content does not validate.
        """
        return cls.from_dict(read_mapping(path))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with top-level fields replaced; None values are ignored."""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
        return ExperimentConfig.from_dict(data)
