"""
Tests for RoughFlow configuration.
"""
import json

import pytest
import yaml

from RoughFlow.config import ConfigError, ExperimentConfig, read_mapping


def test_default_config():
    config = ExperimentConfig()
    assert config.grid_steps == 2**14
    assert config.levels == 8
    assert config.paths == 200
    assert config.tolerances.final_tol == 1e-2
    assert config.tolerances.slope_min == 0.1
    assert config.driver.kind == "bm"


def test_load_from_yaml(tmp_path):
    config_data = {
        "scenario": "prop_64",
        "driver": {"kind": "fbm", "hurst": 0.4},
        "grid_steps": 1024,
        "levels": 6,
        "tolerances": {"final_tol": 0.05},
    }
    config_file = tmp_path / "config.yaml"
    with open(config_file, "w") as f:
        yaml.dump(config_data, f)

    config = ExperimentConfig.from_file(config_file)
    assert config.driver.hurst == 0.4
    assert config.tolerances.final_tol == 0.05
    assert config.tolerances.slope_min == 0.1


def test_load_from_json(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"scenario": "chen", "paths": 3}))
    config = ExperimentConfig.from_file(config_file)
    assert config.scenario == "chen"
    assert config.paths == 3


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ExperimentConfig.from_file(tmp_path / "nope.yaml")


def test_invalid_values(tmp_path):
    config_file = tmp_path / "bad.yaml"
    config_file.write_text(yaml.dump({"paths": 0}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(config_file)


def test_non_mapping_file(tmp_path):
    config_file = tmp_path / "list.yaml"
    config_file.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        read_mapping(config_file)


def test_grid_must_resolve_schedule():
    with pytest.raises(ConfigError, match="eps levels"):
        ExperimentConfig.from_dict({"grid_steps": 512, "levels": 8})


def test_fbm_grid_limit():
    with pytest.raises(ConfigError, match="fBm"):
        ExperimentConfig.from_dict({"driver": {"kind": "fbm"}, "grid_steps": 2**14})
    with pytest.raises(ConfigError, match="Orthogonal"):
        ExperimentConfig.from_dict(
            {"integrand": {"kind": "zero", "orthogonal_hurst": 0.7}, "grid_steps": 2**14}
        )


def test_with_overrides_merges_sections():
    config = ExperimentConfig().with_overrides(
        paths=5, seed=None, driver={"dim": 3}, tolerances={"final_tol": 0.5}
    )
    assert config.paths == 5
    assert config.seed == ExperimentConfig().seed
    assert config.driver.dim == 3
    assert config.driver.kind == "bm"
    assert config.tolerances.final_tol == 0.5
    with pytest.raises(ConfigError):
        config.with_overrides(levels=1)
