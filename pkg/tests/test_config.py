from __future__ import annotations

import json

import pytest

from levyspde.config import PROFILES, ConfigError, GridConfig, ModelConfig, RunConfig, load_config
from levyspde.levy import AdmissibilityError, ImpulsiveCylindrical, SubordinatedQWiener


def test_defaults_are_admissible():
    config = load_config()
    assert config.model.alpha == 1.5 and config.model.beta == 1.2
    assert config.x0_regularity() > config.model.beta


def test_json_round_trip(tmp_path):
    config = RunConfig(seed=5, grid=GridConfig(h_levels=(4, 8, 16, 32)))
    path = tmp_path / "c.json"
    config.save(path)
    assert RunConfig.from_json(path.read_text()) == config
    assert json.loads(path.read_text())["config_version"] == 1


def test_file_overrides_profile(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n_paths": 7, "model": {"jump_threshold": 0.05}}))
    config = load_config(path, "quick")
    assert config.n_paths == 7
    assert config.n_samples == PROFILES["quick"]["n_samples"]
    assert config.model.jump_threshold == 0.05
    assert config.model.alpha == 1.5
    assert config.profile == "quick"


def test_overrides_skip_none():
    config = RunConfig().with_overrides(seed=3, threads=None)
    assert config.seed == 3 and config.threads == 1


@pytest.mark.parametrize(
    "text",
    ["{not json", "[1, 2]", json.dumps({"mystery": 1}), json.dumps({"model": {"mystery": 1}}), json.dumps({"config_version": 9})],
)
def test_malformed_files(tmp_path, text):
    path = tmp_path / "c.json"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_unknown_profile():
    with pytest.raises(ConfigError):
        load_config(profile="enormous")


def test_rough_initial_value_is_inadmissible(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"x0_decay": 1.5}))
    with pytest.raises(AdmissibilityError):
        load_config(path)


@pytest.mark.parametrize(
    "model",
    [{"beta_minus": 1.3}, {"moment": 1.6}, {"q_decay": 0.5}],
)
def test_inadmissible_models(tmp_path, model):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": model}))
    with pytest.raises(AdmissibilityError):
        load_config(path)


def test_model_build():
    assert isinstance(ModelConfig().build(), SubordinatedQWiener)
    assert isinstance(ModelConfig(kind="impulsive", beta=0.8, beta_minus=0.7).build(), ImpulsiveCylindrical)
    with pytest.raises(ConfigError):
        ModelConfig(kind="gaussian").build()


def test_grids():
    grid = GridConfig()
    assert [g.n_retained for g in grid.h_grids()] == [8, 16, 32, 64, 128]
    assert [g.k for g in grid.k_grids()] == [2.0**-i for i in range(4, 9)]
