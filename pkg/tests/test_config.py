"""Tests for experiment configuration loading and validation."""

import json
import math

import pytest

from tdpt.config import FIGURE_PRESETS, ExperimentConfig, figure_config, load_config
from tdpt.errors import ConfigurationError

pytestmark = pytest.mark.unit


def test_defaults():
    config = load_config()
    assert config.shape.kind == "disk"
    assert config.inclusion.epsilon == 0.05
    assert config.frequency.rho == pytest.approx(math.pi)
    assert config.frequency.half_count == 128
    assert config.system.threads == 1
    assert config.svd_cutoff == config.tensor.svd_cutoff_noisy
    assert str(config.output_path) == "output"


@pytest.mark.parametrize(
    "overrides",
    [
        {"inclusion": {"contrast": 1.0}},
        {"inclusion": {"epsilon": 0.5}},
        {"shape": {"kind": "star"}},
        {"shape": {"nodes": 65}},
        {"layout": {"geometry": "square", "count": 10}},
        {"frequency": {"count": 7}},
        {"frequency": {"count": 2}},
        {"frequency": {"rho0": 3.2}},
        {"tensor": {"size_source": "oracle"}},
        {"tensor": {"prior_volume": -0.0025}},
        {"system": {"log_level": "LOUD"}},
    ],
)
def test_invalid_values_are_rejected(overrides):
    with pytest.raises(ConfigurationError):
        load_config(**overrides)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(str(broken))


def test_file_and_keyword_overrides_merge_per_section(tmp_path):
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps({"inclusion": {"contrast": 5.0}, "noise": {"percent": 0.0}}), encoding="utf-8")
    config = load_config(str(path), inclusion={"epsilon": 0.02})
    assert config.inclusion.contrast == 5.0
    assert config.inclusion.epsilon == 0.02
    assert config.inclusion.center == [0.3, -0.1]
    assert config.svd_cutoff == config.tensor.svd_cutoff_noiseless


def test_default_file_in_working_directory(tmp_path):
    (tmp_path / "config.json").write_text(json.dumps({"layout": {"count": 12}}), encoding="utf-8")
    assert load_config().layout.count == 12


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("TDPT_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    monkeypatch.setenv("TDPT_NOISE__PERCENT", "5")
    config = load_config(system={"output_dir": "./ignored"})
    assert config.output_path == tmp_path / "elsewhere"
    assert config.noise.percent == 5.0


def test_figure_presets():
    config = load_config(figure=5)
    assert config.shape.kind == "flower"
    assert config.tensor.order == 4
    assert config.optimizer.enabled
    assert config.frequency.rho == pytest.approx(math.pi / 8)

    noiseless = load_config(figure=4, noise={"seed": 9})
    assert noiseless.noise.percent == 0.0
    assert noiseless.noise.seed == 9

    preset = figure_config(3)
    preset["noise"]["percent"] = 99.0
    assert figure_config(3)["noise"]["percent"] == 20.0
    with pytest.raises(ConfigurationError):
        load_config(figure=6)


def test_save_to_file_round_trip(tmp_path):
    config = load_config(figure=5, system={"threads": 3})
    target = tmp_path / "resolved.json"
    config.save_to_file(str(target))
    reloaded = ExperimentConfig(config_file=str(target))
    assert reloaded.model_dump() == config.model_dump()


@pytest.mark.parametrize("figure", sorted(FIGURE_PRESETS))
def test_presets_carry_an_explicit_prior_size(figure):
    config = load_config(figure=figure)
    assert config.tensor.prior_volume == pytest.approx(config.inclusion.epsilon ** 2)


def test_shape_preset_is_resolvable_at_its_harmonic_order():
    config = load_config(figure=5)
    assert config.shape.kind == "flower"
    assert config.shape.petals <= config.optimizer.k_max
