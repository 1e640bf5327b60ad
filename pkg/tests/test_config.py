import math

import pytest
import scipy.constants

from wavefocus import ConfigError
from wavefocus.config import (
    ExperimentConfig,
    antenna_grid,
    dbm_to_watts,
    load_config,
    watts_to_dbm,
)


def test_desk_defaults():
    config = load_config()
    assert config.atoms_per_layer == 49
    assert config.layers == 6
    assert config.trials == 20
    assert config.num_users == 4


def test_paper_profile():
    config = load_config(profile="paper")
    assert config.atoms_per_layer == 225
    assert config.layers == 12
    assert config.trials == 100
    assert config.layers_list == tuple(range(1, 13))


def test_unknown_profile():
    with pytest.raises(ConfigError):
        load_config(profile="laptop")


def test_file_values_and_override_precedence(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(
        "layers=3\n"
        "trials=5\n"
        "schemes=proposed,random\n"
        "layers_list=1,3\n"
        "sweep_power=water-filling\n"
        "gain_mode=normalized\n"
        "P_T_DBM=-10\n"
    )
    config = load_config(str(path), overrides={"trials": 7, "seed": None})
    assert config.layers == 3
    assert config.trials == 7
    assert config.seed == 0
    assert config.schemes == ("proposed", "random")
    assert config.layers_list == (1, 3)
    assert config.sweep_power == "water-filling"
    assert config.gain_mode == "normalized"
    assert config.p_t_dbm == -10.0


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("layerz=3\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.env")


def test_bad_values(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("trials=many\n")
    with pytest.raises(ConfigError):
        load_config(str(path))
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(gain_mode="loud")
    with pytest.raises(ConfigError):
        ExperimentConfig(schemes=("proposed", "greedy"))


def test_frequency_derives_wavelength(tmp_path):
    path = tmp_path / "f.env"
    path.write_text("freq_hz=28e9\n")
    config = load_config(str(path))
    assert config.wavelength_m == pytest.approx(scipy.constants.c / 28e9)


def test_wavelength_derives_frequency():
    config = load_config(overrides={"wavelength_m": 0.01})
    assert config.freq_hz == pytest.approx(scipy.constants.c / 0.01)


def test_dbm_round_trip():
    for dbm in (-120.0, -40.0, 0.0, 5.0, 30.0):
        assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, rel=1e-12, abs=1e-12)
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert ExperimentConfig(noise_dbm=-120.0).noise_w == pytest.approx(1e-15)


def test_users_set_antenna_grid():
    assert antenna_grid(1) == (1, 1)
    assert antenna_grid(4) == (2, 2)
    assert antenna_grid(6) == (2, 3)
    assert antenna_grid(7) == (1, 7)
    config = ExperimentConfig().with_users(8)
    assert config.num_users == 8
    assert config.scene().num_antennas == 8
    with pytest.raises(ConfigError):
        antenna_grid(0)


def test_derived_objects():
    config = ExperimentConfig(theta_offset_rad=0.5, codebook_size=9, seed=4)
    assert config.amplitude_model().theta_offset == 0.5
    assert config.optimizer().codebook_size == 9
    assert config.optimizer().seed == 4
    assert config.optimizer(seed=2).seed == 2
    assert config.circuit().capacitance == pytest.approx(2.35e-12)
    assert math.isclose(config.p_t_w, dbm_to_watts(5.0))


def test_sweep_power_defaults_to_uniform():
    assert ExperimentConfig().sweep_power == "uniform"
    with pytest.raises(ConfigError):
        ExperimentConfig(sweep_power="greedy")


@pytest.mark.parametrize(
    "field, value",
    [
        ("eta0", 1.5),
        ("rho", 0.0),
        ("codebook_size", 0),
        ("a_min", 2.0),
        ("iota", -1.0),
        ("resistance_ohm", -1.0),
        ("c_min_f", 3e-12),
        ("layers_list", (0, 2)),
        ("users_list", (2, -1)),
    ],
)
def test_out_of_range_values_are_config_errors(field, value):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{field: value})
