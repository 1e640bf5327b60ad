import numpy as np
import pytest

from wavefocus.channel import GainMode, nearfield_channel, zf_target
from wavefocus.config import ExperimentConfig
from wavefocus.geometry import SceneParameters, build_scene
from wavefocus.propagation import build_propagation


@pytest.fixture
def small_params():
    return SceneParameters(bs_rows=1, bs_cols=2, num_users=2, num_layers=3, atoms_per_side=3)


@pytest.fixture
def small_scene(small_params):
    return build_scene(small_params, np.random.default_rng(1))


@pytest.fixture
def small_prop(small_scene):
    return build_propagation(small_scene)


@pytest.fixture
def unit_channel(small_scene):
    return nearfield_channel(small_scene, GainMode.UNIT_MODULUS).unit_modulus


@pytest.fixture
def small_target(unit_channel):
    return zf_target(unit_channel)


@pytest.fixture
def tiny_config(tmp_path):
    """Seconds-scale experiment config writing into a temp dir."""
    return ExperimentConfig(
        layers=2,
        atoms_per_side=3,
        bs_rows=1,
        bs_cols=2,
        trials=2,
        codebook_size=4,
        max_iters=8,
        layers_list=(1, 2),
        users_list=(1, 2),
        heatmap_nx=5,
        heatmap_ny=10,
        out_dir=str(tmp_path / "out"),
    )
