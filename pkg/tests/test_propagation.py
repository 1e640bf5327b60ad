import numpy as np
import pytest

from wavefocus import DimensionError, GeometryError, IndexRangeError
from wavefocus.geometry import PLANE_NORMAL, SceneParameters, build_scene
from wavefocus.metasurface import AmplitudeMode, AmplitudeModel, SimState
from wavefocus.propagation import (
    build_propagation,
    forward_partials,
    geometry_fingerprint,
    rs_coefficient,
    sim_response,
)


def test_on_axis_coefficient():
    lam = 0.03
    w = rs_coefficient([0, 0, 0], [0, lam, 0], PLANE_NORMAL, lam, lam ** 2)
    # cos = 1, S_a / r = lam, e^{j 2 pi} = 1
    assert w.real == pytest.approx(1.0 / (2 * np.pi), rel=1e-12)
    assert w.imag == pytest.approx(-1.0, rel=1e-12)


def test_in_plane_link_has_no_coupling():
    w = rs_coefficient([0, 0, 0], [0.1, 0, 0], PLANE_NORMAL, 0.03, 9e-4)
    assert abs(w) == pytest.approx(0.0, abs=1e-15)


def test_coincident_points_rejected():
    with pytest.raises(GeometryError):
        rs_coefficient([0, 0, 0], [0, 0, 0], PLANE_NORMAL, 0.03, 9e-4)


def test_shapes_and_shared_inter_layer(small_prop):
    assert small_prop.bs_to_first.shape == (9, 2)
    assert small_prop.num_layers == 3
    assert small_prop.matrix(2).shape == (9, 9)
    assert small_prop.matrix(3) is small_prop.matrix(2)
    with pytest.raises(IndexRangeError):
        small_prop.matrix(4)


def test_reuse_matches_recomputation(small_scene, small_prop):
    fresh = build_propagation(small_scene, reuse=False)
    assert fresh.matrix(3) is not fresh.matrix(2)
    for l in range(1, 4):
        assert np.allclose(fresh.matrix(l), small_prop.matrix(l), rtol=0, atol=1e-12)


def test_response_matches_explicit_product(small_prop):
    state = SimState.random(np.random.default_rng(2), 3, 9)
    model = AmplitudeModel()
    coeffs = state.coefficients(model)
    expected = np.diag(coeffs[0]) @ small_prop.matrix(1)
    for l in (2, 3):
        expected = np.diag(coeffs[l - 1]) @ small_prop.matrix(l) @ expected
    G = sim_response(state, small_prop, model)
    assert G.shape == (9, 2)
    assert np.allclose(G, expected, rtol=1e-10, atol=1e-12 * np.abs(expected).max())


def test_single_layer_response():
    scene = build_scene(SceneParameters(num_layers=1, atoms_per_side=2, bs_rows=1, bs_cols=1,
                                        num_users=1), np.random.default_rng(0))
    prop = build_propagation(scene)
    state = SimState(np.zeros((1, 4)), AmplitudeMode.IDEAL)
    assert np.allclose(sim_response(state, prop), prop.bs_to_first)


def test_forward_partials_end_with_response(small_prop):
    state = SimState.random(np.random.default_rng(5), 3, 9)
    partials = forward_partials(state.coefficients(AmplitudeModel()), small_prop)
    assert len(partials) == 3
    assert np.array_equal(partials[-1], sim_response(state, small_prop))


def test_dimension_mismatch(small_prop):
    with pytest.raises(DimensionError):
        sim_response(SimState(np.zeros((2, 9))), small_prop)
    with pytest.raises(DimensionError):
        sim_response(SimState(np.zeros((3, 4))), small_prop)


def test_fingerprint_tracks_geometry(small_params, small_scene):
    assert geometry_fingerprint(small_scene) == build_propagation(small_scene).fingerprint
    other = build_scene(SceneParameters(num_layers=3, atoms_per_side=3, bs_rows=1, bs_cols=2, num_users=2,
                                        d_l_factor=2.0), np.random.default_rng(1))
    assert geometry_fingerprint(other) != geometry_fingerprint(small_scene)
