import numpy as np
import pytest

from wavefocus import ConfigError, DimensionError, IndexRangeError
from wavefocus.channel import GainMode, ZfTarget, end_to_end, nearfield_channel, zf_target
from wavefocus.geometry import SceneParameters, build_scene
from wavefocus.metasurface import AmplitudeMode, AmplitudeModel, SimState
from wavefocus.optimizer import (
    OptimizerConfig,
    cascaded_channel,
    codebook_init,
    finite_difference_gradient,
    gda_flops,
    gradient,
    max_relative_error,
    nmse,
    normalize_gradient,
    objective,
    optimize,
)
from wavefocus.propagation import build_propagation, sim_response


def _instance(seed, layers=2, side=2, mode=AmplitudeMode.COUPLED):
    rng = np.random.default_rng(seed)
    params = SceneParameters(bs_rows=1, bs_cols=2, num_users=2, num_layers=layers, atoms_per_side=side)
    scene = build_scene(params, rng)
    prop = build_propagation(scene)
    H = nearfield_channel(scene, GainMode.UNIT_MODULUS).unit_modulus
    state = SimState.random(rng, layers, side * side, mode)
    return prop, H, zf_target(H), state


def test_nmse_of_target_is_zero(small_target):
    assert nmse(small_target.target, small_target) == 0.0
    assert nmse(np.zeros((2, 2)), small_target) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        nmse(np.zeros((3, 3)), small_target)


@pytest.mark.parametrize("seed", range(50))
def test_gradient_matches_finite_differences(seed):
    layers = 2 + seed % 2
    prop, H, target, state = _instance(seed, layers=layers)
    model = AmplitudeModel()
    analytic = gradient(state, prop, target, H, model)
    numeric = finite_difference_gradient(state, prop, target, H, model, step=1e-6)
    assert max_relative_error(analytic, numeric) < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_gradient_ideal_amplitudes(seed):
    prop, H, target, state = _instance(seed, mode=AmplitudeMode.IDEAL)
    analytic = gradient(state, prop, target, H)
    numeric = finite_difference_gradient(state, prop, target, H)
    assert max_relative_error(analytic, numeric) < 1e-5


def test_corrupted_gradient_is_detected():
    prop, H, target, state = _instance(0)
    analytic = gradient(state, prop, target, H)
    numeric = finite_difference_gradient(state, prop, target, H)
    assert max_relative_error(-analytic, numeric) > 1.0


@pytest.mark.parametrize("seed", range(20))
def test_cascaded_channels_rebuild_q(seed):
    prop, H, target, state = _instance(seed, layers=3, side=2)
    model = AmplitudeModel()
    coeffs = state.coefficients(model)
    Q = end_to_end(H, sim_response(state, prop, model))
    for layer in range(1, 4):
        rebuilt = sum(coeffs[layer - 1, m] * cascaded_channel(state, prop, H, layer, m, model) for m in range(4))
        assert np.allclose(rebuilt, Q, rtol=0, atol=1e-9)


def test_cascaded_channel_bounds(small_prop, unit_channel):
    state = SimState.random(np.random.default_rng(0), 3, 9)
    assert cascaded_channel(state, small_prop, unit_channel, 1, 0).shape == (2, 2)
    with pytest.raises(IndexRangeError):
        cascaded_channel(state, small_prop, unit_channel, 4, 0)
    with pytest.raises(IndexRangeError):
        cascaded_channel(state, small_prop, unit_channel, 1, 9)


def test_normalize_gradient():
    grad = np.array([[0.5, -2.0, 1.0], [0.0, 0.0, 0.0], [1e-3, 0.0, 0.0]])
    out = normalize_gradient(grad)
    assert np.max(np.abs(out[0])) == pytest.approx(np.pi)
    assert out[0, 0] == pytest.approx(np.pi / 4)
    assert np.all(out[1] == 0.0)
    assert out[2, 0] == pytest.approx(np.pi)


def test_codebook_picks_best_candidate(small_prop, unit_channel, small_target):
    one = codebook_init(1, np.random.default_rng(3), small_prop, small_target, unit_channel)
    first = SimState.random(np.random.default_rng(3), 3, 9)
    assert np.array_equal(one.theta, first.theta)
    many = codebook_init(10, np.random.default_rng(3), small_prop, small_target, unit_channel)
    assert objective(many, small_prop, small_target, unit_channel) <= objective(one, small_prop, small_target,
                                                                                  unit_channel)


def test_optimize_tracks_best(small_prop, unit_channel, small_target):
    config = OptimizerConfig(max_iters=30, codebook_size=5)
    report = optimize(config, small_prop, small_target, unit_channel)
    assert len(report.trace) == report.iterations + 1
    assert 1 <= report.iterations <= 30
    assert report.best_nmse == pytest.approx(min(report.trace))
    assert report.best_nmse <= report.init_nmse
    assert objective(report.best_state, small_prop, small_target, unit_channel) == pytest.approx(report.best_nmse)


def test_optimize_from_given_state(small_prop, unit_channel, small_target):
    start = SimState.random(np.random.default_rng(8), 3, 9)
    report = optimize(OptimizerConfig(max_iters=5), small_prop, small_target, unit_channel, initial=start)
    assert report.init_nmse == pytest.approx(objective(start, small_prop, small_target, unit_channel))
    assert report.best_nmse <= report.init_nmse


def test_optimize_is_deterministic(small_prop, unit_channel, small_target):
    config = OptimizerConfig(max_iters=10, codebook_size=3, seed=11)
    a = optimize(config, small_prop, small_target, unit_channel)
    b = optimize(config, small_prop, small_target, unit_channel)
    assert a.trace == b.trace


def test_optimizer_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig(eta0=1.5)
    with pytest.raises(ConfigError):
        OptimizerConfig(rho=0.0)
    with pytest.raises(ConfigError):
        OptimizerConfig(codebook_size=0)


def test_gda_flops():
    assert gda_flops(1, 12, 225, 4).total == 1_002_547_800
    assert gda_flops(10, 12, 225, 4).total == 10_025_478_000
    assert gda_flops(1, 1, 4, 1).total == 4 * 4
    assert gda_flops(1, 1, 1, 1).total == 4
    with pytest.raises(ConfigError):
        gda_flops(0, 12, 225, 4)


def _exact_fit(seed=0):
    prop, H, _, state = _instance(seed, mode=AmplitudeMode.IDEAL)
    reached = end_to_end(H, sim_response(state, prop))
    target = ZfTarget(w_zf=sim_response(state, prop), target=reached, tau=float(np.linalg.norm(reached) ** 2))
    return prop, H, target, state


def test_gradient_vanishes_at_exact_fit():
    prop, H, target, state = _exact_fit()
    assert objective(state, prop, target, H) == 0.0
    assert np.allclose(gradient(state, prop, target, H), 0.0, atol=1e-12)


def test_optimize_from_exact_fit_stays_put():
    prop, H, target, state = _exact_fit(3)
    report = optimize(OptimizerConfig(max_iters=20), prop, target, H, initial=state)
    assert report.init_nmse == 0.0
    assert report.best_nmse == 0.0
    assert report.iterations == 1
    assert np.allclose(report.best_state.theta, state.theta)


def test_single_atom_gradient_closed_form():
    params = SceneParameters(bs_rows=1, bs_cols=1, num_users=1, num_layers=1, atoms_per_side=1)
    scene = build_scene(params, np.random.default_rng(2))
    prop = build_propagation(scene)
    h = nearfield_channel(scene, GainMode.UNIT_MODULUS).unit_modulus
    lam = 0.3 + 0.4j
    target = ZfTarget(w_zf=np.ones((1, 1), dtype=complex), target=np.array([[lam]]), tau=abs(lam) ** 2)
    for theta in (0.0, 1.0, 2.5, 4.0):
        state = SimState(np.array([[theta]]), AmplitudeMode.IDEAL)
        z = np.conj(h[0, 0]) * np.exp(1j * theta) * prop.bs_to_first[0, 0]
        assert objective(state, prop, target, h) == pytest.approx(abs(z - lam) ** 2 / abs(lam) ** 2)
        expected = 2.0 * np.imag(z * np.conj(lam)) / abs(lam) ** 2
        assert gradient(state, prop, target, h)[0, 0] == pytest.approx(expected, rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("revert", [True, False])
def test_rejected_steps_reuse_the_gradient(revert, small_prop, unit_channel, small_target):
    calls = []

    def counted(*args):
        calls.append(1)
        return gradient(*args)

    start = SimState.random(np.random.default_rng(5), 3, 9)
    config = OptimizerConfig(max_iters=25, tolerance=0.0, revert_on_increase=revert)
    report = optimize(config, small_prop, small_target, unit_channel, initial=start, gradient_fn=counted)
    if not revert:
        assert len(calls) == report.iterations
        return
    current, accepted, last_accepted = report.trace[0], [report.trace[0]], False
    for value in report.trace[1:]:
        last_accepted = value <= current
        if last_accepted:
            current = value
            accepted.append(value)
    assert accepted == sorted(accepted, reverse=True)
    assert report.best_nmse == pytest.approx(current)
    assert len(calls) == len(accepted) - (1 if last_accepted else 0)
