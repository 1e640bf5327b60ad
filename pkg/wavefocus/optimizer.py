"""
Phase optimization of the metasurface stack.

Minimizes the NMSE between the SIM end-to-end channel H^H G and the
zero-forcing target H^H W_ZF by normalized gradient descent over the
per-atom phases, starting from the best of T random configurations.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import ConfigError, DimensionError, IndexRangeError, WavefocusError
from .channel import ZfTarget, end_to_end
from .metasurface import (
    AmplitudeMode,
    AmplitudeModel,
    SimState,
    amplitude_of_phase,
    amplitude_phase_derivative,
)
from .propagation import PropagationSet, forward_partials

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    eta0: float = 0.99
    rho: float = 0.9
    max_iters: int = 200
    tolerance: float = 1e-6
    codebook_size: int = 200
    seed: int = 0
    eps: float = 1e-12
    revert_on_increase: bool = True  # retry a rejected step from the last accepted state

    def __post_init__(self):
        if not 0.0 < self.eta0 < 1.0:
            raise ConfigError(f"eta0 must be in (0, 1), got {self.eta0}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must be in (0, 1), got {self.rho}")
        if self.codebook_size < 1:
            raise ConfigError("codebook_size must be >= 1")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")


@dataclass
class OptimizerReport:
    trace: List[float]
    best_nmse: float
    best_state: SimState
    iterations: int
    init_nmse: float
    wall_time: float = 0.0


@dataclass(frozen=True)
class FlopCount:
    """Real-operation estimate; per-phase entries are per iteration."""

    total: int
    forward: int
    gradient: int
    regularization: int
    update: int
    learning_rate: int = 1


def nmse(Q: np.ndarray, target: ZfTarget) -> float:
    if target.tau <= 0.0:
        raise WavefocusError("target has zero energy (tau = 0)")
    if Q.shape != target.target.shape:
        raise DimensionError(f"Q {Q.shape} vs target {target.target.shape}")
    return float(np.linalg.norm(Q - target.target, "fro") ** 2 / target.tau)


def _phase_derivative(state_theta: np.ndarray, mode: AmplitudeMode, model: AmplitudeModel):
    """(phi, d phi / d theta) for every atom."""
    rot = np.exp(1j * state_theta)
    if mode is AmplitudeMode.IDEAL:
        return rot, 1j * rot
    a = amplitude_of_phase(model, state_theta)
    da = amplitude_phase_derivative(model, state_theta)
    return a * rot, (da + 1j * a) * rot


def objective(state: SimState, prop: PropagationSet, target: ZfTarget, H: np.ndarray,
              model: Optional[AmplitudeModel] = None) -> float:
    model = model or AmplitudeModel()
    G = forward_partials(state.coefficients(model), prop)[-1]
    return nmse(end_to_end(H, G), target)


def _backward_rows(coeffs: np.ndarray, prop: PropagationSet, H: np.ndarray) -> List[np.ndarray]:
    """[B^1, ..., B^L] with B^L = H^H and B^{l-1} = B^l Phi^l W^l."""
    rows = [None] * prop.num_layers
    acc = H.conj().T
    rows[-1] = acc
    for l in range(prop.num_layers, 1, -1):
        acc = (acc * coeffs[l - 1][None, :]) @ prop.matrix(l)
        rows[l - 2] = acc
    return rows


def _incident(forward: List[np.ndarray], prop: PropagationSet, layer: int) -> np.ndarray:
    """A^l = W^l F^{l-1} (M x S), the field arriving at layer `layer`."""
    if layer == 1:
        return prop.bs_to_first
    return prop.matrix(layer) @ forward[layer - 2]


def cascaded_channel(state: SimState, prop: PropagationSet, H: np.ndarray, layer: int, atom: int,
                     model: Optional[AmplitudeModel] = None) -> np.ndarray:
    """v[k, k~] for atom `atom` (0-based) of layer `layer` (1-based)."""
    if not 1 <= layer <= prop.num_layers:
        raise IndexRangeError(f"layer {layer} outside 1..{prop.num_layers}")
    if not 0 <= atom < prop.atoms_per_layer:
        raise IndexRangeError(f"atom {atom} outside 0..{prop.atoms_per_layer - 1}")
    model = model or AmplitudeModel()
    coeffs = state.coefficients(model)
    forward = forward_partials(coeffs, prop)
    back = _backward_rows(coeffs, prop, H)[layer - 1]
    incident = _incident(forward, prop, layer)
    return np.outer(back[:, atom], incident[atom, :])


def gradient(state: SimState, prop: PropagationSet, target: ZfTarget, H: np.ndarray,
             model: Optional[AmplitudeModel] = None) -> np.ndarray:
    """Exact d nmse / d theta, shape L x M."""
    model = model or AmplitudeModel()
    phi, dphi = _phase_derivative(state.theta, state.mode, model)
    forward = forward_partials(phi, prop)
    err = end_to_end(H, forward[-1]) - target.target
    if err.shape != target.target.shape:
        raise DimensionError(f"Q {err.shape} vs target {target.target.shape}")
    back = _backward_rows(phi, prop, H)

    grad = np.empty(state.theta.shape)
    for l in range(1, prop.num_layers + 1):
        incident = _incident(forward, prop, l)
        # sum_k sum_k~ conj(E[k,k~]) v[m,k,k~]
        weight = np.sum(back[l - 1] * (err.conj() @ incident.T), axis=0)
        grad[l - 1] = (2.0 / target.tau) * np.real(dphi[l - 1] * weight)
    return grad


def finite_difference_gradient(state: SimState, prop: PropagationSet, target: ZfTarget, H: np.ndarray,
                               model: Optional[AmplitudeModel] = None, step: float = 1e-6) -> np.ndarray:
    model = model or AmplitudeModel()
    grad = np.empty(state.theta.shape)
    for idx in np.ndindex(*state.theta.shape):
        plus = state.theta.copy()
        minus = state.theta.copy()
        plus[idx] += step
        minus[idx] -= step
        f_plus = objective(SimState(plus, state.mode), prop, target, H, model)
        f_minus = objective(SimState(minus, state.mode), prop, target, H, model)
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, reference: np.ndarray, floor: float = 1e-12) -> float:
    scale = max(float(np.max(np.abs(reference))), floor)
    return float(np.max(np.abs(analytic - reference)) / scale)


def normalize_gradient(grad: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale each layer's row so its largest |entry| equals pi."""
    out = np.array(grad, dtype=float, copy=True)
    peaks = np.max(np.abs(out), axis=1)
    for l, mu in enumerate(peaks):
        if mu >= eps:
            out[l] *= np.pi / mu
    return out


def codebook_init(size: int, rng: np.random.Generator, prop: PropagationSet, target: ZfTarget, H: np.ndarray,
                  model: Optional[AmplitudeModel] = None,
                  mode: AmplitudeMode = AmplitudeMode.COUPLED) -> SimState:
    """Best of `size` uniform-phase configurations."""
    if size < 1:
        raise ConfigError("codebook size must be >= 1")
    model = model or AmplitudeModel()
    best_state, best_val = None, np.inf
    for _ in range(size):
        candidate = SimState.random(rng, prop.num_layers, prop.atoms_per_layer, mode)
        val = objective(candidate, prop, target, H, model)
        if val < best_val:
            best_state, best_val = candidate, val
    logger.debug("codebook: best of %d candidates nmse=%.4g", size, best_val)
    return best_state


def optimize(config: OptimizerConfig, prop: PropagationSet, target: ZfTarget, H: np.ndarray,
             model: Optional[AmplitudeModel] = None,
             mode: AmplitudeMode = AmplitudeMode.COUPLED,
             initial: Optional[SimState] = None,
             rng: Optional[np.random.Generator] = None,
             gradient_fn: Callable = gradient) -> OptimizerReport:
    """Normalized gradient descent with learning-rate decay, best-so-far tracking.

    With `revert_on_increase`, a step that raises the NMSE is discarded and the
    next, smaller step is taken from the last accepted state. Every evaluated
    value goes into the trace either way.
    """
    model = model or AmplitudeModel()
    start = time.perf_counter()
    if initial is None:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        initial = codebook_init(config.codebook_size, rng, prop, target, H, model, mode)
    state = initial.copy()

    current = objective(state, prop, target, H, model)
    trace = [current]
    best_val, best_state = current, state.copy()
    eta = config.eta0
    iterations = 0

    step = None
    for it in range(1, config.max_iters + 1):
        if step is None:
            step = normalize_gradient(gradient_fn(state, prop, target, H, model), config.eps)
        candidate = SimState(state.theta - eta * step, state.mode)
        eta *= config.rho
        value = objective(candidate, prop, target, H, model)
        trace.append(value)
        iterations = it
        if value < best_val:
            best_val, best_state = value, candidate.copy()
        logger.debug("iter %d nmse=%.6g eta=%.4g", it, value, eta)
        if abs(value - current) < config.tolerance:
            break
        if config.revert_on_increase and value > current:
            continue
        state, current, step = candidate, value, None

    report = OptimizerReport(
        trace=trace,
        best_nmse=best_val,
        best_state=best_state,
        iterations=iterations,
        init_nmse=trace[0],
        wall_time=time.perf_counter() - start,
    )
    logger.info("optimize: %d iterations, nmse %.4g -> %.4g", iterations, report.init_nmse, best_val)
    return report


def gda_flops(iterations: int, num_layers: int, atoms: int, users: int, antennas: Optional[int] = None) -> FlopCount:
    """Operation count 4 I [(2L-2) M^3 + M L K^2] with its per-phase breakdown."""
    for name, value in (("iterations", iterations), ("num_layers", num_layers), ("atoms", atoms), ("users", users)):
        if value < 1:
            raise ConfigError(f"{name} must be >= 1, got {value}")
    s = users if antennas is None else antennas
    I, L, M, K = iterations, num_layers, atoms, users
    return FlopCount(
        total=4 * I * ((2 * L - 2) * M ** 3 + M * L * K ** 2),
        forward=4 * ((2 * L - 2) * M ** 3 + 2 * K ** 2 * (M + 1) + M ** 2 * s),
        gradient=4 * M * L * K ** 2,
        regularization=4 * M * L,
        update=M * L,
        learning_rate=1,
    )
