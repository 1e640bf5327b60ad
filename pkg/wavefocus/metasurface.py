"""
Meta-atom response models.

A meta-atom is an RLC network whose impedance sets the complex diffraction
coefficient Gamma = (Z - Z0) / (Z + Z0). For optimization the circuit is
replaced by the coupled amplitude-phase model

    a(theta) = (1 - a_min) * ((sin(theta - offset) + 1) / 2) ** iota + a_min

so that each atom is controlled by its phase alone.
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ConfigError, DimensionError, IndexRangeError, SingularCircuitError

TWO_PI = 2.0 * np.pi
FREE_SPACE_IMPEDANCE = 376.73


class AmplitudeMode(str, enum.Enum):
    COUPLED = "coupled"
    IDEAL = "ideal"


@dataclass(frozen=True)
class MetaAtomCircuit:
    capacitance: float = 2.35e-12
    resistance: float = 2.5
    l1: float = 2.5e-9
    l2: float = 0.7e-9
    z0: float = FREE_SPACE_IMPEDANCE

    def __post_init__(self):
        if self.capacitance <= 0.0 or self.resistance < 0.0:
            raise ConfigError("capacitance must be > 0 and resistance >= 0")
        if self.l1 <= 0.0 or self.l2 <= 0.0:
            raise ConfigError("inductances must be > 0")


@dataclass(frozen=True)
class AmplitudeModel:
    a_min: float = 0.2
    theta_offset: float = 0.43 * np.pi
    iota: float = 1.6

    def __post_init__(self):
        if not 0.0 <= self.a_min <= 1.0:
            raise ConfigError(f"a_min must be in [0, 1], got {self.a_min}")
        if self.iota <= 0.0:
            raise ConfigError(f"iota must be > 0, got {self.iota}")
        if not 0.0 <= self.theta_offset < TWO_PI:
            raise ConfigError(f"theta_offset must be in [0, 2pi), got {self.theta_offset}")


def wrap_phase(theta):
    """Canonicalize phases into [0, 2pi)."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2pi for tiny negative inputs
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


@dataclass
class SimState:
    """Phase configuration of an L x M stack plus the amplitude mode."""

    theta: np.ndarray
    mode: AmplitudeMode = AmplitudeMode.COUPLED

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2:
            raise DimensionError(f"theta must be L x M, got shape {theta.shape}")
        self.theta = wrap_phase(theta)
        self.mode = AmplitudeMode(self.mode)

    @property
    def num_layers(self) -> int:
        return self.theta.shape[0]

    @property
    def atoms_per_layer(self) -> int:
        return self.theta.shape[1]

    def amplitudes(self, model: AmplitudeModel) -> np.ndarray:
        if self.mode is AmplitudeMode.IDEAL:
            return np.ones_like(self.theta)
        return amplitude_of_phase(model, self.theta)

    def coefficients(self, model: AmplitudeModel) -> np.ndarray:
        """L x M diffraction coefficients phi = a(theta) e^{j theta}."""
        return self.amplitudes(model) * np.exp(1j * self.theta)

    def copy(self) -> "SimState":
        return SimState(self.theta.copy(), self.mode)

    @classmethod
    def random(cls, rng: np.random.Generator, num_layers: int, atoms: int,
               mode: AmplitudeMode = AmplitudeMode.COUPLED) -> "SimState":
        return cls(rng.random((num_layers, atoms)) * TWO_PI, mode)


def impedance(circuit: MetaAtomCircuit, freq: float) -> complex:
    if freq <= 0.0:
        raise ConfigError(f"frequency must be > 0, got {freq}")
    omega = TWO_PI * freq
    branch = 1j * omega * circuit.l2 + 1.0 / (1j * omega * circuit.capacitance) + circuit.resistance
    denom = 1j * omega * circuit.l1 + branch
    if abs(denom) <= 1e-12 * omega * circuit.l1:
        raise SingularCircuitError(f"parallel resonance at f={freq} Hz")
    return complex(1j * omega * circuit.l1 * branch / denom)


def diffraction_coefficient(circuit: MetaAtomCircuit, freq: float) -> complex:
    z = impedance(circuit, freq)
    if z + circuit.z0 == 0:
        raise SingularCircuitError("Z = -Z0")
    return complex((z - circuit.z0) / (z + circuit.z0))


def amplitude_of_phase(model: AmplitudeModel, theta):
    s = (np.sin(np.asarray(theta) - model.theta_offset) + 1.0) / 2.0
    return (1.0 - model.a_min) * np.power(s, model.iota) + model.a_min


def amplitude_phase_derivative(model: AmplitudeModel, theta):
    """Exact d a / d theta of the coupled model."""
    x = np.asarray(theta) - model.theta_offset
    s = (np.sin(x) + 1.0) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.power(s, model.iota - 1.0)
    return (1.0 - model.a_min) * (model.iota / 2.0) * np.cos(x) * power


def layer_matrix(state: SimState, layer: int, model: Optional[AmplitudeModel] = None) -> np.ndarray:
    """Diagonal M x M response of layer `layer` (1-based)."""
    if not 1 <= layer <= state.num_layers:
        raise IndexRangeError(f"layer {layer} outside 1..{state.num_layers}")
    model = model or AmplitudeModel()
    return np.diag(state.coefficients(model)[layer - 1])


@dataclass(frozen=True)
class CapacitanceSweep:
    capacitance: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray

    def model_amplitude(self, model: AmplitudeModel) -> np.ndarray:
        return amplitude_of_phase(model, self.phase)

    def circuit_amplitude_deviation(self, model: AmplitudeModel) -> float:
        """Largest |circuit amplitude - coupled-model amplitude| over the sweep."""
        return float(np.max(np.abs(self.amplitude - self.model_amplitude(model))))

    @property
    def phase_span(self) -> float:
        return float(self.phase.max() - self.phase.min())


def phase_for_capacitance(circuit: MetaAtomCircuit, capacitances, freq: float = 10e9) -> CapacitanceSweep:
    """Sweep the varactor capacitance and record (|Gamma|, arg Gamma)."""
    caps = np.atleast_1d(np.asarray(capacitances, dtype=float))
    gammas = np.array(
        [
            diffraction_coefficient(
                MetaAtomCircuit(c, circuit.resistance, circuit.l1, circuit.l2, circuit.z0), freq
            )
            for c in caps
        ]
    )
    return CapacitanceSweep(caps, np.abs(gammas), wrap_phase(np.angle(gammas)))


def capacitance_grid(c_min: float = 0.47e-12, c_max: float = 2.35e-12, points: int = 201) -> np.ndarray:
    if not 0.0 < c_min <= c_max or points < 1:
        raise ConfigError("need 0 < c_min <= c_max and points >= 1")
    return np.linspace(c_min, c_max, points) if points > 1 else np.array([c_min])


def parallel_resonance(circuit: MetaAtomCircuit) -> float:
    """Frequency where the lossless network's denominator vanishes (R = 0 only)."""
    return 1.0 / (TWO_PI * math.sqrt((circuit.l1 + circuit.l2) * circuit.capacitance))
