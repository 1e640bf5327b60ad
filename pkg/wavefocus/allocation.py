"""
Power allocation and link metrics on the end-to-end channel Q.

Row k of Q is UE k's end-to-end row; Q[k, k] is the desired link and the
off-diagonal entries of that row are the interference it sees.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import optimize as sciopt

from . import ConfigError, DimensionError, GeometryError, WavefocusError
from .geometry import SceneGeometry, pairwise_distances

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerAllocation:
    powers: np.ndarray  # W
    total: float  # P_T, W
    water_level: float
    rounds: int = 0
    converged: bool = True


@dataclass(frozen=True)
class RateReport:
    sinr: np.ndarray
    rates: np.ndarray  # bit/s/Hz per UE
    sum_rate: float
    noise: np.ndarray

    @property
    def sinr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.sinr)


@dataclass(frozen=True)
class Heatmap:
    x: np.ndarray  # (nx,)
    y: np.ndarray  # (ny,)
    energy: np.ndarray  # (ny, nx), row-major in y

    def value_at(self, x: float, y: float) -> float:
        """Energy of the grid cell nearest to (x, y)."""
        ix = int(np.argmin(np.abs(self.x - x)))
        iy = int(np.argmin(np.abs(self.y - y)))
        return float(self.energy[iy, ix])


def _noise_vector(noise, users: int) -> np.ndarray:
    sigma2 = np.broadcast_to(np.asarray(noise, dtype=float), (users,)).copy()
    if np.any(sigma2 <= 0.0):
        raise ConfigError("noise powers must be > 0")
    return sigma2


def _link_gains(Q: np.ndarray) -> np.ndarray:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionError(f"Q must be square, got {Q.shape}")
    return np.abs(Q) ** 2


def sinr(Q: np.ndarray, powers, noise) -> np.ndarray:
    gains = _link_gains(Q)
    p = np.asarray(powers, dtype=float)
    if np.any(p < 0.0):
        raise ConfigError("powers must be >= 0")
    sigma2 = _noise_vector(noise, gains.shape[0])
    desired = np.diag(gains)
    signal = p * desired
    interference = gains @ p - signal
    return signal / (interference + sigma2)


def sum_rate(gamma) -> float:
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0.0):
        raise ConfigError("SINR must be >= 0")
    return float(np.sum(np.log2(1.0 + g)))


def rate_report(Q: np.ndarray, powers, noise) -> RateReport:
    gamma = sinr(Q, powers, noise)
    rates = np.log2(1.0 + gamma)
    return RateReport(gamma, rates, float(rates.sum()), _noise_vector(noise, gamma.size))


def pour(floors: np.ndarray, budget: float) -> Tuple[np.ndarray, float]:
    """p_k = (kappa - floors_k)^+ with sum p = budget; kappa by bisection."""
    e = np.asarray(floors, dtype=float)

    def excess(level: float) -> float:
        return float(np.sum(np.maximum(level - e, 0.0)) - budget)

    lo, hi = float(e.min()), float(e.max()) + 2.0 * budget
    level = sciopt.bisect(excess, lo, hi, xtol=1e-15 * max(hi, 1.0), maxiter=200)
    # Settle on the exact level for the active set found by bisection.
    active = e < level
    if not active.any():
        active = e == e.min()
    for _ in range(e.size + 1):
        level = (budget + float(e[active].sum())) / int(active.sum())
        refreshed = e < level
        if np.array_equal(refreshed, active):
            break
        active = refreshed
    return np.maximum(level - e, 0.0), level


def uniform_power(users: int, budget: float) -> PowerAllocation:
    return PowerAllocation(np.full(users, budget / users), budget, float("nan"))


def water_filling(Q: np.ndarray, noise, budget: float, max_rounds: int = 100, tol: float = 1e-8) -> PowerAllocation:
    """Iterative water-filling with interference frozen at the previous iterate.

    Stops when the largest power change falls below tol * budget.
    """
    if budget <= 0.0:
        raise ConfigError(f"power budget must be > 0, got {budget}")
    gains = _link_gains(Q)
    users = gains.shape[0]
    sigma2 = _noise_vector(noise, users)
    desired = np.diag(gains)
    if np.any(desired == 0.0):
        raise WavefocusError("zero desired-link gain on the diagonal of Q")

    p = np.full(users, budget / users)
    level = float("nan")
    for rounds in range(1, max_rounds + 1):
        interference = gains @ p - desired * p
        floors = (interference + sigma2) / desired
        new_p, level = pour(floors, budget)
        change = float(np.max(np.abs(new_p - p)))
        p = new_p
        if change < tol * budget:
            return PowerAllocation(p, budget, level, rounds, True)
    logger.warning("water-filling did not converge in %d rounds", max_rounds)
    return PowerAllocation(p, budget, level, max_rounds, False)


def heatmap(geometry: SceneGeometry, G: np.ndarray, x_range: Tuple[float, float], y_range: Tuple[float, float],
            nx: int, ny: int, coherent: bool = False) -> Heatmap:
    """Received energy on the z = 0 plane from the last layer's field.

    Incoherent (default): sum_k |h^H g_k|^2. Coherent: |sum_k h^H g_k|^2.
    """
    if nx < 1 or ny < 1:
        raise ConfigError("grid resolution must be >= 1")
    last = geometry.layer_positions[-1]
    if G.shape[0] != last.shape[0]:
        raise DimensionError(f"G has {G.shape[0]} rows, layer has {last.shape[0]} atoms")
    xs = np.linspace(x_range[0], x_range[1], nx)
    ys = np.linspace(y_range[0], y_range[1], ny)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])

    d = pairwise_distances(points, last)
    if np.any(d == 0.0):
        raise GeometryError("heatmap sample coincides with a meta-atom")
    rows = np.exp(1j * 2.0 * np.pi * d / geometry.wavelength) / np.sqrt(last.shape[0])  # h^H
    field = rows @ G
    if coherent:
        energy = np.abs(field.sum(axis=1)) ** 2
    else:
        energy = np.sum(np.abs(field) ** 2, axis=1)
    return Heatmap(xs, ys, energy.reshape(ny, nx))
