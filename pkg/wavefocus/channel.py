"""
User channels toward the last metasurface layer, the zero-forcing target and
the end-to-end matrix Q = H^H G.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np

from . import ConditioningError, DimensionError, GeometryError
from .geometry import SceneGeometry, pairwise_distances

logger = logging.getLogger(__name__)

PATH_LOSS_EXPONENT = 2.8
FAR_FIELD_REFERENCE = 150.0
MAX_CONDITION = 1e12


class GainMode(str, enum.Enum):
    PHYSICAL = "physical"  # |h_mk| = sqrt(beta_k)
    NORMALIZED = "normalized"  # unit-norm columns
    UNIT_MODULUS = "unit_modulus"  # |h_mk| = 1


@dataclass(frozen=True)
class ChannelSet:
    """H = unit_modulus * scale, column by column."""

    unit_modulus: np.ndarray  # (M, K)
    scale: np.ndarray  # (K,)
    gain_mode: GainMode
    distances: np.ndarray  # (K,) UE to layer-L center

    @property
    def H(self) -> np.ndarray:
        return self.unit_modulus * self.scale[None, :]

    @property
    def normalized(self) -> np.ndarray:
        """Unit-norm columns, the channel the phases are fitted on."""
        return self.unit_modulus / np.sqrt(self.unit_modulus.shape[0])

    @property
    def num_users(self) -> int:
        return self.unit_modulus.shape[1]


@dataclass(frozen=True)
class ZfTarget:
    w_zf: np.ndarray  # (M, K)
    target: np.ndarray  # Lambda = H^H W_ZF, (K, K)
    tau: float


def path_loss(distance, wavelength: float, alpha: float = PATH_LOSS_EXPONENT):
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0.0):
        raise GeometryError(f"path loss needs d > 0, got {distance}")
    beta = (wavelength / (4.0 * np.pi)) ** 2 * d ** (-alpha)
    return float(beta) if beta.ndim == 0 else beta


def _column_scale(mode: GainMode, atoms: int, beta: np.ndarray) -> np.ndarray:
    mode = GainMode(mode)
    if mode is GainMode.PHYSICAL:
        return np.sqrt(beta)
    if mode is GainMode.NORMALIZED:
        return np.full(beta.shape, 1.0 / np.sqrt(atoms))
    return np.ones(beta.shape)


def nearfield_channel(
    geometry: SceneGeometry,
    gain_mode: GainMode = GainMode.PHYSICAL,
    alpha: float = PATH_LOSS_EXPONENT,
) -> ChannelSet:
    """Spherical-wavefront channel h_mk = sqrt(beta_k) exp(-j 2 pi d_mk / lambda)."""
    last = geometry.layer_positions[-1]
    d = pairwise_distances(last, geometry.ue_positions)
    if np.any(d == 0.0):
        raise GeometryError("UE coincides with a meta-atom")
    unit = np.exp(-1j * 2.0 * np.pi * d / geometry.wavelength)
    center = last.mean(axis=0)
    link = np.linalg.norm(geometry.ue_positions - center, axis=1)
    beta = path_loss(link, geometry.wavelength, alpha)
    scale = _column_scale(gain_mode, last.shape[0], np.atleast_1d(beta))
    return ChannelSet(unit, scale, GainMode(gain_mode), link)


def farfield_channel(
    geometry: SceneGeometry,
    reference_distance: float = FAR_FIELD_REFERENCE,
    gain_mode: GainMode = GainMode.PHYSICAL,
    alpha: float = PATH_LOSS_EXPONENT,
) -> ChannelSet:
    """Planar-wavefront channel along each UE's true bearing.

    The phase across the aperture is the first-order expansion of the
    spherical phase, 2 pi (u_k . p_m) / lambda, with the common range term
    dropped, so the near-field column converges to this one at long range.
    """
    last = geometry.layer_positions[-1]
    center = last.mean(axis=0)
    bearing = geometry.ue_positions - center
    norms = np.linalg.norm(bearing, axis=1)
    if np.any(norms == 0.0):
        raise GeometryError("zero-length bearing")
    u = bearing / norms[:, None]
    rel = last - center
    unit = np.exp(1j * 2.0 * np.pi * (rel @ u.T) / geometry.wavelength)
    link = np.full(u.shape[0], float(reference_distance))
    beta = path_loss(link, geometry.wavelength, alpha)
    scale = _column_scale(gain_mode, last.shape[0], np.atleast_1d(beta))
    return ChannelSet(unit, scale, GainMode(gain_mode), link)


def zf_target(H: np.ndarray, max_condition: float = MAX_CONDITION) -> ZfTarget:
    """W_ZF = H (H^H H)^-1 and the target Lambda = H^H W_ZF."""
    gram = H.conj().T @ H
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > max_condition:
        raise ConditioningError(f"H^H H condition number {cond:.3e} exceeds {max_condition:.0e}")
    w_zf = np.linalg.solve(gram.T, H.T).T
    lam = H.conj().T @ w_zf
    tau = float(np.linalg.norm(lam, "fro") ** 2)
    logger.debug("zf target: K=%d cond=%.3e tau=%.4g", H.shape[1], cond, tau)
    return ZfTarget(w_zf, lam, tau)


def end_to_end(H: np.ndarray, G: np.ndarray) -> np.ndarray:
    if H.ndim != 2 or G.ndim != 2 or H.shape[0] != G.shape[0]:
        raise DimensionError(f"H {H.shape} and G {G.shape} are not conformable")
    return H.conj().T @ G
