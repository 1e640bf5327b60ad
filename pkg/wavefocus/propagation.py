"""
Rayleigh-Sommerfeld propagation through the metasurface stack.

W^1 couples the BS array to layer 1, W^l couples layer l-1 to layer l. The
stack response is G = Phi^L W^L ... Phi^1 W^1.
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import DimensionError, GeometryError, IndexRangeError
from .geometry import PLANE_NORMAL, SceneGeometry
from .metasurface import AmplitudeModel, SimState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PropagationSet:
    bs_to_first: np.ndarray  # W^1, (M, S)
    inter_layer: List[np.ndarray]  # W^2 .. W^L, each (M, M)
    fingerprint: str

    @property
    def num_layers(self) -> int:
        return 1 + len(self.inter_layer)

    @property
    def atoms_per_layer(self) -> int:
        return self.bs_to_first.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.bs_to_first.shape[1]

    def matrix(self, layer: int) -> np.ndarray:
        """W^layer, 1-based."""
        if layer == 1:
            return self.bs_to_first
        if 2 <= layer <= self.num_layers:
            return self.inter_layer[layer - 2]
        raise IndexRangeError(f"layer {layer} outside 1..{self.num_layers}")


def rs_coefficient(src, dst, src_normal, wavelength: float, atom_area: float) -> complex:
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if wavelength <= 0.0 or atom_area <= 0.0:
        raise GeometryError("wavelength and atom area must be > 0")
    coeffs = _rs_matrix(dst[None, :], src[None, :], np.asarray(src_normal, dtype=float), wavelength, atom_area)
    return complex(coeffs[0, 0])


def _rs_matrix(dst: np.ndarray, src: np.ndarray, normal: np.ndarray, wavelength: float, atom_area: float) -> np.ndarray:
    """Vectorized rs_coefficient: entry [i, j] couples src[j] -> dst[i]."""
    diff = dst[:, None, :] - src[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if np.any(r == 0.0):
        raise GeometryError("coincident source and destination points")
    cos_psi = (diff @ (normal / np.linalg.norm(normal))) / r
    return (
        cos_psi * atom_area / r
        * (1.0 / (2.0 * np.pi * r) - 1j / wavelength)
        * np.exp(1j * 2.0 * np.pi * r / wavelength)
    )


def geometry_fingerprint(geometry: SceneGeometry) -> str:
    h = hashlib.sha256()
    h.update(np.float64(geometry.wavelength).tobytes())
    h.update(np.ascontiguousarray(geometry.bs_positions).tobytes())
    h.update(np.ascontiguousarray(geometry.layer_positions).tobytes())
    return h.hexdigest()[:16]


def _isomorphic_spacing(geometry: SceneGeometry) -> bool:
    layers = geometry.layer_positions
    if layers.shape[0] < 3:
        return True
    steps = np.diff(layers, axis=0)
    return bool(np.allclose(steps, steps[0], rtol=0.0, atol=1e-12))


def build_propagation(geometry: SceneGeometry, reuse: bool = True) -> PropagationSet:
    lam = geometry.wavelength
    area = geometry.atom_area
    layers = geometry.layer_positions
    first = _rs_matrix(layers[0], geometry.bs_positions, PLANE_NORMAL, lam, area)

    inter: List[np.ndarray] = []
    shared: Optional[np.ndarray] = None
    can_share = reuse and _isomorphic_spacing(geometry)
    for l in range(1, geometry.num_layers):
        if shared is not None:
            inter.append(shared)
            continue
        w = _rs_matrix(layers[l], layers[l - 1], PLANE_NORMAL, lam, area)
        inter.append(w)
        if can_share:
            shared = w
    logger.debug("propagation built: L=%d, shared inter-layer=%s", geometry.num_layers, can_share)
    return PropagationSet(first, inter, geometry_fingerprint(geometry))


def forward_partials(coefficients: np.ndarray, prop: PropagationSet) -> List[np.ndarray]:
    """[F^1, ..., F^L] with F^l = Phi^l W^l ... Phi^1 W^1, each M x S."""
    _check_dims(coefficients, prop)
    partials = []
    acc = coefficients[0][:, None] * prop.bs_to_first
    partials.append(acc)
    for l in range(1, prop.num_layers):
        acc = coefficients[l][:, None] * (prop.inter_layer[l - 1] @ acc)
        partials.append(acc)
    return partials


def response_from_coefficients(coefficients: np.ndarray, prop: PropagationSet) -> np.ndarray:
    return forward_partials(coefficients, prop)[-1]


def sim_response(state: SimState, prop: PropagationSet, model: Optional[AmplitudeModel] = None) -> np.ndarray:
    """G = Phi^L W^L ... Phi^1 W^1, accumulated as tall-thin products."""
    model = model or AmplitudeModel()
    return response_from_coefficients(state.coefficients(model), prop)


def _check_dims(coefficients: np.ndarray, prop: PropagationSet) -> None:
    if coefficients.ndim != 2 or coefficients.shape != (prop.num_layers, prop.atoms_per_layer):
        raise DimensionError(
            f"state is {coefficients.shape}, propagation expects "
            f"({prop.num_layers}, {prop.atoms_per_layer})"
        )
