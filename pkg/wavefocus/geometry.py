"""
Scene construction: BS array, SIM layers and UE positions in 3-D.

The BS array and every metasurface layer are uniform planar arrays lying in
planes parallel to x-z. Layer l is centered at (0, l*d_L, H_S); the BS array
at (0, 0, H_BS). UEs sit on the ground plane z = 0.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import GeometryError

logger = logging.getLogger(__name__)

# Propagation normal shared by the BS array and every layer.
PLANE_NORMAL = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class SceneParameters:
    """Scalar inputs to build_scene; spacings are multiples of the wavelength."""

    wavelength: float = 0.03
    bs_rows: int = 2
    bs_cols: int = 2
    num_users: int = 4
    num_layers: int = 12
    atoms_per_side: int = 15
    d_s_factor: float = 1.0
    d_m_factor: float = 1.0
    d_l_factor: float = 1.2
    height: float = 3.0
    ue_center: tuple = (3.0, 3.0)
    ue_radius: float = 3.0

    @property
    def num_antennas(self) -> int:
        return self.bs_rows * self.bs_cols

    @property
    def atoms_per_layer(self) -> int:
        return self.atoms_per_side ** 2

    def with_atoms(self, atoms_per_layer: int) -> "SceneParameters":
        return replace(self, atoms_per_side=require_square(atoms_per_layer))


@dataclass(frozen=True)
class SceneGeometry:
    wavelength: float
    bs_positions: np.ndarray  # (S, 3)
    layer_positions: np.ndarray  # (L, M, 3)
    ue_positions: np.ndarray  # (K, 3)
    d_s: float
    d_m: float
    d_l: float
    height: float
    ue_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ue_radius: float = 0.0

    @property
    def atom_area(self) -> float:
        return self.d_m ** 2

    @property
    def num_antennas(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def num_layers(self) -> int:
        return self.layer_positions.shape[0]

    @property
    def atoms_per_layer(self) -> int:
        return self.layer_positions.shape[1]

    @property
    def num_users(self) -> int:
        return self.ue_positions.shape[0]

    def layer_center(self, layer: int) -> np.ndarray:
        """Center of layer `layer` (1-based, as in the layer numbering)."""
        if not 1 <= layer <= self.num_layers:
            raise GeometryError(f"layer {layer} outside 1..{self.num_layers}")
        return self.layer_positions[layer - 1].mean(axis=0)

    def with_users(self, ue_positions: np.ndarray) -> "SceneGeometry":
        """Same BS/SIM placement, different UE set (center/radius refit)."""
        ue = _check_points(ue_positions, "ue_positions")
        center, radius = _enclosing_disk(ue)
        return SceneGeometry(
            wavelength=self.wavelength,
            bs_positions=self.bs_positions,
            layer_positions=self.layer_positions,
            ue_positions=ue,
            d_s=self.d_s,
            d_m=self.d_m,
            d_l=self.d_l,
            height=self.height,
            ue_center=center,
            ue_radius=radius,
        )


def upa_positions(rows: int, cols: int, spacing: float, center) -> np.ndarray:
    """Row-major grid of rows x cols points in the x-z plane around `center`."""
    xs = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    zs = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    zz, xx = np.meshgrid(zs, xs, indexing="ij")
    pts = np.zeros((rows * cols, 3))
    pts[:, 0] = xx.ravel()
    pts[:, 2] = zz.ravel()
    return pts + np.asarray(center, dtype=float)


def sample_disk(rng: np.random.Generator, count: int, center, radius: float) -> np.ndarray:
    """Uniform-by-area samples on the z = 0 disk."""
    u = rng.random(count)
    phi = rng.random(count) * 2.0 * np.pi
    r = radius * np.sqrt(u)
    pts = np.zeros((count, 3))
    pts[:, 0] = center[0] + r * np.cos(phi)
    pts[:, 1] = center[1] + r * np.sin(phi)
    return pts


def build_scene(
    params: SceneParameters,
    rng: np.random.Generator,
    ue_positions: Optional[np.ndarray] = None,
) -> SceneGeometry:
    """Place BS, layers and UEs. UEs are drawn from `rng` unless given explicitly."""
    _validate(params)
    lam = params.wavelength
    d_s = params.d_s_factor * lam
    d_m = params.d_m_factor * lam
    d_l = params.d_l_factor * lam
    n = params.atoms_per_side

    bs = upa_positions(params.bs_rows, params.bs_cols, d_s, (0.0, 0.0, params.height))
    layers = np.stack(
        [
            upa_positions(n, n, d_m, (0.0, l * d_l, params.height))
            for l in range(1, params.num_layers + 1)
        ]
    )

    if ue_positions is None:
        center = np.array([params.ue_center[0], params.ue_center[1], 0.0])
        ues = sample_disk(rng, params.num_users, center, params.ue_radius)
        radius = params.ue_radius
    else:
        ues = _check_points(ue_positions, "ue_positions")
        if np.any(ues[:, 2] != 0.0):
            raise GeometryError("UE positions must lie on z = 0")
        center, radius = _enclosing_disk(ues)

    logger.debug("scene: S=%d L=%d M=%d K=%d", bs.shape[0], layers.shape[0], n * n, ues.shape[0])
    return SceneGeometry(
        wavelength=lam,
        bs_positions=bs,
        layer_positions=layers,
        ue_positions=ues,
        d_s=d_s,
        d_m=d_m,
        d_l=d_l,
        height=params.height,
        ue_center=np.asarray(center, dtype=float),
        ue_radius=float(radius),
    )


def rayleigh_distance(geometry: SceneGeometry) -> float:
    """2 D^2 / lambda with D the diagonal aperture of one layer."""
    side = math.isqrt(geometry.atoms_per_layer)
    aperture = math.sqrt(2.0) * (side - 1) * geometry.d_m
    return 2.0 * aperture ** 2 / geometry.wavelength


def link_distance(p, q) -> float:
    return float(np.linalg.norm(np.asarray(q, dtype=float) - np.asarray(p, dtype=float)))


def link_angle(p, q, normal=PLANE_NORMAL) -> float:
    """Angle between the direction p -> q and the source-plane normal, in [0, pi]."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise GeometryError("link_angle undefined for coincident points")
    nrm = np.asarray(normal, dtype=float)
    c = float(np.dot(d, nrm) / (r * np.linalg.norm(nrm)))
    return math.acos(min(1.0, max(-1.0, c)))


def pairwise_distances(dst: np.ndarray, src: np.ndarray) -> np.ndarray:
    """(len(dst), len(src)) matrix of Euclidean distances."""
    diff = dst[:, None, :] - src[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _validate(params: SceneParameters) -> None:
    counts = {
        "bs_rows": params.bs_rows,
        "bs_cols": params.bs_cols,
        "num_users": params.num_users,
        "num_layers": params.num_layers,
        "atoms_per_side": params.atoms_per_side,
    }
    for name, value in counts.items():
        if int(value) != value or value < 1:
            raise GeometryError(f"{name} must be a positive integer, got {value}")
    scalars = {
        "wavelength": params.wavelength,
        "d_s_factor": params.d_s_factor,
        "d_m_factor": params.d_m_factor,
        "d_l_factor": params.d_l_factor,
    }
    for name, value in scalars.items():
        if not math.isfinite(value) or value <= 0.0:
            raise GeometryError(f"{name} must be finite and > 0, got {value}")
    if not math.isfinite(params.height) or params.ue_radius < 0.0:
        raise GeometryError("height must be finite and ue_radius >= 0")
    if not all(math.isfinite(c) for c in params.ue_center):
        raise GeometryError(f"non-finite UE disk center {params.ue_center}")


def require_square(atoms_per_layer: int) -> int:
    """Side length of a square UPA holding `atoms_per_layer` atoms."""
    side = math.isqrt(atoms_per_layer) if atoms_per_layer >= 0 else -1
    if atoms_per_layer < 1 or side * side != atoms_per_layer:
        raise GeometryError(f"M={atoms_per_layer} is not a perfect square")
    return side


def _check_points(points, name: str) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError(f"{name} must have shape (n, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError(f"{name} contains non-finite coordinates")
    return pts


def _enclosing_disk(ues: np.ndarray):
    center = np.array([ues[:, 0].mean(), ues[:, 1].mean(), 0.0])
    radius = float(np.max(np.hypot(ues[:, 0] - center[0], ues[:, 1] - center[1])))
    return center, radius
