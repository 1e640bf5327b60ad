"""
Experiment configuration.

Config files are flat key=value text read with python-dotenv. Precedence is
profile defaults < config file < explicit overrides (the CLI flags).
"""

import logging
import math
import os
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional, Tuple

import scipy.constants
from dotenv import dotenv_values

from . import ConfigError
from .channel import GainMode
from .geometry import SceneParameters
from .metasurface import AmplitudeMode, AmplitudeModel, MetaAtomCircuit, capacitance_grid
from .optimizer import OptimizerConfig

logger = logging.getLogger(__name__)

SCHEMES = ("proposed", "codebook", "random", "zf-oracle")
POWER_RULES = ("uniform", "water-filling")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class ExperimentConfig:
    # scene
    wavelength_m: float = 0.03
    freq_hz: float = 10e9
    bs_rows: int = 2
    bs_cols: int = 2
    layers: int = 6
    atoms_per_side: int = 7
    d_s_factor: float = 1.0
    d_m_factor: float = 1.0
    d_l_factor: float = 1.2
    bs_height_m: float = 3.0
    ue_center_x_m: float = 3.0
    ue_center_y_m: float = 3.0
    ue_radius_m: float = 3.0
    # meta-atom
    a_min: float = 0.2
    theta_offset_rad: float = 0.43 * math.pi
    iota: float = 1.6
    resistance_ohm: float = 2.5
    l1_h: float = 2.5e-9
    l2_h: float = 0.7e-9
    c_min_f: float = 0.47e-12
    c_max_f: float = 2.35e-12
    # optimizer
    eta0: float = 0.99
    rho: float = 0.9
    max_iters: int = 200
    tolerance: float = 1e-6
    codebook_size: int = 200
    revert_on_increase: bool = True
    # link budget
    p_t_dbm: float = 5.0
    noise_dbm: float = -120.0
    alpha: float = 2.8
    gain_mode: str = GainMode.PHYSICAL.value
    amplitude_mode: str = AmplitudeMode.COUPLED.value
    sweep_power: str = "uniform"
    far_field_ref_m: float = 150.0
    # runs
    trials: int = 20
    seed: int = 0
    schemes: Tuple[str, ...] = SCHEMES
    layers_list: Tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    users_list: Tuple[int, ...] = (1, 2, 3, 4)
    workers: int = 1
    out_dir: str = "results"
    # heatmap
    heatmap_nx: int = 50
    heatmap_ny: int = 100
    heatmap_spacing_m: float = 1.5
    coherent_heatmap: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.wavelength_m <= 0.0 or self.freq_hz <= 0.0:
            raise ConfigError("wavelength_m and freq_hz must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ConfigError(f"unknown schemes {unknown}; choose from {SCHEMES}")
        for name, enum_cls in (("gain_mode", GainMode), ("amplitude_mode", AmplitudeMode)):
            try:
                enum_cls(getattr(self, name))
            except ValueError:
                raise ConfigError(f"bad {name}: {getattr(self, name)!r}") from None
        if self.sweep_power not in POWER_RULES:
            raise ConfigError(f"bad sweep_power: {self.sweep_power!r}; choose from {POWER_RULES}")
        if any(v < 1 for v in tuple(self.layers_list) + tuple(self.users_list)):
            raise ConfigError("layers_list and users_list entries must be >= 1")
        # the builders carry the range checks for their own fields
        self.amplitude_model()
        self.optimizer()
        self.circuit()
        capacitance_grid(self.c_min_f, self.c_max_f)

    @property
    def p_t_w(self) -> float:
        return dbm_to_watts(self.p_t_dbm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def atoms_per_layer(self) -> int:
        return self.atoms_per_side ** 2

    @property
    def num_users(self) -> int:
        return self.bs_rows * self.bs_cols

    def scene(self) -> SceneParameters:
        return SceneParameters(
            wavelength=self.wavelength_m,
            bs_rows=self.bs_rows,
            bs_cols=self.bs_cols,
            num_users=self.num_users,
            num_layers=self.layers,
            atoms_per_side=self.atoms_per_side,
            d_s_factor=self.d_s_factor,
            d_m_factor=self.d_m_factor,
            d_l_factor=self.d_l_factor,
            height=self.bs_height_m,
            ue_center=(self.ue_center_x_m, self.ue_center_y_m),
            ue_radius=self.ue_radius_m,
        )

    def amplitude_model(self) -> AmplitudeModel:
        return AmplitudeModel(self.a_min, self.theta_offset_rad, self.iota)

    def circuit(self, capacitance: Optional[float] = None) -> MetaAtomCircuit:
        return MetaAtomCircuit(
            capacitance=self.c_max_f if capacitance is None else capacitance,
            resistance=self.resistance_ohm,
            l1=self.l1_h,
            l2=self.l2_h,
        )

    def optimizer(self, seed: Optional[int] = None) -> OptimizerConfig:
        return OptimizerConfig(
            eta0=self.eta0,
            rho=self.rho,
            max_iters=self.max_iters,
            tolerance=self.tolerance,
            codebook_size=self.codebook_size,
            seed=self.seed if seed is None else seed,
            revert_on_increase=self.revert_on_increase,
        )

    def with_users(self, users: int) -> "ExperimentConfig":
        """S = K: pick the squarest BS grid with `users` antennas."""
        rows, cols = antenna_grid(users)
        return replace(self, bs_rows=rows, bs_cols=cols)


def antenna_grid(antennas: int) -> Tuple[int, int]:
    if antennas < 1:
        raise ConfigError(f"need at least one antenna, got {antennas}")
    rows = max(r for r in range(1, math.isqrt(antennas) + 1) if antennas % r == 0)
    return rows, antennas // rows


PROFILES: Dict[str, Dict[str, object]] = {
    "desk": {},
    "paper": {
        "layers": 12,
        "atoms_per_side": 15,
        "trials": 100,
        "layers_list": tuple(range(1, 13)),
        "users_list": (2, 4, 6, 8),
    },
}


def _as_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _coerce(name: str, raw, template):
    """Convert a raw string to the type of the field's default."""
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(template, bool):
            return _as_bool(raw)
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, tuple):
            items = [item.strip() for item in raw.split(",") if item.strip()]
            if template and isinstance(template[0], int):
                return tuple(int(item) for item in items)
            return tuple(items)
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {raw!r} ({e})") from None
    return raw.strip()


def load_config(path: Optional[str] = None, profile: str = "desk",
                overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    values: Dict[str, object] = dict(PROFILES[profile])

    file_values: Dict[str, object] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        file_values = {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys in {path}: {unknown}")
    values.update(file_values)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    typed = {name: _coerce(name, raw, getattr(defaults, name)) for name, raw in values.items()}

    # wavelength and frequency: derive the missing one
    given = set(file_values) | set(overrides or {})
    if "freq_hz" in given and "wavelength_m" not in given:
        typed["wavelength_m"] = scipy.constants.c / float(typed["freq_hz"])
    elif "wavelength_m" in given and "freq_hz" not in given:
        typed["freq_hz"] = scipy.constants.c / float(typed["wavelength_m"])
    config = replace(defaults, **typed)
    mismatch = abs(scipy.constants.c / config.freq_hz - config.wavelength_m) / config.wavelength_m
    if mismatch > 0.01:
        logger.warning("wavelength_m=%g disagrees with freq_hz=%g by %.1f%%; geometry uses wavelength_m",
                       config.wavelength_m, config.freq_hz, 100 * mismatch)
    return config
