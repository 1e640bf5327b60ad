"""
Stacked-metasurface wave-domain beamfocusing simulator for near-field
multiuser MISO downlinks.
"""

__version__ = "0.1.0"


class WavefocusError(Exception):
    """Base class for every error raised by the simulator."""


class GeometryError(WavefocusError, ValueError):
    """Invalid scene parameters or degenerate point configurations."""


class SingularCircuitError(WavefocusError, ZeroDivisionError):
    """Meta-atom circuit evaluated at a singular (resonant) operating point."""


class DimensionError(WavefocusError, ValueError):
    """Array shapes that do not conform."""


class ConditioningError(WavefocusError, ArithmeticError):
    """Gram matrix too ill-conditioned for zero-forcing."""


class ConfigError(WavefocusError, ValueError):
    """Bad experiment configuration or out-of-range parameter values."""


class IndexRangeError(WavefocusError, IndexError):
    """Layer or atom index outside the stack."""


__all__ = [
    "WavefocusError",
    "GeometryError",
    "SingularCircuitError",
    "DimensionError",
    "ConditioningError",
    "ConfigError",
    "IndexRangeError",
]
