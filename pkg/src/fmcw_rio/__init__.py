"""FMCW radar measurement models, quantization noise, and radar-inertial odometry."""

from .errors import ConfigError, DatasetError, DomainError, InitializationError
from .radar import AoaPhases, ChirpConfig, RadarPoint, RadarScan, get_preset, load_chirp_config

__version__ = "0.1.0"

__all__ = [
    "AoaPhases",
    "ChirpConfig",
    "ConfigError",
    "DatasetError",
    "DomainError",
    "InitializationError",
    "RadarPoint",
    "RadarScan",
    "get_preset",
    "load_chirp_config",
]
