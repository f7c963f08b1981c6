"""Estimator configuration.

The three named presets mirror the ablations: ``base`` (constant Doppler
variance), ``noise`` (state-dependent Doppler variance) and ``geometry``
(noise plus map registration). Barometry is a separate switch.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from ..errors import ConfigError
from ..sim.synth import ACCEL_BIAS_RW, ACCEL_NOISE, GYRO_BIAS_RW, GYRO_NOISE


@dataclass
class EstimatorConfig:
    # IMU densities, per-sqrt(Hz) units
    gyro_noise: float = GYRO_NOISE
    accel_noise: float = ACCEL_NOISE
    gyro_bias_rw: float = GYRO_BIAS_RW
    accel_bias_rw: float = ACCEL_BIAS_RW
    gravity: float = 9.81

    # radar; None means "take from the chirp config"
    chirp: Optional[str] = None
    sigma_doppler: Optional[float] = None
    sigma_range: Optional[float] = None
    sigma_phase: Optional[float] = None  # rad
    min_range: float = 0.5
    max_range: Optional[float] = None
    max_azimuth_deg: float = 60.0
    max_elevation_deg: float = 60.0
    gyro_average_window: float = 0.01  # s, half-width for the mean angular rate

    # extrinsics (radar -> body); None means "take from the dataset header"
    radar_rpy_deg: Optional[Tuple[float, float, float]] = None
    lever_arm: Optional[Tuple[float, float, float]] = None
    estimate_extrinsics: bool = False
    extrinsics_sigma: Tuple[float, float] = (math.radians(1.0), 0.01)

    # barometer
    baro_std: float = 0.05
    baro_bias_rw: float = 0.002  # m/sqrt(s)

    # smoother
    lag: float = 2.0  # s
    max_iterations: int = 5
    convergence_tol: float = 1e-3  # relative cost decrease that ends the iterations
    cauchy_scale: float = 1.0
    huber_scale: float = 1.345
    registration_loss: str = "cauchy"
    kappa_static: float = 3.0
    rebias_threshold: Tuple[float, float] = (0.05, 0.005)  # accel m/s^2, gyro rad/s

    # initialization
    init_duration: float = 1.0
    init_accel_std_max: float = 0.1  # per-axis std above this means the platform moved
    init_gyro_std_max: float = 0.01
    init_sigma_rp: float = math.radians(0.5)
    init_sigma_yaw: float = 1e-4
    init_sigma_p: float = 1e-4
    init_sigma_v: float = 0.01
    init_sigma_ba: float = 0.02
    init_sigma_bg: float = 1e-3

    # mapping
    voxel_size: float = 0.5
    neighbor_radius: float = 1.0
    min_neighbors: int = 5

    # ablation switches
    angle_noise_on: bool = True
    registration_on: bool = False
    baro_on: bool = False
    gyro_term_on: bool = False

    def __post_init__(self):
        positive = ("gyro_noise", "accel_noise", "gyro_bias_rw", "accel_bias_rw", "baro_std", "baro_bias_rw",
                    "lag", "cauchy_scale", "huber_scale", "voxel_size", "neighbor_radius", "init_duration",
                    "gravity")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}", name)
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1", "max_iterations")
        if self.kappa_static < 0:
            raise ConfigError("kappa_static must be non-negative", "kappa_static")
        if self.min_neighbors < 1:
            raise ConfigError("min_neighbors must be >= 1", "min_neighbors")
        if self.registration_loss not in ("none", "huber", "cauchy"):
            raise ConfigError("registration_loss must be none, huber or cauchy", "registration_loss")
        for name in ("sigma_doppler", "sigma_range", "sigma_phase"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be non-negative", name)


PRESETS = {
    "base": dict(angle_noise_on=False),
    "noise": dict(angle_noise_on=True),
    "geometry": dict(angle_noise_on=True, registration_on=True),
    "noise+baro": dict(angle_noise_on=True, baro_on=True),
}

_FIELDS = {f.name: f for f in dataclasses.fields(EstimatorConfig)}


def config_from_dict(data: dict) -> EstimatorConfig:
    data = dict(data or {})
    preset = data.pop("preset", None)
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown estimator preset {preset!r}", "preset")
        merged.update(PRESETS[preset])
    unknown = set(data) - set(_FIELDS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown estimator field {name!r}", name)
    merged.update(data)
    for key in ("radar_rpy_deg", "lever_arm", "extrinsics_sigma", "rebias_threshold"):
        if merged.get(key) is not None:
            merged[key] = tuple(float(x) for x in merged[key])
    return EstimatorConfig(**merged)


def load_estimator_config(source=None) -> EstimatorConfig:
    """Preset name, YAML path (optionally under an ``estimator:`` key), or None for defaults."""
    if source is None:
        return EstimatorConfig()
    if isinstance(source, str) and source in PRESETS:
        return config_from_dict({"preset": source})
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"estimator config {source!r} is neither a preset nor a file", "config")
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("estimator config must be a mapping", "config")
    return config_from_dict(data.get("estimator", data))


def config_to_dict(cfg: EstimatorConfig) -> dict:
    out = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}
