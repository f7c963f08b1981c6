"""Synthetic IMU, radar and barometer streams from an analytic trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .. import atmosphere, radar
from ..errors import ConfigError
from ..lie import from_rpy
from ..radar import ChirpConfig, RadarScan  # noqa: F401  (re-exported)
from .trajectory import TrajectorySpec, TruthSample, sample_trajectory

GRAVITY = np.array([0.0, 0.0, -9.81])

# IMU noise densities (consumer-grade MEMS)
GYRO_NOISE = 5.4380545102010436e-05  # rad/s/sqrt(Hz)
ACCEL_NOISE = 1.3886655606357616e-3  # m/s^2/sqrt(Hz)
GYRO_BIAS_RW = 1.6587925152480572e-06  # rad/s*sqrt(Hz)
ACCEL_BIAS_RW = 8.538212723310593e-05  # m/s^2*sqrt(Hz)


@dataclass
class RigSpec:
    imu_rate: float = 200.0
    radar_rate: float = 10.0
    baro_rate: float = 20.0
    radar_rotation: np.ndarray = field(default_factory=lambda: from_rpy(0.0, math.radians(15.0), 0.0))
    lever_arm: np.ndarray = field(default_factory=lambda: np.array([0.10, 0.0, -0.05]))
    gyro_noise: float = GYRO_NOISE
    accel_noise: float = ACCEL_NOISE
    gyro_bias_rw: float = GYRO_BIAS_RW
    accel_bias_rw: float = ACCEL_BIAS_RW
    gyro_bias0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    imu_noise_on: bool = True
    baro_std: float = 0.05  # m
    baro_bias_drift: float = 0.002  # m/sqrt(s)
    baro_bias0: float = 0.0
    baro_noise_on: bool = True
    quantize: bool = True
    # extra Gaussian noise per radar channel (range m, doppler m/s, phase rad)
    radar_gaussian: Sequence[float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.radar_rotation = np.asarray(self.radar_rotation, dtype=float)
        self.lever_arm = np.asarray(self.lever_arm, dtype=float)
        self.gyro_bias0 = np.asarray(self.gyro_bias0, dtype=float)
        self.accel_bias0 = np.asarray(self.accel_bias0, dtype=float)
        for name in ("imu_rate", "radar_rate", "baro_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive", name)
        R = self.radar_rotation
        if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ConfigError("radar_rotation must be a proper rotation matrix", "radar_rotation")


@dataclass
class Environment:
    targets: np.ndarray
    max_points: int = 64
    fov_azimuth_deg: float = 60.0
    fov_elevation_deg: float = 60.0
    min_range: float = 0.5
    max_range: Optional[float] = None  # defaults to the chirp maximum
    dropout: float = 0.0

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 3)
        if not 0.0 <= self.dropout <= 1.0:
            raise ConfigError("dropout must lie in [0, 1]", "dropout")
        if self.max_points < 1:
            raise ConfigError("max_points must be >= 1", "max_points")
        if not (0 < self.fov_azimuth_deg < 90 and 0 < self.fov_elevation_deg < 90):
            raise ConfigError("FOV half-angles must lie in (0, 90) deg", "fov_azimuth_deg")


@dataclass
class ImuRecord:
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass
class BaroRecord:
    t: float
    pressure: float


@dataclass
class SimDataset:
    imu: List[ImuRecord]
    radar: List["radar.RadarScan"]
    baro: List[BaroRecord]
    truth: List[TruthSample]
    meta: dict = field(default_factory=dict)


# ----------------------------------------------------------------------------- IMU


def synth_imu(truth: Sequence[TruthSample], rig: RigSpec, seed: int = 0) -> List[ImuRecord]:
    """IMU stream at the truth sample times; biases evolve as random walks."""
    rng = np.random.default_rng(seed)
    out = []
    bg = rig.gyro_bias0.copy()
    ba = rig.accel_bias0.copy()
    prev_t = None
    for s in truth:
        if prev_t is not None and rig.imu_noise_on:
            dt = s.t - prev_t
            bg = bg + rig.gyro_bias_rw * math.sqrt(dt) * rng.standard_normal(3)
            ba = ba + rig.accel_bias_rw * math.sqrt(dt) * rng.standard_normal(3)
        prev_t = s.t
        gyro = s.omega + bg
        accel = s.R.T @ (s.a - GRAVITY) + ba
        if rig.imu_noise_on:
            gyro = gyro + rig.gyro_noise * math.sqrt(rig.imu_rate) * rng.standard_normal(3)
            accel = accel + rig.accel_noise * math.sqrt(rig.imu_rate) * rng.standard_normal(3)
        out.append(ImuRecord(s.t, gyro, accel))
    return out


# --------------------------------------------------------------------------- radar


def radar_velocity(s: TruthSample, rig: RigSpec) -> np.ndarray:
    """Radar-frame ego velocity including the lever-arm term."""
    return rig.radar_rotation.T @ (s.R.T @ s.v + np.cross(s.omega, rig.lever_arm))


def synth_radar_scan(s: TruthSample, env: Environment, cfg: ChirpConfig, rig: RigSpec,
                     rng: np.random.Generator) -> "radar.RadarScan":
    R_world_radar = s.R @ rig.radar_rotation
    origin = s.p + s.R @ rig.lever_arm
    local = (env.targets - origin) @ R_world_radar
    d = np.linalg.norm(local, axis=1)
    max_range = cfg.max_range if env.max_range is None else min(env.max_range, cfg.max_range)
    keep = (d >= env.min_range) & (d < max_range)
    mu = np.zeros_like(local)
    mu[keep] = local[keep] / d[keep, None]
    az, el = radar.bearing_to_angles(mu)
    keep &= (mu[:, 0] > 0) & (np.abs(az) <= math.radians(env.fov_azimuth_deg)) \
        & (np.abs(el) <= math.radians(env.fov_elevation_deg))
    idx = np.flatnonzero(keep)
    if env.dropout > 0 and idx.size:
        idx = idx[rng.random(idx.size) >= env.dropout]
    idx = idx[np.argsort(d[idx], kind="stable")][: env.max_points]

    v_radar = radar_velocity(s, rig)
    mu = mu[idx]
    d = d[idx]
    v_true = radar.radial_speed(mu, v_radar)
    w_y, w_z = math.pi * mu[:, 1], math.pi * mu[:, 2]

    g = np.asarray(rig.radar_gaussian, dtype=float)
    d_m, v_m, wy_m, wz_m = d.copy(), v_true.copy(), w_y.copy(), w_z.copy()
    if np.any(g > 0) and idx.size:
        d_m += g[0] * rng.standard_normal(idx.size)
        v_m += g[1] * rng.standard_normal(idx.size)
        wy_m += g[2] * rng.standard_normal(idx.size)
        wz_m += g[2] * rng.standard_normal(idx.size)
    v_m, aliased = radar.alias_wrap(v_m, cfg.max_doppler)
    aliased = np.atleast_1d(aliased)
    if rig.quantize:
        d_m = radar.quantize_range(d_m, cfg)
        v_m = radar.quantize_doppler(v_m, cfg)
        wy_m = radar.quantize_phase(wy_m, cfg)
        wz_m = radar.quantize_phase(wz_m, cfg)

    points = [
        radar.RadarPoint(
            range=float(d_m[i]), radial_speed=float(v_m[i]),
            phases=radar.AoaPhases(float(wy_m[i]), float(wz_m[i])),
            truth_range=float(d[i]), truth_radial_speed=float(v_true[i]),
            truth_phases=radar.AoaPhases(float(w_y[i]), float(w_z[i])),
            aliased=bool(aliased[i]),
        )
        for i in range(idx.size)
    ]
    return radar.RadarScan(s.t, points)


# ---------------------------------------------------------------------------- baro


def synth_baro(truth: Sequence[TruthSample], rig: RigSpec, seed: int = 0) -> List[BaroRecord]:
    rng = np.random.default_rng(seed)
    bias = rig.baro_bias0
    out = []
    prev_t = None
    for s in truth:
        if prev_t is not None and rig.baro_noise_on:
            bias += rig.baro_bias_drift * math.sqrt(s.t - prev_t) * rng.standard_normal()
        prev_t = s.t
        h = s.p[2] + bias
        if rig.baro_noise_on:
            h += rig.baro_std * rng.standard_normal()
        out.append(BaroRecord(s.t, float(atmosphere.altitude_pressure(h))))
    return out


# ------------------------------------------------------------------------- dataset


def _times(rate, duration, offset=0.0):
    n = int(math.floor((duration - offset) * rate + 1e-9))
    return [offset + k / rate for k in range(n + 1)]


def generate_dataset(traj: TrajectorySpec, env: Environment, cfg: ChirpConfig, rig: RigSpec,
                     seed: int = 0) -> SimDataset:
    """Synthesize all streams. Same seed gives an identical dataset."""
    ss = np.random.SeedSequence(seed)
    imu_seed, radar_seed, baro_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    truth = [sample_trajectory(traj, t) for t in _times(rig.imu_rate, traj.duration)]
    imu = synth_imu(truth, rig, imu_seed)

    rng = np.random.default_rng(radar_seed)
    # first scan half a radar period in, so scans never coincide with t = 0
    scans = [synth_radar_scan(sample_trajectory(traj, t), env, cfg, rig, rng)
             for t in _times(rig.radar_rate, traj.duration, 0.5 / rig.radar_rate)]
    baro_truth = [sample_trajectory(traj, t) for t in _times(rig.baro_rate, traj.duration)]
    baro = synth_baro(baro_truth, rig, baro_seed)
    meta = {
        "chirp": cfg.name,
        "chirp_config": radar.config_to_dict(cfg),
        "seed": seed,
        "trajectory": traj.kind,
        "imu_rate": rig.imu_rate,
        "radar_rate": rig.radar_rate,
        "baro_rate": rig.baro_rate,
        "radar_rotation": rig.radar_rotation.tolist(),
        "lever_arm": rig.lever_arm.tolist(),
    }
    return SimDataset(imu, scans, baro, truth, meta)


# ---------------------------------------------------------------------- environments


def box_environment(n, lo, hi, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, (n, 3))


def sphere_environment(n, radius, center=(0.0, 0.0, 0.0), seed=0):
    """Targets uniformly distributed over a sphere surface."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return np.asarray(center, dtype=float) + radius * x


def tunnel_environment(length, width, height, density, start=-5.0, seed=0):
    """Scatterers on the floor, walls and ceiling of a tunnel along +x.

    ``density`` is scatterers per square meter of surface.
    """
    rng = np.random.default_rng(seed)
    faces = []
    for area, make in (
        (length * width, lambda k: np.c_[rng.uniform(0, length, k), rng.uniform(-width / 2, width / 2, k), np.zeros(k)]),
        (length * width, lambda k: np.c_[rng.uniform(0, length, k), rng.uniform(-width / 2, width / 2, k), np.full(k, height)]),
        (length * height, lambda k: np.c_[rng.uniform(0, length, k), np.full(k, -width / 2), rng.uniform(0, height, k)]),
        (length * height, lambda k: np.c_[rng.uniform(0, length, k), np.full(k, width / 2), rng.uniform(0, height, k)]),
        (width * height, lambda k: np.c_[np.full(k, length), rng.uniform(-width / 2, width / 2, k), rng.uniform(0, height, k)]),
    ):
        faces.append(make(int(round(area * density))))
    pts = np.vstack(faces)
    pts[:, 0] += start
    return pts
