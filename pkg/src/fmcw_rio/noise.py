"""Quantization noise statistics and first-order covariance propagation.

FFT bin quantization gives uniform errors of width ``l``; downstream they are
summarized by their variance ``l**2 / 12``.  The bearing is a nonlinear
function of the two AoA phases, so its covariance is propagated through the
phase-to-bearing Jacobian.  Monte-Carlo oracles here always sample the true
uniform law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import radar
from .errors import DomainError
from .lie import hat

SQRT12 = math.sqrt(12.0)
EDGE_GUARD = 1e-6


@dataclass(frozen=True)
class QuantNoise:
    bin_width: float

    @property
    def std_dev(self) -> float:
        return self.bin_width / SQRT12

    @property
    def variance(self) -> float:
        return self.bin_width**2 / 12.0


@dataclass(frozen=True)
class PhaseNoise:
    sigma_wy: float
    sigma_wz: float

    @property
    def covariance(self) -> np.ndarray:
        return np.diag([self.sigma_wy**2, self.sigma_wz**2])

    @classmethod
    def from_bin_width(cls, width_y, width_z=None):
        width_z = width_y if width_z is None else width_z
        return cls(width_y / SQRT12, width_z / SQRT12)


class RadarNoise(NamedTuple):
    range: QuantNoise
    doppler: QuantNoise
    phase: PhaseNoise


def radar_noise(cfg: radar.ChirpConfig) -> RadarNoise:
    props = radar.derive_properties(cfg)
    return RadarNoise(
        QuantNoise(props.bin_width_range),
        QuantNoise(props.bin_width_doppler),
        PhaseNoise.from_bin_width(props.bin_width_phase),
    )


def noise_table(cfg: radar.ChirpConfig) -> dict:
    """Standard deviations in table units: m, m/s, deg."""
    n = radar_noise(cfg)
    return {
        "sigma_range": n.range.std_dev,
        "sigma_doppler": n.doppler.std_dev,
        "sigma_phase_deg": math.degrees(n.phase.sigma_wy),
    }


def phase_root(w_y, w_z):
    return 1.0 - (np.asarray(w_y) ** 2 + np.asarray(w_z) ** 2) / math.pi**2


def valid_phase_mask(w_y, w_z, guard=EDGE_GUARD):
    return phase_root(w_y, w_z) >= guard


def bearing_jacobian(w_y, w_z=None) -> np.ndarray:
    """d(bearing)/d(phases), shape (..., 3, 2).

    Raises DomainError for phases at the edge of the field of view, where the
    square root in the first row vanishes.
    """
    if w_z is None:
        w_y, w_z = w_y
    w_y = np.asarray(w_y, dtype=float)
    w_z = np.asarray(w_z, dtype=float)
    arg = phase_root(w_y, w_z)
    if np.any(arg < EDGE_GUARD):
        raise DomainError("phases too close to the edge of the field of view for linearization")
    denom = math.pi**2 * np.sqrt(arg)
    J = np.zeros(w_y.shape + (3, 2))
    J[..., 0, 0] = -w_y / denom
    J[..., 0, 1] = -w_z / denom
    J[..., 1, 0] = 1.0 / math.pi
    J[..., 2, 1] = 1.0 / math.pi
    return J


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def bearing_covariance(w_y, w_z=None, phase_noise: Optional[PhaseNoise] = None) -> np.ndarray:
    """J diag(sigma_wy^2, sigma_wz^2) J^T, shape (..., 3, 3)."""
    if w_z is None or isinstance(w_z, PhaseNoise):
        phase_noise = w_z if isinstance(w_z, PhaseNoise) else phase_noise
        w_y, w_z = w_y
    J = bearing_jacobian(w_y, w_z)
    scale = np.array([phase_noise.sigma_wy**2, phase_noise.sigma_wz**2])
    return _sym((J * scale) @ np.swapaxes(J, -1, -2))


def doppler_gyro_jacobian(mu_meas, R_radar_body, lever_arm):
    """d(e_D)/d(avg gyro noise) = mu^T R_R^B^T [l]x ; shape (..., 3)."""
    return np.asarray(mu_meas) @ (np.asarray(R_radar_body).T @ hat(lever_arm))


def doppler_residual_variance(mu_meas, v_radar_est, quant: QuantNoise, sigma_mu,
                              gyro_term=None):
    """First-order variance of the Doppler residual.

    ``gyro_term`` is an optional ``(jacobian, avg_rate_covariance)`` pair; it
    is left out by default.
    """
    v = np.asarray(v_radar_est, dtype=float)
    sigma_mu = np.asarray(sigma_mu, dtype=float)
    var = quant.variance + np.einsum("...i,...ij,...j->...", v, sigma_mu, v)
    if gyro_term is not None:
        J, cov = gyro_term
        J = np.asarray(J, dtype=float)
        var = var + np.einsum("...i,ij,...j->...", J, np.asarray(cov, float), J)
    if not np.all(np.isfinite(var)):
        raise DomainError("non-finite Doppler residual variance")
    return var


def registration_covariance(mu_meas, range_meas, quant_range: QuantNoise, sigma_mu,
                            R_world_radar, sigma_q):
    """R (sigma_d^2 mu mu^T + d^2 Sigma_mu) R^T + Sigma_q."""
    mu = np.asarray(mu_meas, dtype=float)
    d = np.asarray(range_meas, dtype=float)
    R = np.asarray(R_world_radar, dtype=float)
    local = quant_range.variance * np.einsum("...i,...j->...ij", mu, mu) \
        + (d**2)[..., None, None] * np.asarray(sigma_mu, dtype=float)
    return _sym(R @ local @ R.T + np.asarray(sigma_q, dtype=float))


# --------------------------------------------------------------------------- MC oracles


def _rng(seed):
    return np.random.default_rng(seed)


def mc_measurement_oracle(cfg: radar.ChirpConfig, samples: int = 1_000_000, seed: int = 0,
                          scenario: Optional[dict] = None) -> dict:
    """Sample quantization errors of range, Doppler and the phases.

    True target values are drawn uniformly over ``scenario`` spans (default:
    ranges within the grid, speeds within +/-max Doppler, directions within
    +/-60 deg), pushed through the FFT quantizers, and the error statistics
    are returned in table units (m, m/s, deg).
    """
    scenario = dict(scenario or {})
    rng = _rng(seed)
    r_lo, r_hi = scenario.get("range", (1.0, 0.9 * cfg.max_range))
    v_lo, v_hi = scenario.get("radial_speed", (-0.9 * cfg.max_doppler, 0.9 * cfg.max_doppler))
    fov = math.radians(scenario.get("fov_deg", 60.0))

    d = rng.uniform(r_lo, r_hi, samples)
    v = rng.uniform(v_lo, v_hi, samples)
    az = rng.uniform(-fov, fov, samples)
    el = rng.uniform(-fov, fov, samples)
    w = radar.angles_to_phases(az, el)

    err = {
        "range": radar.quantize_range(d, cfg) - d,
        "doppler": radar.quantize_doppler(v, cfg) - v,
        "phase_y": np.degrees(radar.quantize_phase(w.w_y, cfg) - w.w_y),
        "phase_z": np.degrees(radar.quantize_phase(w.w_z, cfg) - w.w_z),
    }
    return {k: {"mean": float(e.mean()), "std": float(e.std(ddof=1))} for k, e in err.items()}


def mc_bearing_covariance(w_y, w_z, phase_bin_width, samples=1_000_000, seed=0):
    rng = _rng(seed)
    half = 0.5 * phase_bin_width
    ny = rng.uniform(-half, half, samples)
    nz = rng.uniform(-half, half, samples)
    mu = radar.phases_to_bearing(w_y + ny, w_z + nz)
    return np.cov(mu, rowvar=False)


def first_order_doppler_std(w_y, w_z, v_radar, cfg: radar.ChirpConfig, include_doppler=True):
    n = radar_noise(cfg)
    cov = bearing_covariance(w_y, w_z, n.phase)
    var = np.einsum("...i,...ij,...j->...", np.asarray(v_radar, float), cov, np.asarray(v_radar, float))
    if include_doppler:
        var = var + n.doppler.variance
    return np.sqrt(var)


def mc_doppler_std(w_y, w_z, v_radar, cfg: radar.ChirpConfig, samples=100_000, seed=0,
                   include_doppler=True, noise=None):
    """Sample std of the nonlinear Doppler residual for one true phase pair.

    The residual is ``-mu(w + eta_w)^T v - (v_r + eta_vr)`` evaluated against
    the noise-free value; noises are uniform over one bin.  ``noise`` may
    supply pre-drawn unit-uniform samples of shape (3, samples) in [-0.5, 0.5).
    """
    props = radar.derive_properties(cfg)
    if noise is None:
        noise = _rng(seed).uniform(-0.5, 0.5, (3, samples))
    v = np.asarray(v_radar, dtype=float)
    wy = w_y + props.bin_width_phase * noise[0]
    wz = w_z + props.bin_width_phase * noise[1]
    arg = np.maximum(phase_root(wy, wz), 0.0)
    # the constant noise-free part drops out of the std
    err = -(np.sqrt(arg) * v[0] + wy / math.pi * v[1] + wz / math.pi * v[2])
    if include_doppler:
        err = err - props.bin_width_doppler * noise[2]
    return float(err.std(ddof=1))
