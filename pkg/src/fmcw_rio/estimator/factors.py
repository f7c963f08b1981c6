"""Residuals and factors: IMU, bias random walk, Doppler, registration, barometer.

Residual functions return raw (unwhitened) errors and Jacobians with respect
to the 16-dim node tangent (see ``state``) and the 6-dim extrinsics tangent.
Factors whiten them for the smoother.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .. import atmosphere, lie, noise, radar
from ..errors import DomainError
from .losses import NONE, RobustLoss
from .preintegration import PreintegratedImu, bias_moved, preintegrate
from .smoother import Factor
from .state import BA, BG, NAV_DIM, POS, ROT, VEL, Extrinsics, NavState


def _sqrt_info(cov):
    """Inverse lower Cholesky factor, so that r = L^-1 e is whitened."""
    cov = 0.5 * (cov + cov.T)
    jitter = 1e-15 * max(np.trace(cov), 1e-30)
    L = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
    return scipy.linalg.solve_triangular(L, np.eye(cov.shape[0]), lower=True)


# ---------------------------------------------------------------------------- IMU


def imu_residual(si: NavState, sj: NavState, pim: PreintegratedImu, gravity: float = 9.81,
                 jacobians: bool = True):
    """Stacked [e_R, e_p, e_v] and its 9x16 Jacobians for nodes i and j."""
    g = np.array([0.0, 0.0, -gravity])
    T = pim.dt
    dba = si.ba - pim.ba_lin
    dbg = si.bg - pim.bg_lin
    phi_b = pim.J_Rg @ dbg
    dR = pim.dR @ lie.exp(phi_b)
    dp = pim.dp + pim.J_pa @ dba + pim.J_pg @ dbg
    dv = pim.dv + pim.J_va @ dba + pim.J_vg @ dbg
    RiT = si.R.T

    eR = lie.log(dR.T @ RiT @ sj.R)
    xp = sj.p - si.p - si.v * T - 0.5 * g * T * T
    xv = sj.v - si.v - g * T
    ep = RiT @ xp - dp
    ev = RiT @ xv - dv
    e = np.concatenate([eR, ep, ev])
    if not jacobians:
        return e, None, None

    Jri = lie.right_jacobian_inv(eR)
    Ji = np.zeros((9, NAV_DIM))
    Jj = np.zeros((9, NAV_DIM))
    Ji[0:3, ROT] = -Jri @ sj.R.T @ si.R
    Ji[0:3, BG] = -Jri @ lie.exp(eR).T @ lie.right_jacobian(phi_b) @ pim.J_Rg
    Jj[0:3, ROT] = Jri

    Ji[3:6, ROT] = lie.hat(RiT @ xp)
    Ji[3:6, POS] = -RiT
    Ji[3:6, VEL] = -RiT * T
    Ji[3:6, BA] = -pim.J_pa
    Ji[3:6, BG] = -pim.J_pg
    Jj[3:6, POS] = RiT

    Ji[6:9, ROT] = lie.hat(RiT @ xv)
    Ji[6:9, VEL] = -RiT
    Ji[6:9, BA] = -pim.J_va
    Ji[6:9, BG] = -pim.J_vg
    Jj[6:9, VEL] = RiT
    return e, Ji, Jj


class ImuFactor(Factor):
    block = 9

    def __init__(self, key_i, key_j, t, gyro, accel, state_i: NavState, gyro_noise, accel_noise,
                 gravity=9.81, rebias_threshold=(0.05, 0.005)):
        self.keys = (key_i, key_j)
        self.samples = (np.asarray(t), np.asarray(gyro), np.asarray(accel))
        self.gyro_noise = gyro_noise
        self.accel_noise = accel_noise
        self.gravity = gravity
        self.threshold = rebias_threshold
        self.loss = NONE
        self.repreintegrations = 0
        self._integrate(state_i.ba, state_i.bg)

    def _integrate(self, ba, bg):
        t, gyro, accel = self.samples
        self.pim = preintegrate(t, gyro, accel, ba, bg, self.gyro_noise, self.accel_noise)
        self.L = _sqrt_info(self.pim.cov)

    def update_model(self, values):
        si = values[self.keys[0]]
        if bias_moved(self.pim, si.ba, si.bg, self.threshold):
            self._integrate(si.ba, si.bg)
            self.repreintegrations += 1

    def error(self, values):
        e, _, _ = imu_residual(values[self.keys[0]], values[self.keys[1]], self.pim, self.gravity, False)
        return self.L @ e

    def linearize(self, values):
        e, Ji, Jj = imu_residual(values[self.keys[0]], values[self.keys[1]], self.pim, self.gravity)
        return self.L @ e, [self.L @ Ji, self.L @ Jj]


class BiasFactor(Factor):
    """Random walk on accelerometer, gyro and barometer biases between two nodes."""

    block = 7

    def __init__(self, key_i, key_j, dt, accel_bias_rw, gyro_bias_rw, baro_bias_rw):
        self.keys = (key_i, key_j)
        sd = math.sqrt(dt)
        self.inv_sigma = 1.0 / (sd * np.r_[np.full(3, accel_bias_rw), np.full(3, gyro_bias_rw), baro_bias_rw])
        self.loss = NONE

    def linearize(self, values):
        si, sj = values[self.keys[0]], values[self.keys[1]]
        e = np.concatenate([sj.ba - si.ba, sj.bg - si.bg, [sj.bb - si.bb]])
        J = np.zeros((7, NAV_DIM))
        J[:, 9:16] = np.eye(7)
        W = self.inv_sigma[:, None]
        return self.inv_sigma * e, [-W * J, W * J]


# ------------------------------------------------------------------------ Doppler


def radar_velocity_estimate(state: NavState, ext: Extrinsics, omega_mean):
    """Radar-frame ego velocity R_rb^T (R_bi^T v + (omega - b_g) x l)."""
    w = np.asarray(omega_mean, dtype=float) - state.bg
    return ext.R.T @ (state.R.T @ state.v + lie.cross(w, ext.l))


def doppler_residuals(mu, v_meas, state: NavState, ext: Extrinsics, omega_mean, jacobians: bool = True):
    """Per-point Doppler residuals, Jacobians (n x 16, n x 6) and radar-frame velocity.

    e = -mu^T R_rb^T (R_bi^T v + (omega - b_g) x l) - v_meas
    """
    mu = np.atleast_2d(mu)
    w = np.asarray(omega_mean, dtype=float) - state.bg
    vb = state.R.T @ state.v
    u = vb + lie.cross(w, ext.l)
    y = ext.R.T @ u
    e = -mu @ y - np.asarray(v_meas, dtype=float)
    if not jacobians:
        return e, None, None, y

    A = -mu @ ext.R.T  # n x 3, maps body-frame vectors
    Jx = np.zeros((mu.shape[0], NAV_DIM))
    Jx[:, ROT] = A @ lie.hat(vb)
    Jx[:, VEL] = A @ state.R.T
    Jx[:, BG] = A @ lie.hat(ext.l)
    Je = np.zeros((mu.shape[0], 6))
    Je[:, 0:3] = -mu @ lie.hat(y)
    Je[:, 3:6] = A @ lie.hat(w)
    return e, Jx, Je, y


def doppler_residual(point: radar.RadarPoint, state: NavState, ext: Extrinsics, omega_mean,
                     quant: noise.QuantNoise, phase_noise: noise.PhaseNoise = None, gyro_term=None):
    """(residual, variance) of a single point; the variance follows the first-order model."""
    w_y, w_z = point.phases
    mu = radar.phases_to_bearing(w_y, w_z)
    e, _, _, y = doppler_residuals(mu[None], [point.radial_speed], state, ext, omega_mean)
    if phase_noise is None:
        sigma_mu = np.zeros((3, 3))
    else:
        sigma_mu = noise.bearing_covariance(w_y, w_z, phase_noise)
    var = noise.doppler_residual_variance(mu, y, quant, sigma_mu, gyro_term)
    return float(e[0]), float(var)


class DopplerScanFactor(Factor):
    """All Doppler residuals of one scan, each whitened by its own variance."""

    block = 1

    def __init__(self, key, ext_key, mu, v_meas, omega_mean, sigma_vr, sigma_mu=None,
                 loss: RobustLoss = NONE, gyro_cov=None):
        self.keys = (key, ext_key)
        self.mu = np.atleast_2d(np.asarray(mu, dtype=float))
        self.v_meas = np.asarray(v_meas, dtype=float)
        self.omega = np.asarray(omega_mean, dtype=float)
        self.var_vr = sigma_vr**2
        self.sigma_mu = sigma_mu  # (n, 3, 3) or None for the constant-variance model
        self.gyro_cov = gyro_cov
        self.loss = loss
        self.sigma = np.full(len(self.v_meas), sigma_vr)

    def __len__(self):
        return len(self.v_meas)

    def variance(self, state, ext):
        var = np.full(len(self.v_meas), self.var_vr)
        if self.sigma_mu is not None:
            y = radar_velocity_estimate(state, ext, self.omega)
            var = var + (self.sigma_mu @ y) @ y
        if self.gyro_cov is not None:
            J = noise.doppler_gyro_jacobian(self.mu, ext.R, ext.l)
            var = var + np.einsum("ni,ij,nj->n", J, self.gyro_cov, J)
        return var

    def update_model(self, values):
        self.sigma = np.sqrt(self.variance(values[self.keys[0]], values[self.keys[1]]))

    def raw(self, values):
        return doppler_residuals(self.mu, self.v_meas, values[self.keys[0]], values[self.keys[1]], self.omega,
                                 jacobians=False)[0]

    def whitened(self, values):
        return self.raw(values) / self.sigma

    def error(self, values):
        return self.whitened(values)

    def linearize(self, values):
        e, Jx, Je, _ = doppler_residuals(self.mu, self.v_meas, values[self.keys[0]], values[self.keys[1]],
                                         self.omega)
        s = 1.0 / self.sigma
        return e * s, [Jx * s[:, None], Je * s[:, None]]


# ------------------------------------------------------------------- registration


def registration_residuals(points_radar, q_mean, state: NavState, ext: Extrinsics):
    """Point-to-centroid residuals (n x 3) and Jacobians (n x 3 x 16, n x 3 x 6).

    ``points_radar`` are d * mu in the radar frame.
    """
    t = np.atleast_2d(points_radar)
    yb = t @ ext.R.T + ext.l  # body frame
    e = yb @ state.R.T + state.p - np.atleast_2d(q_mean)
    n = t.shape[0]
    Jx = np.zeros((n, 3, NAV_DIM))
    Jx[:, :, ROT] = -state.R @ lie.hat_batch(yb)
    Jx[:, :, POS] = np.eye(3)
    Je = np.zeros((n, 3, 6))
    Je[:, :, 0:3] = -(state.R @ ext.R) @ lie.hat_batch(t)
    Je[:, :, 3:6] = state.R
    return e, Jx, Je


def registration_residual(point: radar.RadarPoint, q_mean, sigma_q, state: NavState, ext: Extrinsics,
                          quant_range: noise.QuantNoise, phase_noise: noise.PhaseNoise):
    """(3-vector residual, 3x3 covariance) for one point against its map neighbourhood."""
    mu = radar.phases_to_bearing(*point.phases)
    e, _, _ = registration_residuals((point.range * mu)[None], np.asarray(q_mean)[None], state, ext)
    sigma_mu = noise.bearing_covariance(point.phases[0], point.phases[1], phase_noise)
    cov = noise.registration_covariance(mu, point.range, quant_range, sigma_mu, state.R @ ext.R, sigma_q)
    return e[0], cov


class RegistrationFactor(Factor):
    block = 3

    def __init__(self, key, ext_key, ranges, mu, sigma_mu, q_mean, sigma_q, quant_range: noise.QuantNoise,
                 loss: RobustLoss = NONE):
        self.keys = (key, ext_key)
        self.ranges = np.asarray(ranges, dtype=float)
        self.mu = np.atleast_2d(mu)
        self.points = self.ranges[:, None] * self.mu
        self.sigma_mu = np.asarray(sigma_mu, dtype=float)
        self.q_mean = np.atleast_2d(q_mean)
        self.sigma_q = np.asarray(sigma_q, dtype=float)
        self.quant = quant_range
        self.loss = loss
        self.Linv = None

    def __len__(self):
        return len(self.ranges)

    def covariance(self, state, ext):
        return noise.registration_covariance(self.mu, self.ranges, self.quant, self.sigma_mu,
                                             state.R @ ext.R, self.sigma_q)

    def update_model(self, values):
        cov = self.covariance(values[self.keys[0]], values[self.keys[1]])
        cov = cov + 1e-12 * np.eye(3)
        self.Linv = np.linalg.inv(np.linalg.cholesky(cov))

    def linearize(self, values):
        if self.Linv is None:
            self.update_model(values)
        e, Jx, Je = registration_residuals(self.points, self.q_mean, values[self.keys[0]], values[self.keys[1]])
        r = np.einsum("nij,nj->ni", self.Linv, e).ravel()
        Jx = (self.Linv @ Jx).reshape(-1, NAV_DIM)
        Je = (self.Linv @ Je).reshape(-1, 6)
        return r, [Jx, Je]


# ---------------------------------------------------------------------- barometer


def baro_residual(pressure, state: NavState):
    """e_B = z - (h(P) - b_b); unit Jacobians on z and b_b."""
    if not pressure > 0:
        raise DomainError("pressure must be positive")
    e = state.p[2] - (atmosphere.pressure_altitude(pressure) - state.bb)
    J = np.zeros((1, NAV_DIM))
    J[0, 5] = 1.0
    J[0, 15] = 1.0
    return float(e), J


class BaroFactor(Factor):
    block = 1

    def __init__(self, key, pressure, sigma, loss: RobustLoss = NONE):
        self.keys = (key,)
        self.pressure = float(pressure)
        self.sigma = float(sigma)
        self.loss = loss

    def linearize(self, values):
        e, J = baro_residual(self.pressure, values[self.keys[0]])
        return np.array([e / self.sigma]), [J / self.sigma]
