"""Radar-inertial odometry: initialization, per-scan factor assembly, smoothing and output."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .. import atmosphere, lie, noise, radar
from ..errors import DomainError, InitializationError
from ..mapping import PointMap
from ..sim.synth import RigSpec, SimDataset
from .config import EstimatorConfig
from .factors import BaroFactor, BiasFactor, DopplerScanFactor, ImuFactor, RegistrationFactor, doppler_residuals
from .losses import RobustLoss, cauchy, huber
from .preintegration import ImuBuffer, integrate_samples, predict
from .smoother import PriorFactor, Smoother
from .state import NAV_DIM, Extrinsics, NavState

log = logging.getLogger(__name__)

EXT = "ext"


# ------------------------------------------------------------------ initialization


def initialize_at_rest(imu: ImuBuffer, cfg: EstimatorConfig, duration: Optional[float] = None,
                       pressure: Optional[float] = None) -> Tuple[NavState, np.ndarray]:
    """Static initialization from the first ``duration`` seconds of IMU data.

    Gyro bias is the mean rate, roll and pitch come from the mean specific
    force, yaw and position are zero. Raises InitializationError if the
    buffer is too short or the samples show motion.
    """
    duration = cfg.init_duration if duration is None else duration
    if len(imu) < 2 or imu.t[-1] - imu.t[0] < duration - 1e-9:
        raise InitializationError(f"IMU buffer shorter than the {duration} s initialization window")
    m = imu.t <= imu.t[0] + duration + 1e-9
    gyro, accel = imu.gyro[m], imu.accel[m]
    if np.max(np.std(accel, axis=0)) > cfg.init_accel_std_max or \
            np.max(np.std(gyro, axis=0)) > cfg.init_gyro_std_max:
        raise InitializationError("platform is moving during initialization")
    f = accel.mean(axis=0)
    if abs(np.linalg.norm(f) - cfg.gravity) > 0.5:
        raise InitializationError(f"mean specific force {np.linalg.norm(f):.3f} is not gravity")
    roll = math.atan2(f[1], f[2])
    pitch = math.atan2(-f[0], math.hypot(f[1], f[2]))
    bb = 0.0 if pressure is None else float(atmosphere.pressure_altitude(pressure))
    state = NavState(lie.from_rpy(roll, pitch, 0.0), np.zeros(3), np.zeros(3), np.zeros(3), gyro.mean(axis=0), bb)

    # an unmodelled accelerometer bias tilts the gravity estimate by about b/g
    rp = math.hypot(cfg.init_sigma_rp, cfg.init_sigma_ba / cfg.gravity)
    sig = np.r_[rp, rp, cfg.init_sigma_yaw, np.full(3, cfg.init_sigma_p), np.full(3, cfg.init_sigma_v),
                np.full(3, cfg.init_sigma_ba), np.full(3, cfg.init_sigma_bg), cfg.baro_std]
    return state, np.diag(sig**2)


def propagate_high_rate(state: NavState, imu: ImuBuffer, t_from: float, t_to: Optional[float] = None,
                        gravity: float = 9.81):
    """Dead-reckoned (t, R, p, v) at every IMU sample in (t_from, t_to]."""
    t_to = imu.t[-1] if t_to is None else t_to
    if t_to <= t_from + 1e-12:
        return []
    t, gyro, accel = imu.segment(t_from, t_to)
    out = integrate_samples(state.R, state.p, state.v, state.ba, state.bg, t, gyro, accel, gravity)
    real = set(imu.t[(imu.t > t_from + 1e-9) & (imu.t <= t_to + 1e-9)].tolist())
    return [o for o in out if o[0] in real]


# ----------------------------------------------------------------------- pipeline


@dataclass
class ScanPoints:
    """Validity-filtered measurements of one scan."""

    t: float
    ranges: np.ndarray
    v_meas: np.ndarray
    w_y: np.ndarray
    w_z: np.ndarray
    mu: np.ndarray
    aliased: np.ndarray

    def __len__(self):
        return len(self.ranges)


def filter_scan(scan: radar.RadarScan, cfg: EstimatorConfig, max_range: float) -> ScanPoints:
    if scan.points:
        d, v, wy, wz = scan.arrays()
        aliased = np.array([p.aliased for p in scan.points])
    else:
        d = v = wy = wz = np.zeros(0)
        aliased = np.zeros(0, bool)
    lim = max_range if cfg.max_range is None else min(cfg.max_range, max_range)
    ok = (d >= cfg.min_range) & (d <= lim) & noise.valid_phase_mask(wy, wz)
    mu = np.zeros((d.size, 3))
    if np.any(ok):
        mu[ok] = radar.phases_to_bearing(wy[ok], wz[ok]).reshape(-1, 3)
        az, el = radar.bearing_to_angles(mu[ok])
        sub = (np.abs(az) <= math.radians(cfg.max_azimuth_deg)) & (np.abs(el) <= math.radians(cfg.max_elevation_deg))
        ok[np.flatnonzero(ok)[~sub]] = False
    return ScanPoints(scan.timestamp, d[ok], v[ok], wy[ok], wz[ok], mu[ok], aliased[ok])


@dataclass
class OdometryResult:
    low_rate: List[tuple] = field(default_factory=list)  # (t, R, p, v)
    high_rate: List[tuple] = field(default_factory=list)
    scan_times: List[float] = field(default_factory=list)  # wall seconds per scan
    whitened_doppler: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    static_counts: List[int] = field(default_factory=list)
    map: Optional[PointMap] = None
    final_states: List[tuple] = field(default_factory=list)  # (t, NavState) left in the window

    def runtime_stats(self) -> dict:
        w = np.array(self.scan_times) * 1e3
        if w.size == 0:
            return {"scans": 0}
        return {"scans": int(w.size), "mean_ms": float(w.mean()), "p50_ms": float(np.percentile(w, 50)),
                "p95_ms": float(np.percentile(w, 95)), "max_ms": float(w.max())}


def extrinsics_from(cfg: EstimatorConfig, meta: Optional[dict]) -> Extrinsics:
    meta = meta or {}
    rig = RigSpec()
    if cfg.radar_rpy_deg is not None:
        R = lie.from_rpy(*np.radians(cfg.radar_rpy_deg))
    elif "radar_rotation" in meta:
        R = np.array(meta["radar_rotation"], dtype=float)
    else:
        R = rig.radar_rotation
    if cfg.lever_arm is not None:
        l = np.array(cfg.lever_arm, dtype=float)
    elif "lever_arm" in meta:
        l = np.array(meta["lever_arm"], dtype=float)
    else:
        l = rig.lever_arm
    return Extrinsics(R, l)


class RadarInertialOdometry:
    def __init__(self, cfg: EstimatorConfig, chirp: radar.ChirpConfig, extrinsics: Extrinsics):
        self.cfg = cfg
        self.chirp = chirp
        rn = noise.radar_noise(chirp)
        self.sigma_vr = rn.doppler.std_dev if cfg.sigma_doppler is None else cfg.sigma_doppler
        sigma_d = rn.range.std_dev if cfg.sigma_range is None else cfg.sigma_range
        self.quant_range = noise.QuantNoise(sigma_d * math.sqrt(12.0))
        sp = rn.phase.sigma_wy if cfg.sigma_phase is None else cfg.sigma_phase
        self.phase_noise = noise.PhaseNoise(sp, sp)
        self.extrinsics = extrinsics
        self.doppler_loss = cauchy(cfg.cauchy_scale)
        self.baro_loss = huber(cfg.huber_scale)
        self.reg_loss = RobustLoss(cfg.registration_loss, cfg.cauchy_scale if cfg.registration_loss == "cauchy"
                                   else cfg.huber_scale)
        self.map = PointMap(cfg.voxel_size, cfg.neighbor_radius, cfg.min_neighbors)
        self.smoother = Smoother(cfg.max_iterations, rel_tol=cfg.convergence_tol)
        self.nodes: List[Tuple[float, int]] = []
        self._next = 0

    # -------------------------------------------------------------- factors
    def _sigma_mu(self, pts: ScanPoints):
        return noise.bearing_covariance(pts.w_y, pts.w_z, self.phase_noise).reshape(-1, 3, 3)

    def doppler_factor(self, key, pts: ScanPoints, omega) -> DopplerScanFactor:
        sigma_mu = self._sigma_mu(pts) if self.cfg.angle_noise_on else None
        gyro_cov = None
        if self.cfg.gyro_term_on:
            n = max(1, int(round(2 * self.cfg.gyro_average_window * self._imu_rate)))
            gyro_cov = np.eye(3) * self.cfg.gyro_noise**2 * self._imu_rate / n
        return DopplerScanFactor(key, EXT, pts.mu, pts.v_meas, omega, self.sigma_vr, sigma_mu,
                                 self.doppler_loss, gyro_cov)

    def registration_factor(self, key, pts: ScanPoints, state: NavState, omega) -> Optional[RegistrationFactor]:
        if len(self.map) < self.cfg.min_neighbors or len(pts) == 0:
            return None
        keep = self.select_static_points(pts, state, omega)
        if not np.any(keep):
            return None
        ext = self.extrinsics_estimate
        local = pts.ranges[keep, None] * pts.mu[keep]
        world = (local @ ext.R.T + ext.l) @ state.R.T + state.p
        hits = self.map.radius_search(world)
        rows, means, covs = [], [], []
        mp = self.map.points
        for i, idx in enumerate(hits):
            if idx.size >= self.cfg.min_neighbors:
                q = mp[idx]
                mean = q.mean(axis=0)
                dq = q - mean
                rows.append(i)
                means.append(mean)
                covs.append(dq.T @ dq / (idx.size - 1))
        if not rows:
            return None
        sel = np.flatnonzero(keep)[rows]
        sigma_mu = self._sigma_mu(pts)[sel]
        return RegistrationFactor(key, EXT, pts.ranges[sel], pts.mu[sel], sigma_mu, np.array(means),
                                  np.array(covs), self.quant_range, self.reg_loss)

    def select_static_points(self, pts: ScanPoints, state: NavState, omega,
                             kappa: Optional[float] = None) -> np.ndarray:
        """Mask of points whose whitened Doppler residual at ``state`` is below kappa."""
        kappa = self.cfg.kappa_static if kappa is None else kappa
        f = self.doppler_factor(0, pts, omega)
        values = {0: state, EXT: self.extrinsics_estimate}
        f.update_model(values)
        return np.abs(f.whitened(values)) < kappa

    @property
    def extrinsics_estimate(self) -> Extrinsics:
        return self.smoother.values.get(EXT, self.extrinsics)

    # ---------------------------------------------------------------- main
    def run(self, ds: SimDataset) -> OdometryResult:
        cfg = self.cfg
        imu = ImuBuffer.from_records(ds.imu)
        if len(imu) < 2:
            raise InitializationError("dataset has no IMU data")
        self._imu_rate = (len(imu) - 1) / (imu.t[-1] - imu.t[0])
        baro_t = np.array([b.t for b in ds.baro])
        baro_p = np.array([b.pressure for b in ds.baro])
        use_baro = cfg.baro_on and baro_t.size > 0

        p0 = None
        if baro_t.size:
            m = baro_t <= imu.t[0] + cfg.init_duration + 1e-9
            p0 = float(np.mean(baro_p[m])) if np.any(m) else float(baro_p[0])
        state0, cov0 = initialize_at_rest(imu, cfg, pressure=p0)
        t_start = imu.t[0] + cfg.init_duration

        sm = self.smoother
        sm.add_variable(EXT, self.extrinsics, fixed=not cfg.estimate_extrinsics)
        if cfg.estimate_extrinsics:
            s = np.r_[np.full(3, cfg.extrinsics_sigma[0]), np.full(3, cfg.extrinsics_sigma[1])]
            sm.add_factor(PriorFactor.from_covariance(EXT, self.extrinsics, np.diag(s**2)))

        result = OdometryResult(map=self.map)
        prev_t = None
        for scan in ds.radar:
            if scan.timestamp < t_start - 1e-9 or scan.timestamp > imu.t[-1]:
                continue
            wall0 = time.perf_counter()
            t = scan.timestamp
            key = self._next
            self._next += 1
            if prev_t is None:
                state = state0
                sm.add_variable(key, state)
                sm.add_factor(PriorFactor.from_covariance(key, state, cov0))
            else:
                prev_key = self.nodes[-1][1]
                prev = sm.values[prev_key]
                seg = imu.segment(prev_t, t)
                imu_f = ImuFactor(prev_key, key, *seg, prev, cfg.gyro_noise, cfg.accel_noise, cfg.gravity,
                                  cfg.rebias_threshold)
                R, p, v = predict(prev.R, prev.p, prev.v, imu_f.pim, prev.ba, prev.bg, cfg.gravity)
                state = NavState(R, p, v, prev.ba.copy(), prev.bg.copy(), prev.bb)
                result.high_rate.extend(
                    o for o in integrate_samples(prev.R, prev.p, prev.v, prev.ba, prev.bg, *seg, cfg.gravity)
                    if o[0] < t - 1e-9)
                sm.add_variable(key, state)
                sm.add_factor(imu_f)
                sm.add_factor(BiasFactor(prev_key, key, t - prev_t, cfg.accel_bias_rw, cfg.gyro_bias_rw,
                                         cfg.baro_bias_rw))
            self.nodes.append((t, key))
            prev_t = t

            omega = imu.mean_rate(t, cfg.gyro_average_window)
            pts = filter_scan(scan, cfg, self.chirp.max_range)
            dop = None
            if len(pts):
                dop = self.doppler_factor(key, pts, omega)
                sm.add_factor(dop)
            else:
                log.info("scan at t=%.3f has no valid points", t)
            if cfg.registration_on:
                reg = self.registration_factor(key, pts, state, omega)
                if reg is not None:
                    sm.add_factor(reg)
            if use_baro and baro_t[0] <= t <= baro_t[-1]:
                sm.add_factor(BaroFactor(key, float(np.interp(t, baro_t, baro_p)), cfg.baro_std, self.baro_loss))

            opt = sm.optimize()
            result.diagnostics.extend(opt.diagnostics)
            est = sm.values[key]
            if not est.is_finite():
                raise DomainError(f"estimate diverged at t={t:.3f}")
            result.low_rate.append((t, est.R.copy(), est.p.copy(), est.v.copy()))
            result.high_rate.append((t, est.R.copy(), est.p.copy(), est.v.copy()))

            if dop is not None:
                values = sm.values
                dop.update_model(values)
                wres = dop.whitened(values)
                result.whitened_doppler.append(wres)
                static = np.abs(wres) < cfg.kappa_static
                result.static_counts.append(int(static.sum()))
                if np.any(static):
                    ext = self.extrinsics_estimate
                    local = pts.ranges[static, None] * pts.mu[static]
                    self.map.insert((local @ ext.R.T + ext.l) @ est.R.T + est.p)

            while self.nodes[-1][0] - self.nodes[0][0] > cfg.lag + 1e-9:
                _, old = self.nodes.pop(0)
                sm.marginalize([old])
            result.scan_times.append(time.perf_counter() - wall0)

        if prev_t is not None and imu.t[-1] > prev_t:
            last = sm.values[self.nodes[-1][1]]
            result.high_rate.extend(propagate_high_rate(last, imu, prev_t, gravity=cfg.gravity))
        result.final_states = [(t, sm.values[k]) for t, k in self.nodes]
        result.diagnostics.extend(d for d in sm.diagnostics if d not in result.diagnostics)
        return result


def run_odometry(ds: SimDataset, cfg: EstimatorConfig, chirp: Optional[radar.ChirpConfig] = None) -> OdometryResult:
    if chirp is None:
        meta = ds.meta or {}
        name = cfg.chirp or meta.get("chirp")
        if cfg.chirp is None and "chirp_config" in meta:
            chirp = radar.config_from_dict(meta["chirp_config"])
        elif name is not None:
            chirp = radar.load_chirp_config(name)
        else:
            raise DomainError("no chirp configuration given and none recorded in the dataset")
    return RadarInertialOdometry(cfg, chirp, extrinsics_from(cfg, ds.meta)).run(ds)


def truth_whitened_doppler(ds: SimDataset, cfg: EstimatorConfig, chirp: radar.ChirpConfig,
                           extrinsics: Optional[Extrinsics] = None) -> np.ndarray:
    """Whitened Doppler residuals of every valid point evaluated at the true states."""
    ext = extrinsics_from(cfg, ds.meta) if extrinsics is None else extrinsics
    odo = RadarInertialOdometry(cfg, chirp, ext)
    truth_t = np.array([s.t for s in ds.truth])
    out = []
    for scan in ds.radar:
        pts = filter_scan(scan, cfg, chirp.max_range)
        if not len(pts):
            continue
        i = int(np.argmin(np.abs(truth_t - scan.timestamp)))
        s = ds.truth[i]
        if abs(s.t - scan.timestamp) > 1e-6:
            raise DomainError("truth is not sampled at the scan timestamps")
        state = NavState(s.R, s.p, s.v, np.zeros(3), np.zeros(3), 0.0)
        f = odo.doppler_factor(0, pts, s.omega)
        values = {0: state, EXT: ext}
        f.update_model(values)
        out.append(f.whitened(values))
    return np.concatenate(out) if out else np.zeros(0)
