"""IMU buffering and on-manifold preintegration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import lie
from ..errors import DomainError


class ImuBuffer:
    """Time-ordered IMU samples with linear interpolation between them."""

    def __init__(self, t, gyro, accel):
        self.t = np.asarray(t, dtype=float)
        self.gyro = np.asarray(gyro, dtype=float).reshape(-1, 3)
        self.accel = np.asarray(accel, dtype=float).reshape(-1, 3)
        if self.t.size and np.any(np.diff(self.t) <= 0):
            raise DomainError("IMU timestamps must be strictly increasing")

    @classmethod
    def from_records(cls, records) -> "ImuBuffer":
        return cls([r.t for r in records], [r.gyro for r in records], [r.accel for r in records])

    def __len__(self):
        return self.t.size

    def interpolate(self, t: float):
        g = np.array([np.interp(t, self.t, self.gyro[:, k]) for k in range(3)])
        a = np.array([np.interp(t, self.t, self.accel[:, k]) for k in range(3)])
        return g, a

    def segment(self, t0: float, t1: float):
        """Samples on [t0, t1] with interpolated end points."""
        if t1 <= t0:
            raise DomainError(f"empty IMU segment [{t0}, {t1}]")
        if not len(self) or t0 < self.t[0] - 1e-9 or t1 > self.t[-1] + 1e-9:
            raise DomainError(f"IMU buffer does not cover [{t0}, {t1}]")
        inside = (self.t > t0 + 1e-9) & (self.t < t1 - 1e-9)
        g0, a0 = self.interpolate(t0)
        g1, a1 = self.interpolate(t1)
        t = np.concatenate([[t0], self.t[inside], [t1]])
        gyro = np.vstack([g0, self.gyro[inside], g1])
        accel = np.vstack([a0, self.accel[inside], a1])
        return t, gyro, accel

    def mean_rate(self, t: float, half_width: float) -> np.ndarray:
        m = np.abs(self.t - t) <= half_width
        if np.any(m):
            return self.gyro[m].mean(axis=0)
        return self.interpolate(t)[0]


@dataclass
class PreintegratedImu:
    dR: np.ndarray
    dp: np.ndarray
    dv: np.ndarray
    cov: np.ndarray  # 9x9, order [rotation, position, velocity]
    dt: float
    ba_lin: np.ndarray
    bg_lin: np.ndarray
    J_Rg: np.ndarray
    J_pa: np.ndarray
    J_pg: np.ndarray
    J_va: np.ndarray
    J_vg: np.ndarray
    count: int

    def corrected(self, ba, bg):
        """First-order bias update of the increments."""
        dba = ba - self.ba_lin
        dbg = bg - self.bg_lin
        dR = self.dR @ lie.exp(self.J_Rg @ dbg)
        dp = self.dp + self.J_pa @ dba + self.J_pg @ dbg
        dv = self.dv + self.J_va @ dba + self.J_vg @ dbg
        return dR, dp, dv


def preintegrate(t: Sequence[float], gyro, accel, ba=None, bg=None,
                 gyro_noise: float = 0.0, accel_noise: float = 0.0) -> PreintegratedImu:
    """Midpoint preintegration of samples ``t[0..n]`` with bias linearization point (ba, bg).

    ``gyro_noise``/``accel_noise`` are continuous densities; the discrete
    per-step variance is density^2 / dt.
    """
    t = np.asarray(t, dtype=float)
    gyro = np.asarray(gyro, dtype=float).reshape(-1, 3)
    accel = np.asarray(accel, dtype=float).reshape(-1, 3)
    if t.size < 2:
        raise DomainError("preintegration needs at least two samples")
    if np.any(np.diff(t) <= 0):
        raise DomainError("IMU timestamps must be strictly increasing")
    ba = np.zeros(3) if ba is None else np.asarray(ba, dtype=float)
    bg = np.zeros(3) if bg is None else np.asarray(bg, dtype=float)

    dR = np.eye(3)
    dp = np.zeros(3)
    dv = np.zeros(3)
    cov = np.zeros((9, 9))
    J_Rg = np.zeros((3, 3))
    J_pa = np.zeros((3, 3))
    J_pg = np.zeros((3, 3))
    J_va = np.zeros((3, 3))
    J_vg = np.zeros((3, 3))
    I3 = np.eye(3)
    A = np.eye(9)
    B = np.zeros((9, 6))
    for k in range(t.size - 1):
        h = t[k + 1] - t[k]
        w = 0.5 * (gyro[k] + gyro[k + 1]) - bg
        f0 = accel[k] - ba
        f1 = accel[k + 1] - ba
        step = lie.exp(w * h)
        Jr = lie.right_jacobian(w * h)
        a = 0.5 * (dR @ f0 + dR @ step @ f1)
        fm = 0.5 * (f0 + f1)
        Rf = dR @ lie.hat(fm)

        # error-state propagation, piecewise-constant approximation of the midpoint step
        A[0:3, 0:3] = step.T
        A[3:6, 0:3] = -0.5 * Rf * h * h
        A[3:6, 6:9] = I3 * h
        A[6:9, 0:3] = -Rf * h
        B[0:3, 0:3] = Jr * h
        B[3:6, 3:6] = 0.5 * dR * h * h
        B[6:9, 3:6] = dR * h
        Q = np.diag(np.r_[np.full(3, gyro_noise**2 / h), np.full(3, accel_noise**2 / h)])
        cov = A @ cov @ A.T + B @ Q @ B.T

        # exact derivatives of the midpoint step with respect to the biases
        da_dba = -0.5 * (dR + dR @ step)
        da_dbg = -0.5 * dR @ lie.hat(f0 + step @ f1) @ J_Rg + 0.5 * dR @ step @ lie.hat(f1) @ Jr * h
        J_pa = J_pa + J_va * h + 0.5 * da_dba * h * h
        J_pg = J_pg + J_vg * h + 0.5 * da_dbg * h * h
        J_va = J_va + da_dba * h
        J_vg = J_vg + da_dbg * h
        J_Rg = step.T @ J_Rg - Jr * h

        dp = dp + dv * h + 0.5 * a * h * h
        dv = dv + a * h
        dR = dR @ step
    dR = lie.normalize(dR)
    cov = 0.5 * (cov + cov.T)
    return PreintegratedImu(dR, dp, dv, cov, float(t[-1] - t[0]), ba.copy(), bg.copy(),
                            J_Rg, J_pa, J_pg, J_va, J_vg, int(t.size))


def predict(R, p, v, pim: PreintegratedImu, ba, bg, gravity: float = 9.81):
    """Navigation state at the end of the preintegrated span."""
    dR, dp, dv = pim.corrected(ba, bg)
    g = np.array([0.0, 0.0, -gravity])
    T = pim.dt
    return R @ dR, p + v * T + 0.5 * g * T * T + R @ dp, v + g * T + R @ dv


def integrate_samples(R, p, v, ba, bg, t, gyro, accel, gravity: float = 9.81):
    """Dead-reckon through the samples, returning the state after every step.

    Segments are short (one radar period), so the rotation is not
    re-orthonormalized along the way.
    """
    g = np.array([0.0, 0.0, -gravity])
    out = []
    for k in range(len(t) - 1):
        h = t[k + 1] - t[k]
        step = lie.exp((0.5 * (gyro[k] + gyro[k + 1]) - bg) * h)
        a = 0.5 * (R @ (accel[k] - ba) + R @ step @ (accel[k + 1] - ba)) + g
        p = p + v * h + 0.5 * a * h * h
        v = v + a * h
        R = R @ step
        out.append((t[k + 1], R, p, v))
    return out


def bias_moved(pim: PreintegratedImu, ba, bg, threshold) -> bool:
    return (np.linalg.norm(ba - pim.ba_lin) > threshold[0]
            or np.linalg.norm(bg - pim.bg_lin) > threshold[1])
