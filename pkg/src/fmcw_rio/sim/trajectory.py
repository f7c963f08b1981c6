"""Analytic ground-truth trajectories.

A trajectory is a curve ``c(u)`` traversed with a progress ``u(t)``: rest,
then a quintic smooth-step ramp to the cruise speed, then constant speed.
For the arc-length curves (line, helix, rounded rectangle) the cruise speed
is exact; the lemniscate is parametrized by angle, so its speed varies.
Attitude is yaw-only: either aligned with the planar tangent or constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np

from ..errors import ConfigError, DomainError
from ..lie import rot_z

KINDS = ("helix", "rounded_rectangle", "lemniscate", "line", "static")


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "static"
    duration: float = 10.0
    speed: float = 0.0
    ramp_time: float = 2.0
    rest_time: float = 2.0
    yaw_mode: str = "constant"
    yaw: float = 0.0  # rad, used in constant mode
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 3.0  # helix
    pitch: float = 1.0  # helix rise per turn, m
    side_x: float = 10.0  # rounded rectangle
    side_y: float = 6.0
    corner_radius: float = 1.5
    size: float = 5.0  # lemniscate half-width
    direction: Tuple[float, float, float] = (1.0, 0.0, 0.0)  # line

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"trajectory kind must be one of {KINDS}, got {self.kind!r}", "kind")
        if self.duration <= 0:
            raise ConfigError("duration must be positive", "duration")
        if self.speed < 0:
            raise ConfigError("speed must be non-negative", "speed")
        if self.ramp_time <= 0 or self.rest_time < 0:
            raise ConfigError("ramp_time must be positive and rest_time non-negative", "ramp_time")
        if self.yaw_mode not in ("aligned", "constant"):
            raise ConfigError("yaw_mode must be 'aligned' or 'constant'", "yaw_mode")
        if self.kind == "rounded_rectangle" and 2 * self.corner_radius > min(self.side_x, self.side_y):
            raise ConfigError("corner radius too large for the rectangle", "corner_radius")


class TruthSample(NamedTuple):
    t: float
    R: np.ndarray  # body -> inertial
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    omega: np.ndarray  # body rates


def _smoothstep(x):
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def progress(spec: TrajectorySpec, t: float):
    """(u, du/dt, d2u/dt2) for the rest / ramp / cruise profile."""
    V, T, t0 = spec.speed, spec.ramp_time, spec.rest_time
    if spec.kind == "static" or t <= t0:
        return 0.0, 0.0, 0.0
    tau = (t - t0) / T
    if tau < 1.0:
        u = V * T * (tau**6 - 3.0 * tau**5 + 2.5 * tau**4)
        return u, V * _smoothstep(tau), V * 30.0 * tau**2 * (1.0 - tau) ** 2 / T
    return 0.5 * V * T + V * (t - t0 - T), V, 0.0


def _line(spec, u):
    d = np.asarray(spec.direction, dtype=float)
    d = d / np.linalg.norm(d)
    return u * d, d, np.zeros(3)


def _helix(spec, u):
    r, h = spec.radius, spec.pitch / (2.0 * math.pi)
    k = math.hypot(r, h)
    a = u / k
    s, c = math.sin(a), math.cos(a)
    return (np.array([r * s, r * (1.0 - c), h * a]),
            np.array([r * c / k, r * s / k, h / k]),
            np.array([-r * s / k**2, r * c / k**2, 0.0]))


def _lemniscate(spec, u):
    A = spec.size
    a = u / A
    s, c = math.sin(a), math.cos(a)
    s2, c2 = math.sin(2 * a), math.cos(2 * a)
    return (np.array([A * s, 0.5 * A * s2, 0.0]),
            np.array([c, c2, 0.0]),
            np.array([-s / A, -2.0 * s2 / A, 0.0]))


def _rounded_rectangle(spec, u):
    rc = spec.corner_radius
    lx, ly = spec.side_x - 2 * rc, spec.side_y - 2 * rc
    quarter = 0.5 * math.pi * rc
    period = 2 * lx + 2 * ly + 4 * quarter
    s = u % period
    # corners of the straight segments, counter-clockwise from the origin
    pos = np.zeros(3)
    heading = 0.0
    for straight in (lx, ly, lx, ly):
        d = np.array([math.cos(heading), math.sin(heading), 0.0])
        if s <= straight:
            return pos + s * d, d, np.zeros(3)
        s -= straight
        pos = pos + straight * d
        center = pos + rc * np.array([-math.sin(heading), math.cos(heading), 0.0])
        if s <= quarter:
            ang = heading + s / rc
            t = np.array([math.cos(ang), math.sin(ang), 0.0])
            n = np.array([-math.sin(ang), math.cos(ang), 0.0])
            return center - rc * n, t, n / rc
        s -= quarter
        heading += 0.5 * math.pi
        pos = center - rc * np.array([-math.sin(heading), math.cos(heading), 0.0])
    return pos, np.array([1.0, 0.0, 0.0]), np.zeros(3)


_CURVES = {
    "line": _line,
    "helix": _helix,
    "lemniscate": _lemniscate,
    "rounded_rectangle": _rounded_rectangle,
    "static": lambda spec, u: (np.zeros(3), np.array([1.0, 0.0, 0.0]), np.zeros(3)),
}


def sample_trajectory(spec: TrajectorySpec, t: float) -> TruthSample:
    if not -1e-9 <= t <= spec.duration + 1e-9:
        raise DomainError(f"t={t} outside [0, {spec.duration}]")
    u, du, ddu = progress(spec, t)
    c, dc, ddc = _CURVES[spec.kind](spec, u)
    p = np.asarray(spec.origin, dtype=float) + c
    v = dc * du
    a = ddc * du * du + dc * ddu

    if spec.yaw_mode == "aligned":
        planar = dc[0] ** 2 + dc[1] ** 2
        if spec.kind == "static" or planar < 1e-12:
            raise DomainError("yaw-aligned mode requested where the planar speed is zero")
        yaw = math.atan2(dc[1], dc[0])
        # equals (x' y'' - x'' y') / (x'^2 + y'^2) in time derivatives
        yaw_rate = du * (dc[0] * ddc[1] - ddc[0] * dc[1]) / planar
    else:
        yaw, yaw_rate = spec.yaw, 0.0
    return TruthSample(float(t), rot_z(yaw), p, v, a, np.array([0.0, 0.0, yaw_rate]))


def path_length(spec: TrajectorySpec) -> float:
    return progress(spec, spec.duration)[0]
