"""Manifold variables used by the smoother.

Every variable exposes ``dim``, ``retract(delta)`` and ``local(other)``
(the inverse of retract) so the solver never needs to know what it is
optimizing. Rotations use the right-multiplicative exponential map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import lie

# tangent layout of a navigation node
ROT, POS, VEL, BA, BG, BB = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15), slice(15, 16)
NAV_DIM = 16
NAV_LABELS = ("roll", "pitch", "yaw", "px", "py", "pz", "vx", "vy", "vz",
              "bax", "bay", "baz", "bgx", "bgy", "bgz", "bb")


@dataclass
class NavState:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))  # body -> world
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bb: float = 0.0

    dim = NAV_DIM
    labels = NAV_LABELS

    def retract(self, d) -> "NavState":
        return NavState(self.R @ lie.exp(d[ROT]), self.p + d[POS], self.v + d[VEL],
                        self.ba + d[BA], self.bg + d[BG], self.bb + float(d[15]))

    def local(self, other: "NavState") -> np.ndarray:
        return np.concatenate([lie.log(self.R.T @ other.R), other.p - self.p, other.v - self.v,
                               other.ba - self.ba, other.bg - self.bg, [other.bb - self.bb]])

    def local_jacobian(self, other: "NavState") -> np.ndarray:
        """d local(other) / d other-tangent."""
        D = np.eye(NAV_DIM)
        D[ROT, ROT] = lie.right_jacobian_inv(lie.log(self.R.T @ other.R))
        return D

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(x)) for x in (self.R, self.p, self.v, self.ba, self.bg, [self.bb]))


@dataclass
class Extrinsics:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))  # radar -> body
    l: np.ndarray = field(default_factory=lambda: np.zeros(3))  # lever arm in body frame

    dim = 6
    labels = ("ext_rx", "ext_ry", "ext_rz", "ext_lx", "ext_ly", "ext_lz")

    def retract(self, d) -> "Extrinsics":
        return Extrinsics(self.R @ lie.exp(d[0:3]), self.l + d[3:6])

    def local(self, other: "Extrinsics") -> np.ndarray:
        return np.concatenate([lie.log(self.R.T @ other.R), other.l - self.l])

    def local_jacobian(self, other: "Extrinsics") -> np.ndarray:
        D = np.eye(6)
        D[0:3, 0:3] = lie.right_jacobian_inv(lie.log(self.R.T @ other.R))
        return D


class VectorState:
    """Plain Euclidean variable."""

    def __init__(self, x):
        self.x = np.atleast_1d(np.asarray(x, dtype=float)).copy()
        self.dim = self.x.size
        self.labels = tuple(f"x{i}" for i in range(self.dim))

    def retract(self, d) -> "VectorState":
        return VectorState(self.x + d)

    def local(self, other: "VectorState") -> np.ndarray:
        return other.x - self.x

    def local_jacobian(self, other) -> np.ndarray:
        return np.eye(self.dim)

    def __repr__(self):
        return f"VectorState({self.x!r})"
