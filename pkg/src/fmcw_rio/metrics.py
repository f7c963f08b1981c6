"""TUM trajectory files and APE / RPE metrics.

APE aligns the first associated pose only. RPE uses non-overlapping
segments of fixed arc length along the reference trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import lie
from .errors import DatasetError, DomainError


class Trajectory(NamedTuple):
    t: np.ndarray  # (n,)
    p: np.ndarray  # (n, 3)
    R: np.ndarray  # (n, 3, 3)

    def __len__(self):
        return self.t.size


def trajectory_from_poses(poses: Iterable) -> Trajectory:
    """From (t, R, p, ...) tuples."""
    poses = list(poses)
    if not poses:
        return Trajectory(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3, 3)))
    return Trajectory(np.array([x[0] for x in poses], dtype=float),
                      np.array([x[2] for x in poses], dtype=float),
                      np.array([x[1] for x in poses], dtype=float))


def format_tum_line(t, R, p) -> str:
    q = lie.to_quaternion(R)
    return "%.6f %.6f %.6f %.6f %.9f %.9f %.9f %.9f" % (t, p[0], p[1], p[2], q[0], q[1], q[2], q[3])


def write_tum(path, traj: Trajectory) -> None:
    with Path(path).open("w") as fh:
        for t, p, R in zip(traj.t, traj.p, traj.R):
            fh.write(format_tum_line(t, R, p) + "\n")


def read_tum(path) -> Trajectory:
    ts, ps, Rs = [], [], []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise DatasetError(f"expected 8 fields, got {len(parts)}", lineno)
            try:
                vals = [float(x) for x in parts]
            except ValueError:
                raise DatasetError("non-numeric field", lineno) from None
            if ts and vals[0] <= ts[-1]:
                raise DatasetError("timestamps not strictly increasing", lineno)
            ts.append(vals[0])
            ps.append(vals[1:4])
            Rs.append(lie.from_quaternion(vals[4:8]))
    return Trajectory(np.array(ts), np.array(ps).reshape(-1, 3), np.array(Rs).reshape(-1, 3, 3))


def associate(t_est, t_ref, tol: float = 0.01):
    """Index pairs (i_est, i_ref) matched by nearest reference timestamp within ``tol``."""
    t_est = np.asarray(t_est, dtype=float)
    t_ref = np.asarray(t_ref, dtype=float)
    if t_ref.size == 0 or t_est.size == 0:
        return np.zeros(0, int), np.zeros(0, int)
    j = np.clip(np.searchsorted(t_ref, t_est), 1, t_ref.size - 1) if t_ref.size > 1 else np.zeros(t_est.size, int)
    if t_ref.size > 1:
        left = np.abs(t_est - t_ref[j - 1]) <= np.abs(t_est - t_ref[j])
        j = np.where(left, j - 1, j)
    ok = np.abs(t_est - t_ref[j]) <= tol
    return np.flatnonzero(ok), j[ok]


def _rot_distance_deg(A, B):
    """Angle of A^T B from the chordal distance |A - B|_F = 2 sqrt(2) sin(angle / 2).

    Identical inputs give exactly zero, unlike arccos of the trace.
    """
    chord = np.linalg.norm(np.asarray(A) - np.asarray(B), axis=(-2, -1))
    return np.degrees(2.0 * np.arcsin(np.clip(chord / (2.0 * math.sqrt(2.0)), 0.0, 1.0)))


def _stats(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0, 0.0
    return float(np.sqrt(np.mean(x * x))), float(np.std(x))


@dataclass
class TrajectoryMetrics:
    ape_rmse: float
    ape_std: float
    ape_rot_rmse_deg: float
    rpe_rmse: float
    rpe_std: float
    rpe_rot_rmse_deg: float
    segment_length: float
    pairs: int
    segments: int
    ape_errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    rpe_errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def summary(self) -> dict:
        return {
            "ape_rmse_m": self.ape_rmse, "ape_std_m": self.ape_std, "ape_rot_rmse_deg": self.ape_rot_rmse_deg,
            "rpe_rmse_m": self.rpe_rmse, "rpe_std_m": self.rpe_std, "rpe_rot_rmse_deg": self.rpe_rot_rmse_deg,
            "segment_length_m": self.segment_length, "pairs": self.pairs, "segments": self.segments,
        }


def absolute_errors(est: Trajectory, ref: Trajectory):
    """Translation (m) and rotation (deg) errors after first-pose alignment of matched pairs.

    Aligning the first estimated pose onto the first reference pose is the
    same as comparing both trajectories relative to their own first pose.
    """
    pe = (est.p - est.p[0]) @ est.R[0]
    pr = (ref.p - ref.p[0]) @ ref.R[0]
    Re = est.R[0].T @ est.R
    Rr = ref.R[0].T @ ref.R
    return np.linalg.norm(pe - pr, axis=1), _rot_distance_deg(Re, Rr)


def segment_pairs(p_ref, length: float):
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p_ref, axis=0), axis=1))])
    pairs = []
    i = 0
    while True:
        j = int(np.searchsorted(s, s[i] + length - 1e-12))
        if j >= s.size:
            break
        pairs.append((i, j))
        i = j
    return pairs


def relative_errors(est: Trajectory, ref: Trajectory, length: float = 10.0):
    dts, drs = [], []
    for i, j in segment_pairs(ref.p, length):
        # relative motion expressed in the frame of pose i
        d_ref = ref.R[i].T @ (ref.p[j] - ref.p[i])
        d_est = est.R[i].T @ (est.p[j] - est.p[i])
        dts.append(np.linalg.norm(d_est - d_ref))
        drs.append(_rot_distance_deg(est.R[i].T @ est.R[j], ref.R[i].T @ ref.R[j]))
    return np.array(dts), np.array(drs)


def evaluate(est: Trajectory, ref: Trajectory, segment_length: float = 10.0, tol: float = 0.01) -> TrajectoryMetrics:
    ie, ir = associate(est.t, ref.t, tol)
    if ie.size < 2:
        raise DomainError("fewer than two associated poses; do the trajectories overlap in time?")
    e = Trajectory(est.t[ie], est.p[ie], est.R[ie])
    r = Trajectory(ref.t[ir], ref.p[ir], ref.R[ir])
    at, ar = absolute_errors(e, r)
    rt, rr = relative_errors(e, r, segment_length)
    ape, ape_sd = _stats(at)
    rpe, rpe_sd = _stats(rt)
    return TrajectoryMetrics(ape, ape_sd, _stats(ar)[0], rpe, rpe_sd, _stats(rr)[0], segment_length,
                             int(ie.size), int(rt.size), at, rt)
