"""Line-delimited dataset records.

One JSON object per line, ordered by time::

    {"type": "meta", ...}                                    (first line, optional)
    {"type": "imu",   "t": s, "gyro": [3], "accel": [3]}
    {"type": "radar", "t": s, "points": [[range, doppler, w_y, w_z, aliased], ...],
                       "truth": [[range, doppler, w_y, w_z], ...]}
    {"type": "baro",  "t": s, "pressure": Pa}
    {"type": "truth", "t": s, "p": [3], "q": [qx, qy, qz, qw], "v": [3]}

The radar point field order is fixed; ``aliased`` is 0/1 simulator truth.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import lie, radar
from ..errors import DatasetError
from .synth import BaroRecord, ImuRecord, SimDataset
from .trajectory import TruthSample

_ORDER = {"truth": 0, "imu": 1, "baro": 2, "radar": 3}


def _vec(x):
    return [float(v) for v in x]


def dataset_records(ds: SimDataset):
    recs = []
    for s in ds.truth:
        recs.append({"type": "truth", "t": s.t, "p": _vec(s.p), "q": _vec(lie.to_quaternion(s.R)),
                     "v": _vec(s.v), "omega": _vec(s.omega)})
    for m in ds.imu:
        recs.append({"type": "imu", "t": m.t, "gyro": _vec(m.gyro), "accel": _vec(m.accel)})
    for b in ds.baro:
        recs.append({"type": "baro", "t": b.t, "pressure": float(b.pressure)})
    for scan in ds.radar:
        rec = {"type": "radar", "t": scan.timestamp,
               "points": [[p.range, p.radial_speed, p.phases[0], p.phases[1], int(p.aliased)]
                          for p in scan.points]}
        if scan.points and scan.points[0].truth_range is not None:
            rec["truth"] = [[p.truth_range, p.truth_radial_speed, p.truth_phases[0], p.truth_phases[1]]
                            for p in scan.points]
        recs.append(rec)
    recs.sort(key=lambda r: (r["t"], _ORDER[r["type"]]))
    return recs


def write_dataset(ds: SimDataset, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        if ds.meta:
            fh.write(json.dumps({"type": "meta", **ds.meta}, sort_keys=True) + "\n")
        for rec in dataset_records(ds):
            fh.write(json.dumps(rec) + "\n")


def _parse_point(row, truth_row=None):
    if len(row) not in (4, 5):
        raise ValueError("radar point needs [range, doppler, w_y, w_z, aliased?]")
    p = radar.RadarPoint(range=float(row[0]), radial_speed=float(row[1]),
                         phases=radar.AoaPhases(float(row[2]), float(row[3])),
                         aliased=bool(row[4]) if len(row) == 5 else False)
    if truth_row is not None:
        p.truth_range = float(truth_row[0])
        p.truth_radial_speed = float(truth_row[1])
        p.truth_phases = radar.AoaPhases(float(truth_row[2]), float(truth_row[3]))
    return p


def read_dataset(path) -> SimDataset:
    """Parse a dataset file; malformed lines raise DatasetError with the line number."""
    ds = SimDataset([], [], [], [], {})
    last_t = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["type"]
                if kind == "meta":
                    ds.meta = {k: v for k, v in rec.items() if k != "type"}
                    continue
                t = float(rec["t"])
                if not np.isfinite(t):
                    raise ValueError("non-finite timestamp")
                if kind in last_t and t <= last_t[kind]:
                    raise ValueError(f"{kind} timestamps not strictly increasing")
                last_t[kind] = t
                if kind == "imu":
                    gyro, accel = np.array(rec["gyro"], float), np.array(rec["accel"], float)
                    if gyro.shape != (3,) or accel.shape != (3,):
                        raise ValueError("imu record needs 3-vectors")
                    ds.imu.append(ImuRecord(t, gyro, accel))
                elif kind == "radar":
                    truth = rec.get("truth") or [None] * len(rec["points"])
                    pts = [_parse_point(r, tr) for r, tr in zip(rec["points"], truth)]
                    ds.radar.append(radar.RadarScan(t, pts))
                elif kind == "baro":
                    ds.baro.append(BaroRecord(t, float(rec["pressure"])))
                elif kind == "truth":
                    R = lie.from_quaternion(rec["q"])
                    ds.truth.append(TruthSample(t, R, np.array(rec["p"], float), np.array(rec["v"], float),
                                                np.zeros(3), np.array(rec.get("omega", [0, 0, 0]), float)))
                else:
                    raise ValueError(f"unknown record type {kind!r}")
            except (KeyError, ValueError, TypeError, IndexError) as exc:
                raise DatasetError(f"malformed record: {exc}", lineno) from None
    return ds
