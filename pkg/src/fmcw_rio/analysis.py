"""Simulation studies over the angular field of view.

Grids are rectangular in (azimuth, elevation) degrees, row-major with
elevation as the outer index. Velocities are given in the radar frame.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import yaml

from . import noise, radar
from .errors import ConfigError, DomainError
from .lie import from_rpy
from .radar import ChirpConfig


@dataclass
class GridResult:
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray
    fields: Dict[str, np.ndarray]  # each (n_el, n_az)
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.elevation_deg.size, self.azimuth_deg.size

    def write_csv(self, path) -> None:
        names = list(self.fields)
        with Path(path).open("w") as fh:
            fh.write(",".join(["azimuth_deg", "elevation_deg"] + names) + "\n")
            for i, el in enumerate(self.elevation_deg):
                for j, az in enumerate(self.azimuth_deg):
                    vals = ["%.9g" % self.fields[n][i, j] for n in names]
                    fh.write(",".join(["%g" % az, "%g" % el] + vals) + "\n")


def angle_axis(limit_deg: float, spacing_deg: float) -> np.ndarray:
    """Symmetric axis -limit..limit; exactly antisymmetric so sign flips map cells onto cells."""
    if spacing_deg <= 0:
        raise ConfigError("grid spacing must be positive", "spacing")
    if not 0 < limit_deg < 90:
        raise ConfigError("grid limit must lie in (0, 90) deg", "limit")
    n = int(math.floor(limit_deg / spacing_deg + 1e-9))
    return np.arange(-n, n + 1) * spacing_deg


def grid_phases(az_deg, el_deg):
    A, E = np.meshgrid(np.radians(az_deg), np.radians(el_deg))
    return radar.angles_to_phases(A, E)


def _velocity(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != 3 or not np.all(np.isfinite(v)):
        raise ConfigError("velocity must be three finite numbers", "velocity")
    return v


# ----------------------------------------------------------------- Doppler error histogram


def noise_sim(cfg: ChirpConfig, speed: float, samples: int = 100_000, seed: int = 0,
              fov_deg: float = 60.0, bins: int = 101) -> dict:
    """Doppler residual errors from quantized measurements at a forward ego-velocity.

    Directions are uniform in azimuth and elevation over the FOV. Each sample
    quantizes the true phases and the wrapped radial speed, then forms the
    residual against the true velocity.
    """
    if speed < 0 or not math.isfinite(speed):
        raise DomainError("speed must be non-negative")
    if samples < 2:
        raise ConfigError("need at least two samples", "samples")
    rng = np.random.default_rng(seed)
    fov = math.radians(fov_deg)
    az = rng.uniform(-fov, fov, samples)
    el = rng.uniform(-fov, fov, samples)
    v = np.array([speed, 0.0, 0.0])
    w = radar.angles_to_phases(az, el)
    v_true = radar.radial_speed(radar.angles_to_bearing(az, el), v)
    v_meas = radar.quantize_doppler(radar.alias_wrap(v_true, cfg.max_doppler)[0], cfg)
    wy = radar.quantize_phase(w.w_y, cfg)
    wz = radar.quantize_phase(w.w_z, cfg)
    mu = radar.phases_to_bearing(wy, wz)
    err = -(mu @ v) - v_meas

    n = noise.radar_noise(cfg)
    ok = noise.valid_phase_mask(wy, wz)
    var = noise.doppler_residual_variance(mu[ok], v, n.doppler,
                                          noise.bearing_covariance(wy[ok], wz[ok], n.phase))
    predicted = float(math.sqrt(np.mean(var)))
    mean, std = float(err.mean()), float(err.std(ddof=1))

    half = max(4.0 * std, n.doppler.bin_width, 1e-9)
    counts, edges = np.histogram(err, bins=bins, range=(-half, half))
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    density = counts / (samples * width)
    if std > 0:
        pdf = np.exp(-0.5 * ((centers - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi))
    else:
        pdf = np.zeros_like(centers)
    return {
        "errors": err,
        "histogram": {"center": centers, "count": counts, "density": density, "gaussian": pdf},
        "summary": {
            "config": cfg.name, "speed": speed, "samples": samples, "seed": seed,
            "doppler_bin_width": n.doppler.bin_width, "mean": mean, "std": std,
            "predicted_std": predicted,
            "fraction_beyond_half_bin": float(np.mean(np.abs(err) > 0.5 * n.doppler.bin_width)),
        },
    }


def write_histogram_csv(hist: dict, path) -> None:
    with Path(path).open("w") as fh:
        fh.write("error_mps,count,density,gaussian_pdf\n")
        for c, n, d, g in zip(hist["center"], hist["count"], hist["density"], hist["gaussian"]):
            fh.write("%.9g,%d,%.9g,%.9g\n" % (c, n, d, g))


# ------------------------------------------------------------ linearization error grid


def approx_error(cfg: ChirpConfig, velocity, spacing_deg: float = 1.0, limit_deg: float = 60.0,
                 samples: int = 100_000, seed: int = 0, workers: int = 4) -> GridResult:
    """Per cell, |MC std - first-order std| of the Doppler residual.

    All cells share one set of unit noise draws. The azimuth phase noise is
    mirrored within the set, which keeps the grid symmetric under an azimuth
    flip for boresight velocities.
    """
    v = _velocity(velocity)
    if samples < 2:
        raise ConfigError("need at least two samples", "samples")
    az = angle_axis(limit_deg, spacing_deg)
    el = angle_axis(limit_deg, spacing_deg)
    w = grid_phases(az, el)
    lin = noise.first_order_doppler_std(w.w_y, w.w_z, v, cfg)

    rng = np.random.default_rng(seed)
    half = rng.uniform(-0.5, 0.5, (3, (samples + 1) // 2))
    mirrored = half.copy()
    mirrored[0] = -mirrored[0]
    unit = np.concatenate([half, mirrored], axis=1)[:, :samples]

    mc = np.zeros_like(lin)

    def row(i):
        for j in range(az.size):
            mc[i, j] = noise.mc_doppler_std(w.w_y[i, j], w.w_z[i, j], v, cfg, noise=unit)

    if np.any(v != 0):
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            list(pool.map(row, range(el.size)))
    else:
        mc = lin.copy()
    diff = np.abs(mc - lin)
    meta = {"config": cfg.name, "velocity": v.tolist(), "samples": samples, "seed": seed,
            "max_abs_diff": float(diff.max()), "p80_abs_diff": float(np.percentile(diff, 80)),
            "fraction_below_1mm": float(np.mean(diff < 1e-3))}
    return GridResult(az, el, {"mc_std": mc, "linear_std": lin, "abs_diff": diff}, meta)


# ------------------------------------------------------------- equal-contribution contour


def angle_noise_contribution(cfg: ChirpConfig, velocity, az_deg, el_deg) -> np.ndarray:
    """sqrt(v^T Sigma_mu v) per cell; infinite where the bearing is not linearizable."""
    v = _velocity(velocity)
    w = grid_phases(az_deg, el_deg)
    ok = noise.valid_phase_mask(w.w_y, w.w_z)
    out = np.full(ok.shape, np.inf)
    cov = noise.bearing_covariance(w.w_y[ok], w.w_z[ok], noise.radar_noise(cfg).phase)
    out[ok] = np.sqrt(np.maximum(np.einsum("i,nij,j->n", v, cov, v), 0.0))
    return out


def _boundary(region, valid):
    """Region cells with a valid 4-neighbour outside the region."""
    pad = np.pad(valid & ~region, 1, constant_values=False)
    outside = pad[:-2, 1:-1] | pad[2:, 1:-1] | pad[1:-1, :-2] | pad[1:-1, 2:]
    return region & outside


def contour(cfg: ChirpConfig, velocity, spacing_deg: float = 1.0, limit_deg: float = 89.0) -> GridResult:
    """Cells where the Doppler quantization noise dominates the angle noise.

    The region is contribution < sigma_vr; its boundary is the equal-noise
    level set. Summary statistics: equivalent angular radius sqrt(area / pi)
    and the region centroid.
    """
    v = _velocity(velocity)
    az = angle_axis(limit_deg, spacing_deg)
    el = angle_axis(limit_deg, spacing_deg)
    contrib = angle_noise_contribution(cfg, v, az, el)
    sigma_vr = noise.radar_noise(cfg).doppler.std_dev
    region = contrib < sigma_vr
    edge = _boundary(region, np.isfinite(contrib))
    A, E = np.meshgrid(az, el)
    n = int(region.sum())
    meta = {
        "config": cfg.name, "velocity": v.tolist(), "sigma_doppler": sigma_vr,
        "region_cells": n, "total_cells": int(region.size),
        "level_set_exists": bool(edge.any()),
        "equivalent_radius_deg": math.sqrt(n * spacing_deg**2 / math.pi),
        "centroid_deg": [float(A[region].mean()), float(E[region].mean())] if n else None,
    }
    return GridResult(az, el, {"angle_contribution": contrib, "doppler_dominant": region.astype(float),
                               "level_set": edge.astype(float)}, meta)


# ------------------------------------------------------------------ aliasing region


def alias_region(cfg: ChirpConfig, velocity, spacing_deg: float = 1.0, limit_deg: float = 60.0) -> GridResult:
    v = _velocity(velocity)
    az = angle_axis(limit_deg, spacing_deg)
    el = angle_axis(limit_deg, spacing_deg)
    A, E = np.meshgrid(np.radians(az), np.radians(el))
    mu = radar.angles_to_bearing(A, E)
    vr = radar.radial_speed(mu, v)
    aliased = np.asarray(radar.alias_wrap(vr, cfg.max_doppler)[1], dtype=bool)
    meta = {"config": cfg.name, "velocity": v.tolist(), "max_doppler": cfg.max_doppler,
            "aliased_fraction": float(aliased.mean())}
    return GridResult(az, el, {"abs_radial_speed": np.abs(vr), "aliased": aliased.astype(float)}, meta)


# ------------------------------------------------------------------------ scenarios


def scan_counts(ds):
    nominal = np.array([sum(not p.aliased for p in s.points) for s in ds.radar])
    aliased = np.array([sum(p.aliased for p in s.points) for s in ds.radar])
    return nominal, aliased


def longest_zero_run(times, counts) -> float:
    """Longest time span over which consecutive scans all have zero count."""
    best, start = 0.0, None
    for t, c in zip(times, counts):
        if c == 0:
            start = t if start is None else start
            best = max(best, t - start)
        else:
            start = None
    return best


def synth_summary(ds) -> dict:
    nominal, aliased = scan_counts(ds)
    times = [s.timestamp for s in ds.radar]

    def ms(x):
        return [float(x.mean()), float(x.std())] if x.size else [0.0, 0.0]

    return {
        "duration": float(ds.truth[-1].t - ds.truth[0].t) if ds.truth else 0.0,
        "scans": len(ds.radar),
        "nominal_points": ms(nominal),
        "aliased_points": ms(aliased),
        "longest_nominal_gap": longest_zero_run(times, nominal),
    }


DEFAULT_SCENARIO = {
    "seed": 0,
    "chirp": "rc1",
    "trajectory": {"kind": "helix", "duration": 60.0, "speed": 2.0, "yaw_mode": "aligned"},
    "environment": {"kind": "sphere", "count": 200, "radius": 15.0, "center": [0.0, 3.0, 0.0]},
    "rig": {},
}


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_scenario(source=None) -> dict:
    if source is None:
        return dict(DEFAULT_SCENARIO)
    if isinstance(source, dict):
        data = source
    else:
        try:
            data = yaml.safe_load(Path(source).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read scenario file: {exc}", "config") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in scenario file: {exc}", "config") from None
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping", "config")
    unknown = set(data) - set(DEFAULT_SCENARIO)
    if unknown:
        raise ConfigError(f"unknown scenario sections {sorted(unknown)}", sorted(unknown)[0])
    merged = _merge(DEFAULT_SCENARIO, data)
    env = data.get("environment")
    if isinstance(env, dict) and env.get("kind", "sphere") != DEFAULT_SCENARIO["environment"]["kind"]:
        # another environment kind shares none of the sphere defaults
        merged["environment"] = dict(env)
    return merged


def build_scenario(scenario: dict, seed: Optional[int] = None):
    """(TrajectorySpec, Environment, ChirpConfig, RigSpec, seed) from a scenario dict."""
    from .sim import synth
    from .sim.trajectory import TrajectorySpec

    seed = int(scenario.get("seed", 0) if seed is None else seed)
    chirp = scenario["chirp"]
    cfg = radar.load_chirp_config(chirp) if not isinstance(chirp, dict) else radar.config_from_dict(chirp)

    tr = dict(scenario["trajectory"])
    for key in ("origin", "direction"):
        if key in tr:
            tr[key] = tuple(float(x) for x in tr[key])
    try:
        traj = TrajectorySpec(**tr)
    except TypeError as exc:
        raise ConfigError(f"bad trajectory section: {exc}", "trajectory") from None

    env = dict(scenario["environment"])
    kind = env.pop("kind", "sphere")
    env_seed = int(env.pop("seed", seed))
    if kind == "sphere":
        targets = synth.sphere_environment(int(env.pop("count", 200)), float(env.pop("radius", 15.0)),
                                           tuple(env.pop("center", (0.0, 0.0, 0.0))), seed=env_seed)
    elif kind == "box":
        targets = synth.box_environment(int(env.pop("count", 200)), env.pop("low", [-20, -20, -5]),
                                        env.pop("high", [20, 20, 10]), seed=env_seed)
    elif kind == "tunnel":
        targets = synth.tunnel_environment(float(env.pop("length", 100.0)), float(env.pop("width", 8.0)),
                                           float(env.pop("height", 6.0)), float(env.pop("density", 1.0)),
                                           float(env.pop("start", -5.0)), seed=env_seed)
    elif kind == "points":
        targets = np.asarray(env.pop("targets"), dtype=float)
    else:
        raise ConfigError(f"unknown environment kind {kind!r}", "environment.kind")
    try:
        environment = synth.Environment(targets, **env)
    except TypeError as exc:
        raise ConfigError(f"bad environment section: {exc}", "environment") from None

    rig = dict(scenario.get("rig") or {})
    if "radar_rpy_deg" in rig:
        rig["radar_rotation"] = from_rpy(*np.radians(rig.pop("radar_rpy_deg")))
    try:
        rigspec = synth.RigSpec(**rig)
    except TypeError as exc:
        raise ConfigError(f"bad rig section: {exc}", "rig") from None
    return traj, environment, cfg, rigspec, seed
