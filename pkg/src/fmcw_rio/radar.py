"""FMCW chirp configurations and the deterministic radar measurement relations.

Range, Doppler and angle-of-arrival phases are produced by FFTs, so every
measured value sits on a bin grid.  This module holds the chirp tables, the
signal-to-quantity conversions, the phase/bearing maps, bin quantization and
Doppler aliasing.  Functions are written against numpy so they broadcast over
arrays of points.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np
import yaml

from .errors import ConfigError, DomainError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChirpConfig:
    """Summary-level description of a chirp configuration.

    Maxima, resolutions and FFT sizes are what the rest of the package needs.
    The raw chirp fields (slope, duration, chirps per frame, max beat
    frequency) are optional and only used by the signal relations.
    Resolutions for azimuth/elevation are kept in degrees, as tabulated.
    """

    name: str
    carrier_frequency: float
    max_range: float
    max_doppler: float
    range_resolution: float
    doppler_resolution: float
    azimuth_resolution: float
    elevation_resolution: float
    fft_bins_range: int
    fft_bins_doppler: int
    fft_bins_phase: int
    chirp_slope: Optional[float] = None
    chirp_duration: Optional[float] = None
    chirps_per_frame: Optional[int] = None
    max_beat_frequency: Optional[float] = None

    def __post_init__(self):
        validate_config(self)

    @property
    def wavelength(self) -> float:
        # carrier only; summary-level configs carry no bandwidth
        return SPEED_OF_LIGHT / self.carrier_frequency

    def has_raw_chirp(self) -> bool:
        return self.chirp_slope is not None and self.chirp_duration is not None


class DerivedRadarProperties(NamedTuple):
    bin_width_range: float
    bin_width_doppler: float
    bin_width_phase: float


class SignalQuantities(NamedTuple):
    beat_frequency: float
    interchirp_phase_shift: float


class AoaPhases(NamedTuple):
    w_y: float
    w_z: float


@dataclass
class RadarPoint:
    range: float
    radial_speed: float
    phases: AoaPhases
    snr: Optional[float] = None
    # simulator-only truth annotations
    truth_range: Optional[float] = None
    truth_radial_speed: Optional[float] = None
    truth_phases: Optional[AoaPhases] = None
    aliased: bool = False


@dataclass
class RadarScan:
    timestamp: float  # mid-chirp time
    points: List[RadarPoint] = dataclasses.field(default_factory=list)

    def arrays(self):
        """(range, radial_speed, w_y, w_z) as float arrays."""
        if not self.points:
            empty = np.zeros(0)
            return empty, empty, empty, empty
        a = np.array([(p.range, p.radial_speed, p.phases[0], p.phases[1]) for p in self.points])
        return a[:, 0], a[:, 1], a[:, 2], a[:, 3]


def _is_pow2(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 2 and (n & (n - 1)) == 0


def validate_config(cfg: ChirpConfig) -> None:
    for field in ("carrier_frequency", "max_range", "max_doppler", "range_resolution",
                  "doppler_resolution", "azimuth_resolution", "elevation_resolution"):
        value = getattr(cfg, field)
        if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
            raise ConfigError(f"{field} must be a positive finite number, got {value!r}", field)
    for field in ("fft_bins_range", "fft_bins_doppler", "fft_bins_phase"):
        value = getattr(cfg, field)
        if not _is_pow2(value):
            raise ConfigError(f"{field} must be a power of two >= 2, got {value!r}", field)
    for field in ("chirp_slope", "chirp_duration", "chirps_per_frame", "max_beat_frequency"):
        value = getattr(cfg, field)
        if value is not None and (not math.isfinite(value) or value <= 0):
            raise ConfigError(f"{field} must be positive when given, got {value!r}", field)

    if cfg.chirp_duration is not None:
        checks = {"max_doppler": (cfg.wavelength / (4.0 * cfg.chirp_duration), cfg.max_doppler)}
        if cfg.chirps_per_frame is not None:
            checks["doppler_resolution"] = (
                cfg.wavelength / (2.0 * cfg.chirps_per_frame * cfg.chirp_duration),
                cfg.doppler_resolution,
            )
        if cfg.chirp_slope is not None:
            checks["range_resolution"] = (
                SPEED_OF_LIGHT / (2.0 * cfg.chirp_slope * cfg.chirp_duration),
                cfg.range_resolution,
            )
            if cfg.max_beat_frequency is not None:
                checks["max_range"] = (
                    cfg.max_beat_frequency * SPEED_OF_LIGHT / (2.0 * cfg.chirp_slope),
                    cfg.max_range,
                )
        for field, (derived, stored) in checks.items():
            if abs(derived - stored) > 0.01 * stored:
                raise ConfigError(
                    f"{field}: raw chirp fields give {derived:.6g}, table says {stored:.6g}", field
                )


def derive_properties(cfg: ChirpConfig) -> DerivedRadarProperties:
    """FFT bin widths in measurement units (m, m/s, rad)."""
    validate_config(cfg)
    return DerivedRadarProperties(
        bin_width_range=cfg.max_range / cfg.fft_bins_range,
        bin_width_doppler=2.0 * cfg.max_doppler / cfg.fft_bins_doppler,
        bin_width_phase=2.0 * math.pi / cfg.fft_bins_phase,
    )


def _raw_chirp(cfg: ChirpConfig, *names: str):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"config {cfg.name!r} lacks raw chirp field(s) {missing}", missing[0])


def range_from_beat(beat_frequency, cfg: ChirpConfig):
    """d = f_b c / (2 S)."""
    _raw_chirp(cfg, "chirp_slope")
    if np.any(np.asarray(beat_frequency) < 0):
        raise DomainError("beat frequency must be non-negative")
    return np.asarray(beat_frequency) * SPEED_OF_LIGHT / (2.0 * cfg.chirp_slope)


def doppler_from_phase(phase_shift, cfg: ChirpConfig, wavelength: Optional[float] = None):
    """v_r = lambda * dphi / (4 pi T_c)."""
    _raw_chirp(cfg, "chirp_duration")
    if np.any(np.abs(phase_shift) > math.pi):
        raise DomainError("inter-chirp phase shift must lie in [-pi, pi]")
    lam = cfg.wavelength if wavelength is None else wavelength
    return lam * np.asarray(phase_shift) / (4.0 * math.pi * cfg.chirp_duration)


def signal_quantities(range_m, radial_speed, cfg: ChirpConfig) -> SignalQuantities:
    """Inverse of range_from_beat/doppler_from_phase."""
    _raw_chirp(cfg, "chirp_slope", "chirp_duration")
    f_b = 2.0 * cfg.chirp_slope * range_m / SPEED_OF_LIGHT
    dphi = 4.0 * math.pi * cfg.chirp_duration * radial_speed / cfg.wavelength
    return SignalQuantities(f_b, dphi)


def angles_to_phases(azimuth, elevation):
    """Horizontal/vertical antenna phase shifts for a direction (radians)."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    if np.any(np.abs(az) >= math.pi / 2) or np.any(np.abs(el) >= math.pi / 2):
        raise DomainError("azimuth and elevation must lie strictly inside (-90, 90) deg")
    w_y = math.pi * np.sin(az) * np.cos(el)
    w_z = math.pi * np.sin(el)
    if w_y.ndim == 0:
        return AoaPhases(float(w_y), float(w_z))
    return AoaPhases(w_y, w_z)


def angles_to_bearing(azimuth, elevation) -> np.ndarray:
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    return np.stack([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)], axis=-1)


def bearing_to_angles(mu):
    mu = np.asarray(mu, dtype=float)
    return np.arctan2(mu[..., 1], mu[..., 0]), np.arcsin(np.clip(mu[..., 2], -1.0, 1.0))


def phases_to_bearing(w_y, w_z=None) -> np.ndarray:
    """Unit bearing from measured phases; shape (..., 3).

    Accepts an ``AoaPhases`` or the two phase arrays.
    """
    if w_z is None:
        w_y, w_z = w_y
    w_y = np.asarray(w_y, dtype=float)
    w_z = np.asarray(w_z, dtype=float)
    arg = 1.0 - (w_y * w_y + w_z * w_z) / (math.pi * math.pi)
    if np.any(arg < 0.0):
        raise DomainError("phase pair outside the realizable disc w_y^2 + w_z^2 <= pi^2")
    return np.stack([np.sqrt(arg), w_y / math.pi, w_z / math.pi], axis=-1)


def bearing_to_phases(mu) -> AoaPhases:
    mu = np.asarray(mu, dtype=float)
    return AoaPhases(math.pi * mu[..., 1], math.pi * mu[..., 2])


def radial_speed(mu, v_radar):
    """Radial speed of a static target seen from a radar moving at v_radar."""
    return -np.einsum("...i,...i->...", np.asarray(mu, float), np.asarray(v_radar, float))


def target_position(mu, d):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("range must be non-negative")
    return np.asarray(mu, dtype=float) * d[..., None]


def quantize_to_bin(value, bin_width, offset=0.0):
    """Snap to the nearest center of the grid ``offset + k * bin_width``.

    Exact half-way values go to the lower center.
    """
    if bin_width <= 0:
        raise DomainError("bin width must be positive")
    k = np.ceil((np.asarray(value, dtype=float) - offset) / bin_width - 0.5)
    out = offset + k * bin_width
    return float(out) if np.ndim(out) == 0 else out


def alias_wrap(v_true, max_doppler):
    """Wrap radial speed into [-max, max); returns (measured, aliased)."""
    if max_doppler <= 0:
        raise DomainError("max_doppler must be positive")
    v = np.asarray(v_true, dtype=float)
    inside = (v >= -max_doppler) & (v < max_doppler)
    wrapped = np.mod(v + max_doppler, 2.0 * max_doppler) - max_doppler
    out = np.where(inside, v, wrapped)
    if out.ndim == 0:
        return float(out), bool(not inside)
    return out, ~inside


def quantize_range(d, cfg: ChirpConfig):
    width = cfg.max_range / cfg.fft_bins_range
    q = quantize_to_bin(d, width, 0.5 * width)
    return np.clip(q, 0.5 * width, cfg.max_range - 0.5 * width)


def quantize_doppler(v, cfg: ChirpConfig):
    """Quantize an already-wrapped radial speed onto the zero-centered grid."""
    width = 2.0 * cfg.max_doppler / cfg.fft_bins_doppler
    q = np.asarray(quantize_to_bin(v, width, 0.0))
    # rounding up past +max lands on the -max bin, as FFT indices do
    q = np.where(q >= cfg.max_doppler - 1e-12 * cfg.max_doppler, q - 2.0 * cfg.max_doppler, q)
    return float(q) if q.ndim == 0 else q


def quantize_phase(w, cfg: ChirpConfig):
    width = 2.0 * math.pi / cfg.fft_bins_phase
    q = np.asarray(quantize_to_bin(w, width, 0.0))
    q = np.where(q >= math.pi - 1e-12, q - 2.0 * math.pi, q)
    return float(q) if q.ndim == 0 else q


def _preset(name, f_ghz, max_range, max_doppler, range_res, doppler_res, az_res, el_res,
            n_range, n_doppler, n_phase=64):
    # Raw chirp fields are back-solved from the table so that the chirp
    # relations reproduce it: T_c from max Doppler, S from range resolution,
    # N_c from Doppler resolution, max beat from max range.
    carrier = f_ghz * 1e9
    lam = SPEED_OF_LIGHT / carrier
    t_c = lam / (4.0 * max_doppler)
    slope = SPEED_OF_LIGHT / (2.0 * range_res * t_c)
    n_c = int(round(2.0 * max_doppler / doppler_res))
    f_b_max = 2.0 * slope * max_range / SPEED_OF_LIGHT
    return ChirpConfig(
        name=name, carrier_frequency=carrier, max_range=max_range, max_doppler=max_doppler,
        range_resolution=range_res, doppler_resolution=doppler_res,
        azimuth_resolution=az_res, elevation_resolution=el_res,
        fft_bins_range=n_range, fft_bins_doppler=n_doppler, fft_bins_phase=n_phase,
        chirp_slope=slope, chirp_duration=t_c, chirps_per_frame=n_c, max_beat_frequency=f_b_max,
    )


PRESETS = {
    "rc1": _preset("rc1", 60, 20.013, 3.995, 0.078, 0.133, 29, 29, 256, 64),
    "rc2": _preset("rc2", 60, 13.713, 3.148, 0.214, 0.049, 29, 29, 64, 128),
    "rc3": _preset("rc3", 77, 25.000, 3.879, 0.195, 0.065, 29, 38, 128, 128),
    "rc4": _preset("rc4", 77, 62.495, 2.021, 0.244, 0.126, 14, 57, 256, 32),
}


def get_preset(name: str) -> ChirpConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown chirp preset {name!r}; known: {sorted(PRESETS)}", "name") from None


_FIELDS = {f.name for f in dataclasses.fields(ChirpConfig)}
_INT_FIELDS = {"fft_bins_range", "fft_bins_doppler", "fft_bins_phase", "chirps_per_frame"}


def config_from_dict(data: dict) -> ChirpConfig:
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown chirp config field(s) {sorted(unknown)}", sorted(unknown)[0])
    missing = [f.name for f in dataclasses.fields(ChirpConfig)
               if f.default is dataclasses.MISSING and f.name not in data]
    if missing:
        raise ConfigError(f"missing chirp config field(s) {missing}", missing[0])
    kwargs = {}
    for key, value in data.items():
        if key in _INT_FIELDS and value is not None:
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{key} must be an integer, got {value!r}", key)
            value = int(value)
        elif key != "name" and value is not None:
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be numeric, got {value!r}", key) from None
        kwargs[key] = value
    return ChirpConfig(**kwargs)


def config_to_dict(cfg: ChirpConfig) -> dict:
    return {k: v for k, v in dataclasses.asdict(cfg).items() if v is not None}


def load_chirp_config(source) -> ChirpConfig:
    """Load a preset name (rc1..rc4) or a YAML file of chirp fields."""
    if isinstance(source, ChirpConfig):
        return source
    text = str(source)
    if text.lower() in PRESETS:
        return get_preset(text)
    path = Path(text)
    if not path.exists():
        raise ConfigError(f"chirp config {text!r} is neither a preset nor a file", "name")
    data = yaml.safe_load(path.read_text())
    if isinstance(data, dict) and "chirp" in data:
        data = data["chirp"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of chirp fields", "name")
    data.setdefault("name", path.stem)
    return config_from_dict(data)
